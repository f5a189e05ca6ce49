"""Acceptance criteria, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line (bypassing
pytest's capture).  ``python tests/test_acceptance.py`` runs them all
without pytest.
"""
import math
import time

import numpy as np
import pytest
from scipy import integrate

from nakano.constructions import FalsifierConfig, falsify_scan, plateau_cutoff, prekopa_pushforward
from nakano.diffops import curvature_tensor, d0, d_star, hessian
from nakano.fields import GridSpec, MatrixField, OneForm, ScalarField, SectionField
from nakano.positivity import convexity_verdict, nakano_verdict
from nakano.quadrature import QuadratureRule, inner_forms, inner_sections
from nakano.solver import bochner_residual, check_optimal_estimate, minimal_solution, solve_potential


def _box(lo, hi, h, n=2):
    return GridSpec.uniform(lo, hi, int(round((hi - lo) / h)) + 1, n)


def _rotation(rng):
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    return q


# 1 ---------------------------------------------------------------------------


def criterion_1():
    rng = np.random.default_rng(15)
    t0 = time.perf_counter()
    worst, orders = 0.0, []
    for _ in range(20):
        Q = _rotation(rng)
        A = Q @ np.diag(rng.uniform(0.5, 1.5, 2)) @ Q.T
        eps = rng.uniform(-0.1, 0.1, 2)
        k = rng.uniform(0.5, 1.5, 2)
        errs = []
        for h in (4e-2, 2e-2, 1e-2):
            grid = _box(-1.0, 1.0, h)
            x, y = grid.mesh
            s, c = np.sin(k[0] * x + k[1] * y), np.cos(k[0] * x - k[1] * y)
            phi = 0.5 * (A[0, 0] * x * x + 2 * A[0, 1] * x * y + A[1, 1] * y * y) + eps[0] * s + eps[1] * c
            H = np.empty(grid.shape + (2, 2))
            H[..., 0, 0] = A[0, 0] - k[0] ** 2 * (eps[0] * s + eps[1] * c)
            H[..., 1, 1] = A[1, 1] - k[1] ** 2 * (eps[0] * s + eps[1] * c)
            H[..., 0, 1] = H[..., 1, 0] = A[0, 1] - k[0] * k[1] * (eps[0] * s - eps[1] * c)
            theta = curvature_tensor(MatrixField.from_weight(ScalarField(grid, phi))).blocks[..., 0, 0]
            err = float(np.abs(theta - H).max())
            errs.append(err)
            worst = max(worst, err / (h * h * (1.0 + np.abs(H).max())))
        orders.append(math.log2(errs[1] / errs[2]))
    dt = time.perf_counter() - t0
    ok = worst <= 5.0 and min(orders) >= 1.8 and dt < 10
    return ok, f"max err/(h^2 scale)={worst:.3f} <= 5, min order={min(orders):.3f} >= 1.8, {dt:.1f}s < 10s"


# 2 ---------------------------------------------------------------------------


def _bochner_case(rng, r):
    B = rng.normal(size=(r, r, 3)) * 0.5
    C = rng.normal(size=(r, 2, 3))
    kk = rng.uniform(0.5, 2.0, 2)
    recs = []
    for h in (2e-2, 1e-2):
        grid = _box(-1.0, 1.0, h)
        x, y = grid.mesh
        basis = (np.ones_like(x), np.sin(kk[0] * x), np.cos(kk[1] * y))
        Bx = np.moveaxis(sum(B[..., m, None, None] * basis[m] for m in range(3)), (0, 1), (-2, -1))
        g = MatrixField(grid, Bx @ np.swapaxes(Bx, -1, -2) + np.eye(r))
        chi = plateau_cutoff((0.0, 0.0), 0.8, grid).values
        comps = np.stack([
            np.stack([chi * (C[a, i, 0] + C[a, i, 1] * x + C[a, i, 2] * np.sin(2 * y)) for a in range(r)], -1)
            for i in range(2)
        ])
        recs.append(bochner_residual(OneForm(grid, comps), g))
    return recs


def criterion_2():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    factors, rels = [], []
    for trial in range(10):
        coarse, fine = _bochner_case(rng, (1, 2, 3)[trial % 3])
        factors.append(coarse.residual / fine.residual)
        rels.append(fine.relative)
    dt = time.perf_counter() - t0
    ok = min(factors) >= 3 and max(rels) <= 1e-3 and dt < 30
    return ok, f"min factor={min(factors):.3f} >= 3, max rel={max(rels):.2e} <= 1e-3, {dt:.1f}s < 30s"


# 3 ---------------------------------------------------------------------------


def _convex_weights(rng, grid):
    x, y = grid.mesh
    a, b = rng.uniform(0.2, 1.0, 2)
    c = rng.uniform(-0.5, 0.5, 2)
    return [
        a * (x - c[0]) ** 2 + b * (y - c[1]) ** 2,
        a * np.logaddexp(x, -y) + b * y ** 2,
        a * np.sqrt(1 + (x - c[0]) ** 2 + (y - c[1]) ** 2),
        0.1 * a * (x ** 4 + y ** 4) + b * x * 0.3,
        np.zeros_like(x) + a,
    ]


def _metrics(rng, grid):
    out = []
    for phi in _convex_weights(rng, grid):
        out.append(MatrixField.from_weight(ScalarField(grid, phi)))
    w = _convex_weights(rng, grid)
    for i in range(5):
        out.append(MatrixField.diagonal([ScalarField(grid, w[i]), ScalarField(grid, w[(i + 2) % 5])]))
    return out


def criterion_3():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    grid = _box(-3.0, 3.0, 0.05)
    x, y = grid.mesh
    rule = QuadratureRule(grid)
    metrics = _metrics(rng, grid)
    cases = conclusive = failures = 0
    worst = 0.0
    for g in metrics:
        for _ in range(5):
            c = rng.uniform(-0.5, 0.5, 2)
            L = rng.normal(size=(2, 2))
            A = L @ L.T + rng.uniform(5.0, 8.0) * np.eye(2)
            dx, dy = x - c[0], y - c[1]
            psi = A[0, 0] * dx * dx + 2 * A[0, 1] * dx * dy + A[1, 1] * dy * dy + 0.2 * dx ** 4
            center = rng.uniform(-0.5, 0.5, 2)
            chi = plateau_cutoff(center, 1.2, grid).values
            coef = rng.normal(size=(g.r, 4))
            v = np.stack([chi * (coef[a, 0] * x + coef[a, 1] * y ** 2 + coef[a, 2] * np.sin(2 * x * y)
                                 + coef[a, 3] * np.cos(x - y)) for a in range(g.r)], -1)
            f = d0(SectionField(grid, v))
            rep = check_optimal_estimate(g, ScalarField(grid, psi), f, rule)
            cases += 1
            if rep.boundary_mass <= 1e-10 * rep.rhs:
                conclusive += 1
                worst = max(worst, rep.ratio)
                failures += not rep.holds
    dt = time.perf_counter() - t0
    ok = failures == 0 and conclusive > 0 and dt < 60
    return ok, (f"{conclusive}/{cases} conclusive, {failures} failures, max lhs/rhs={worst:.4f}, "
                f"{dt:.1f}s < 60s")


# 4 ---------------------------------------------------------------------------


def _controls(grid):
    x, y = grid.mesh
    Q = np.array([[math.cos(0.7), -math.sin(0.7)], [math.sin(0.7), math.cos(0.7)]])
    d = np.stack([np.exp(-x ** 2), np.exp(-y ** 2 - x ** 4)], -1)
    rotated = np.einsum("ab,...b,cb->...ac", Q, d, Q)
    sc = (lambda v: MatrixField.from_weight(ScalarField(grid, v)))
    dg = (lambda *vs: MatrixField.diagonal([ScalarField(grid, v) for v in vs]))
    return [
        sc(x ** 2 + y ** 2),
        sc(0.5 * x ** 2 + 0.1 * y ** 4),
        sc(np.logaddexp(x, y)),
        sc(np.zeros_like(x)),
        sc(np.sqrt(1 + x ** 2 + y ** 2)),
        dg(x ** 2, y ** 2),
        dg(x ** 2 + y ** 2, np.zeros_like(x)),
        dg(np.logaddexp(x, -y), 0.3 * x ** 2),
        MatrixField.constant(grid, [[2.0, 0.5], [0.5, 1.0]]),
        MatrixField(grid, rotated),
    ]


def criterion_4():
    t0 = time.perf_counter()
    grid = _box(-1.2, 1.2, 0.025)
    x, y = grid.mesh
    cfg = FalsifierConfig(center=(0.0, 0.0), radius=1.0)
    negatives = [
        MatrixField.from_weight(ScalarField(grid, -(x ** 2 + y ** 2))),
        MatrixField.diagonal([ScalarField(grid, x ** 2), ScalarField(grid, -x ** 2)]),
    ]
    neg = [falsify_scan(g, cfg).violated_at for g in negatives]
    ctl = [falsify_scan(g, cfg).outcome for g in _controls(grid)]
    dt = time.perf_counter() - t0
    caught = all(s is not None and s <= 2.0 ** 14 for s in neg)
    clean = all(o == "not_violated" for o in ctl)
    ok = caught and clean and dt < 60
    return ok, (f"negatives violated_at={neg}, controls not_violated={sum(o == 'not_violated' for o in ctl)}/10, "
                f"{dt:.1f}s < 60s")


# 5 ---------------------------------------------------------------------------


def criterion_5():
    t0 = time.perf_counter()
    # Gaussian family, rank 2
    joint = GridSpec((-2.0, -6.0), (2.0, 6.0), (81, 481))
    x, y = joint.mesh
    gt = MatrixField(joint, np.exp(-x ** 2 - y ** 2)[..., None, None] * np.eye(2))
    g = prekopa_pushforward(gt, 1)
    xs = g.grid.mesh[0]
    gauss_err = float(np.abs(g.values - math.sqrt(math.pi) * np.exp(-xs ** 2)[..., None, None] * np.eye(2)).max())
    verdict = nakano_verdict(g).verdict

    # scalar case; the 1-D oracle integrates e^{-phi~(x, y)} over y at each x node
    joint = GridSpec((-2.0, -8.0), (2.0, 8.0), (81, 641))
    x, y = joint.mesh
    g = prekopa_pushforward(MatrixField(joint, np.exp(-(x * x + y * y + x * y))[..., None, None]), 1)
    xs = g.grid.axis(0)
    oracle = np.array([integrate.quad(lambda t, a=a: math.exp(-(a * a + t * t + a * t)), -np.inf, np.inf,
                                      epsabs=0, epsrel=1e-13)[0] for a in xs])
    oracle_err = float(np.abs(g.values[:, 0, 0] - oracle).max() / oracle.max())
    h_oracle = hessian(ScalarField(g.grid, -np.log(oracle))).values[..., 0, 0]
    h_out = hessian(ScalarField(g.grid, -np.log(g.values[:, 0, 0]))).values[..., 0, 0]
    schur = 2.0 - 1.0 * 1.0 / 2.0
    oracle_ok = oracle_err <= 1e-9 and float(np.abs(h_oracle - schur).max()) <= 1e-3
    hess_err = float(np.abs(h_out - schur).max())
    dt = time.perf_counter() - t0
    ok = gauss_err <= 1e-6 and verdict == "semipositive" and oracle_ok and hess_err <= 1e-3 and dt < 30
    return ok, (f"gaussian err={gauss_err:.2e} <= 1e-6, verdict={verdict}, oracle rel err={oracle_err:.1e}, "
                f"|H-1.5|={hess_err:.2e} <= 1e-3, {dt:.1f}s < 30s")


# 6 ---------------------------------------------------------------------------


def _adjoint_residual(h, r, coef):
    grid = _box(-1.0, 1.0, h)
    x, y = grid.mesh
    B = np.moveaxis(coef["B"][..., 0, None, None] + coef["B"][..., 1, None, None] * np.sin(x + 0.5 * y),
                    (0, 1), (-2, -1))
    g = MatrixField(grid, B @ np.swapaxes(B, -1, -2) + np.eye(r))
    u = SectionField(grid, np.stack([np.cos(coef["u"][a] * x) * np.exp(0.3 * y) for a in range(r)], -1))
    chi = plateau_cutoff((0.0, 0.0), 0.9, grid).values
    alpha = OneForm(grid, np.stack([
        np.stack([chi * np.sin(coef["a"][i, a] * x + y) for a in range(r)], -1) for i in range(2)
    ]))
    rule = QuadratureRule(grid)
    return abs(inner_forms(d0(u), alpha, g, None, rule) - inner_sections(u, d_star(alpha, g), g, None, rule))


def criterion_6():
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    factors = []
    for r in (1, 2, 3):
        coef = {"B": rng.normal(size=(r, r, 2)) * 0.5, "u": rng.uniform(0.5, 2, r),
                "a": rng.uniform(0.5, 2, (2, r))}
        e = [_adjoint_residual(h, r, coef) for h in (4e-2, 2e-2, 1e-2)]
        factors += [e[0] / e[1], e[1] / e[2]]

    grid = _box(-2.0, 2.0, 0.05)
    x, y = grid.mesh
    rule = QuadratureRule(grid)
    beaten = trials = 0
    for _ in range(5):
        r = int(rng.integers(1, 4))
        L = rng.normal(size=(r, r))
        g = MatrixField(grid, (L @ L.T + np.eye(r)) * np.exp(0.2 * x)[..., None, None])
        psi = ScalarField(grid, rng.uniform(0.5, 2) * (x ** 2 + y ** 2))
        chi = plateau_cutoff(rng.uniform(-0.5, 0.5, 2), 1.0, grid).values
        f = d0(SectionField(grid, np.stack([chi * np.sin(rng.normal() * x + y) for _ in range(r)], -1)))
        u = minimal_solution(solve_potential(f), g, psi, rule)
        base = inner_sections(u, u, g, psi, rule)
        for _ in range(100):
            c = rng.normal(size=r) * 10.0 ** rng.uniform(-3, 1)
            shifted = SectionField(grid, u.values + c)
            trials += 1
            beaten += inner_sections(shifted, shifted, g, psi, rule) > base
    dt = time.perf_counter() - t0
    # second order is read as: each halving of h cuts the residual by >= 3
    ok = min(factors) >= 3.0 and beaten == trials and dt < 20
    return ok, (f"min halving factor={min(factors):.3f} >= 3 (observed order {math.log2(min(factors)):.3f}), "
                f"minimal beats {beaten}/{trials} shifts, {dt:.1f}s < 20s")


# 7 ---------------------------------------------------------------------------


def _random_phi(rng, kind, grid):
    x, y = grid.mesh
    if kind == "semidefinite":
        a, b = rng.uniform(0.3, 1.5), rng.uniform(0.0, 0.3)
        t = (x, y)[int(rng.integers(2))]
        return a * t * t + b * t ** 4 + rng.normal() * t
    Q = _rotation(rng)
    lam = rng.uniform(0.5, 2.0, 2)
    if kind == "indefinite":
        lam[int(rng.integers(2))] *= -1
    A = Q @ np.diag(lam) @ Q.T
    eps = rng.uniform(-0.05, 0.05)
    return 0.5 * (A[0, 0] * x * x + 2 * A[0, 1] * x * y + A[1, 1] * y * y) + eps * np.sin(x + 2 * y)


def criterion_7():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    grid = _box(-1.0, 1.0, 0.05)
    kinds = ["indefinite", "semidefinite", "definite"]
    agree, seen = 0, {k: 0 for k in kinds}
    for i in range(50):
        kind = kinds[i % 3]
        phi = ScalarField(grid, _random_phi(rng, kind, grid))
        v_convex = convexity_verdict(phi).verdict
        v_nakano = nakano_verdict(MatrixField.from_weight(phi)).verdict
        agree += v_convex == v_nakano
        seen[kind] += 1
    dt = time.perf_counter() - t0
    ok = agree == 50 and dt < 20
    return ok, f"agreement {agree}/50 over {seen}, {dt:.1f}s < 20s"


CRITERIA = {
    1: ("curvature oracle equivalence", criterion_1),
    2: ("Bochner identity", criterion_2),
    3: ("optimal estimate soundness", criterion_3),
    4: ("falsifier completeness on known negatives", criterion_4),
    5: ("Prekopa pipeline", criterion_5),
    6: ("adjointness and projection invariants", criterion_6),
    7: ("r=1 consistency", criterion_7),
}


def _line(n, ok, detail):
    return f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {CRITERIA[n][0]} | {detail}"


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_acceptance(n, capsys):
    ok, detail = CRITERIA[n][1]()
    with capsys.disabled():
        print("\n" + _line(n, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    for n in sorted(CRITERIA):
        print(_line(n, *CRITERIA[n][1]()))
