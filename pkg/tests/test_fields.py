import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nakano import fieldio
from nakano.errors import (EvalError, ExprVarError, FieldFileError, GridError, NotPositiveDefinite,
                           ShapeError, SymmetryError)
from nakano.fields import (GridSpec, MatrixField, OneForm, ScalarField, SectionField, TwoForm,
                           coord_to_nearest_index, node_coords, sample_metric, sample_oneform,
                           sample_scalar, sample_section)


class TestGrid:
    def test_node_coords(self):
        assert node_coords(GridSpec.uniform(0, 1, 3, 1), (1,)) == pytest.approx([0.5])
        np.testing.assert_array_equal(node_coords(GridSpec.uniform(-1, 1, 3, 2), (0, 2)), [-1, 1])
        assert node_coords(GridSpec.uniform(0, 2, 5, 1), (3,)) == pytest.approx([1.5])

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            node_coords(GridSpec.uniform(0, 1, 3, 1), (3,))

    @pytest.mark.parametrize("kw", [dict(mins=(1.0,), maxs=(0.0,), points=(5,)),
                                    dict(mins=(0.0,), maxs=(1.0,), points=(2,)),
                                    dict(mins=(0.0, 0.0), maxs=(1.0,), points=(5, 5))])
    def test_invalid(self, kw):
        with pytest.raises(GridError):
            GridSpec(**kw)

    def test_spacing_volume(self):
        g = GridSpec((0.0, -1.0), (1.0, 1.0), (11, 5))
        assert g.spacing == pytest.approx((0.1, 0.5))
        assert g.volume == pytest.approx(2.0)
        assert g.shape == (11, 5)
        assert g.size == 55

    def test_product_split(self):
        a = GridSpec.uniform(0, 1, 5, 1)
        b = GridSpec((-2.0, 0.0), (2.0, 3.0), (7, 4))
        joint = a.product(b)
        assert joint.n == 3
        assert joint.split(1) == (a, b)

    def test_boundary_mask(self):
        m = GridSpec.uniform(0, 1, 6, 2).boundary_mask(2)
        assert m.sum() == 36 - 4
        assert not m[2, 2] and m[1, 3]

    @given(st.integers(3, 12), st.integers(3, 12), st.data())
    def test_nearest_round_trip(self, p, q, data):
        g = GridSpec((-1.5, 0.0), (2.0, 0.3), (p, q))
        idx = (data.draw(st.integers(0, p - 1)), data.draw(st.integers(0, q - 1)))
        assert coord_to_nearest_index(g, node_coords(g, idx)) == idx


class TestSampling:
    def test_scalar_values(self):
        g = GridSpec.uniform(0, 1, 3, 1)
        np.testing.assert_allclose(sample_scalar("x1^2", g).values, [0, 0.25, 1])
        assert sample_scalar("exp(x1)", GridSpec.uniform(-1, 1, 3, 1)).values[1] == 1.0

    def test_division_by_zero(self):
        with pytest.raises(EvalError):
            sample_scalar("1/x1", GridSpec.uniform(-1, 1, 3, 1))

    def test_unbound(self):
        with pytest.raises(ExprVarError):
            sample_scalar("x2", GridSpec.uniform(0, 1, 3, 1))

    def test_params_and_names(self):
        g = GridSpec.uniform(0, 1, 3, 1)
        f = sample_scalar("s*y1", g, names=["y1"], params={"s": 2.0})
        np.testing.assert_allclose(f.values, [0, 1, 2])

    def test_constant_broadcast(self):
        g = GridSpec.uniform(0, 1, 4, 2)
        assert sample_scalar("3", g).values.shape == (4, 4)

    def test_identity_metric(self):
        g = GridSpec.uniform(0, 1, 4, 2)
        m = sample_metric([["1", "0"], ["0", "1"]], g)
        np.testing.assert_array_equal(m.values, np.broadcast_to(np.eye(2), (4, 4, 2, 2)))

    def test_gaussian_metric(self):
        m = sample_metric([["exp(-x1^2)"]], GridSpec.uniform(-3, 3, 31, 1))
        assert m.r == 1 and np.all(m.values > 0)

    def test_asymmetric(self):
        with pytest.raises(SymmetryError) as info:
            sample_metric([["1", "2"], ["0", "1"]], GridSpec.uniform(0, 1, 3, 1))
        assert info.value.code == "E_SYMMETRY"

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefinite) as info:
            sample_metric([["x1"]], GridSpec.uniform(-1, 1, 5, 1))
        assert info.value.node == (0,)

    def test_not_square(self):
        with pytest.raises(ShapeError):
            sample_metric([["1", "0"]], GridSpec.uniform(0, 1, 3, 1))

    @given(st.floats(0.1, 3.0), st.floats(-0.9, 0.9))
    @settings(max_examples=30, deadline=None)
    def test_metric_min_eigen_rechecked(self, a, c):
        g = GridSpec.uniform(-1, 1, 7, 2)
        entries = [[f"{a} + x1^2", f"{c}*{a}"], [f"{c}*{a}", f"{a} + x2^2"]]
        m = sample_metric(entries, g)
        assert np.linalg.eigvalsh(m.values).min() > 1e-12

    def test_section_and_oneform(self):
        g = GridSpec.uniform(0, 1, 5, 2)
        u = sample_section(["x1", "x2", "1"], g)
        assert u.values.shape == (5, 5, 3)
        a = sample_oneform([["x1"], ["x2"]], g)
        assert a.components.shape == (2, 5, 5, 1)
        with pytest.raises(ShapeError):
            sample_oneform([["x1"]], g)


class TestFieldTypes:
    grid = GridSpec.uniform(0, 1, 4, 2)

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_reject_nonfinite(self, bad):
        v = np.zeros((4, 4))
        v[1, 2] = bad
        with pytest.raises(ValueError):
            ScalarField(self.grid, v)
        with pytest.raises(ValueError):
            SectionField(self.grid, v[..., None])
        with pytest.raises(ValueError):
            MatrixField(self.grid, v[..., None, None])
        with pytest.raises(ValueError):
            OneForm(self.grid, np.stack([v, v])[..., None])

    def test_shapes(self):
        with pytest.raises(ShapeError):
            ScalarField(self.grid, np.zeros((4, 3)))
        with pytest.raises(ShapeError):
            MatrixField(self.grid, np.zeros((4, 4, 2, 3)))
        with pytest.raises(ShapeError):
            OneForm(self.grid, np.zeros((3, 4, 4, 1)))

    def test_read_only(self):
        f = ScalarField(self.grid, np.zeros((4, 4)))
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0

    def test_constructors(self):
        phi = ScalarField(self.grid, np.full((4, 4), np.log(2.0)))
        np.testing.assert_allclose(MatrixField.from_weight(phi, 3).values[0, 0], 0.5 * np.eye(3))
        d = MatrixField.diagonal([phi, ScalarField(self.grid, np.zeros((4, 4)))])
        np.testing.assert_allclose(d.values[2, 1], np.diag([0.5, 1.0]))
        c = OneForm.constant(self.grid, [[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(c.components[1, 3, 0], [3.0, 4.0])
        t = TwoForm(GridSpec.uniform(0, 1, 4, 3), np.zeros((3, 4, 4, 4, 1)))
        assert t.pairs == ((0, 1), (0, 2), (1, 2))


class TestFieldIO:
    grid = GridSpec((-1.0, 0.0), (1.0, 2.0), (5, 4))

    def _fields(self):
        rng = np.random.default_rng(1)
        L = rng.normal(size=(5, 4, 2, 2))
        return [
            ScalarField(self.grid, rng.normal(size=(5, 4))),
            SectionField(self.grid, rng.normal(size=(5, 4, 3))),
            MatrixField(self.grid, L @ np.swapaxes(L, -1, -2)),
            OneForm(self.grid, rng.normal(size=(2, 5, 4, 2))),
        ]

    def test_round_trip(self, tmp_path):
        for k, f in enumerate(self._fields()):
            p = tmp_path / f"f{k}.bin"
            fieldio.write_field(p, f)
            back = fieldio.read_field(p)
            assert type(back) is type(f) and back.grid == f.grid
            a = f.values if hasattr(f, "values") else f.components
            b = back.values if hasattr(back, "values") else back.components
            np.testing.assert_array_equal(a, b)

    def test_header_is_first_line(self):
        blob = fieldio.dumps(self._fields()[1])
        header = blob.split(b"\n", 1)[0].decode()
        assert '"kind": "section"' in header and '"dtype": "f64"' in header

    def test_truncated_payload(self):
        blob = fieldio.dumps(self._fields()[0])
        with pytest.raises(FieldFileError):
            fieldio.loads(blob[:-8])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FieldFileError):
            fieldio.read_field(tmp_path / "none.bin")

    def test_nonfinite_payload(self):
        blob = bytearray(fieldio.dumps(self._fields()[0]))
        blob[-8:] = np.array([np.nan]).astype("<f8").tobytes()
        with pytest.raises(FieldFileError):
            fieldio.loads(bytes(blob))
