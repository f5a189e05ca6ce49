"""Numerical checks for curvature positivity of metrics on trivial bundles over boxes."""
from .constructions import (FalsifierConfig, default_config, falsifier_functional, falsify_scan,
                            plateau_cutoff, prekopa_pushforward, prekopa_verify, psi_s, seed_form)
from .diffops import curvature_tensor, d0, d1, d_star, gram_field, hessian, nakano_gram, partial
from .expr import evaluate, free_vars, parse
from .fields import (GridSpec, MatrixField, OneForm, ScalarField, SectionField, TwoForm, node_coords,
                     sample_metric, sample_scalar)
from .positivity import convexity_verdict, nakano_verdict
from .quadrature import QuadratureRule, hess_inv_pairing, inner_forms, inner_sections, integrate
from .solver import (bochner_residual, cauchy_schwarz_check, check_optimal_estimate, minimal_solution,
                     solve_potential)

__version__ = "0.1.0"
