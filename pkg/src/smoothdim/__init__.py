"""Penalized regression spline additive models with basis dimension checking."""

import os

# Everything here is small dense linear algebra (designs of a few hundred
# rows, at most ~160 columns); multi-threaded BLAS only adds contention.
# Must happen before numpy loads its BLAS backend.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

from .basis import (
    BasisSpec,
    DesignBlock,
    KnotVector,
    apply_centering_constraint,
    build_design_block,
    difference_penalty,
    eval_bspline_basis,
    place_knots,
    tensor_basis,
    tensor_penalty,
    tensor_split,
)
from .diagnostics import (
    KappaResult,
    ResmoothResult,
    kappa_test,
    knn_indices,
    phi_delta_multivariate,
    phi_delta_univariate,
    resmooth_check,
)
from .fit import (
    AssembledDesign,
    FitError,
    FittedModel,
    ModelSpec,
    assemble_design,
    criterion_score,
    edf_per_term,
    evaluate_term,
    fit,
    optimize_lambdas,
    penalized_solve,
)
from .kselect import KSearchTrace, doubling_driver, grid_search
from .simulation import KPolicy, Scenario, ScenarioResult, gen_data, mse, run_experiment, test_function

__version__ = "0.1.0"

__all__ = [
    "AssembledDesign",
    "BasisSpec",
    "DesignBlock",
    "FitError",
    "FittedModel",
    "KPolicy",
    "KSearchTrace",
    "KappaResult",
    "KnotVector",
    "ModelSpec",
    "ResmoothResult",
    "Scenario",
    "ScenarioResult",
    "apply_centering_constraint",
    "assemble_design",
    "build_design_block",
    "criterion_score",
    "difference_penalty",
    "doubling_driver",
    "edf_per_term",
    "eval_bspline_basis",
    "evaluate_term",
    "fit",
    "gen_data",
    "grid_search",
    "kappa_test",
    "knn_indices",
    "mse",
    "optimize_lambdas",
    "penalized_solve",
    "phi_delta_multivariate",
    "phi_delta_univariate",
    "place_knots",
    "resmooth_check",
    "run_experiment",
    "tensor_basis",
    "tensor_penalty",
    "tensor_split",
    "test_function",
]
