"""Basis dimension adequacy checks for a fitted model.

Two checks are provided.  The first compares a residual-differencing
variance estimate against the model's own scale estimate: with kappa =
phi_delta / phi_hat, leftover pattern in the residuals (the signature of a
too-small basis) drags phi_delta, and hence kappa, below one.  Its null
distribution comes from permuting the residual vector.  The second refits
the residuals with a double-dimension smooth and flags the term when that
smooth's effective degrees of freedom exceed the minimum attainable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fit import FittedModel, ModelSpec, fit

DEFAULT_PERMUTATIONS = 199
DEFAULT_NEIGHBOURS = 3
DEFAULT_EDF_THRESHOLD = 0.5
DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class KappaResult:
    """Permutation test summary for one smooth term."""

    kappa: float
    phi_delta: float
    phi_hat: float
    p_value: float
    n_perm: int
    M: int  # neighbour count; 0 when univariate sorting was used
    seed: int


@dataclass
class ResmoothResult:
    """Residual re-smoothing summary for one smooth term."""

    edf_star: float
    edf_min: float
    threshold: float
    flagged: bool
    criterion_before: float
    criterion_after: float | None = None
    criterion_drop_fraction: float | None = None


def phi_delta_univariate(r: np.ndarray, x: np.ndarray) -> float:
    """Scale estimate from successive differences of residuals sorted by x.

    phi_delta = sum(d_i^2) / (2n - 2) with d_i the differences of the
    residuals ordered by the covariate (stable sort, ties kept in original
    order).  Close to the model scale when no covariate pattern remains.
    """
    r = np.asarray(r, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    n = len(r)
    if n < 3 or len(x) != n:
        raise ValueError("need at least 3 residual/covariate pairs")
    order = np.argsort(x, kind="stable")
    return _phi_delta_sorted(r[order])


def _phi_delta_sorted(r_sorted: np.ndarray) -> float:
    d = np.diff(r_sorted)
    return float(d @ d) / (2 * len(r_sorted) - 2)


def knn_indices(C: np.ndarray, M: int) -> np.ndarray:
    """Indices of the M nearest neighbours of each row of C (self excluded).

    Columns are standardized to unit sample standard deviation before
    Euclidean distances; ties break toward the lower original index, so the
    result is reproducible bit for bit.  Exhaustive O(n^2) scan: plenty at
    the data sizes the diagnostics run on.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.ndim != 2:
        raise ValueError("covariate matrix must be two-dimensional")
    n = C.shape[0]
    if not 1 <= M < n:
        raise ValueError("neighbour count must satisfy 1 <= M < n")
    sd = C.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise ValueError("zero-variance covariate column")
    Z = C / sd
    sq = np.sum(Z**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :M]


def phi_delta_multivariate(r: np.ndarray, nn: np.ndarray) -> float:
    """Scale estimate from residual differences against nearest neighbours.

    phi_delta = sum_ij (r_i - r_{m_ij})^2 / (2 M n) for the n x M neighbour
    index matrix nn.
    """
    r = np.asarray(r, dtype=float).ravel()
    nn = np.asarray(nn)
    n = len(r)
    if nn.ndim != 2 or nn.shape[0] != n:
        raise ValueError("neighbour index matrix must have one row per residual")
    if nn.min() < 0 or nn.max() >= n:
        raise ValueError("neighbour index out of range")
    M = nn.shape[1]
    delta = r[:, None] - r[nn]
    return float(np.sum(delta**2)) / (2 * M * n)


def kappa_test(
    model: FittedModel,
    term: int = 0,
    n_perm: int = DEFAULT_PERMUTATIONS,
    seed: int = 0,
    neighbours: int = DEFAULT_NEIGHBOURS,
) -> KappaResult:
    """Permutation test of basis adequacy for one term of a fitted model.

    The observed kappa is compared against kappa recomputed under n_perm
    random shuffles of the residual vector (phi_hat stays fixed; shuffling
    only moves phi_delta).  The p-value is the one-sided lower tail with
    add-one smoothing, so it is never smaller than 1/(n_perm+1).
    """
    if n_perm < 99:
        raise ValueError("need at least 99 permutations")
    spec = model.spec.terms[term]
    r = model.residuals
    n = len(r)
    if len(spec.covariates) == 1:
        x = model.data_ref[spec.covariates[0]]
        order = np.argsort(x, kind="stable")
        M = 0
        phi_obs = _phi_delta_sorted(r[order])

        def stat(rr: np.ndarray) -> float:
            return _phi_delta_sorted(rr[order])

    else:
        C = np.column_stack([model.data_ref[c] for c in spec.covariates])
        nn = knn_indices(C, neighbours)
        M = neighbours
        phi_obs = phi_delta_multivariate(r, nn)

        def stat(rr: np.ndarray) -> float:
            return phi_delta_multivariate(rr, nn)

    kappa_obs = phi_obs / model.phi_hat
    hits = 0
    for b in range(n_perm):
        rng = np.random.default_rng([seed, b])
        perm = rng.permutation(n)
        if stat(r[perm]) / model.phi_hat <= kappa_obs:
            hits += 1
    return KappaResult(
        kappa=kappa_obs,
        phi_delta=phi_obs,
        phi_hat=model.phi_hat,
        p_value=(1 + hits) / (n_perm + 1),
        n_perm=n_perm,
        M=M,
        seed=seed,
    )


def resmooth_check(
    model: FittedModel,
    term: int = 0,
    threshold: float = DEFAULT_EDF_THRESHOLD,
) -> ResmoothResult:
    """Refit the residuals with a doubled-dimension smooth of one term.

    Pure-noise residuals are flattened to (almost) the minimum EDF of the
    doubled smooth; leftover pattern keeps the EDF above it.  The term is
    flagged when edf_star exceeds edf_min by more than the threshold.
    """
    spec = model.spec.terms[term]
    doubled = spec.doubled()
    data = {c: model.data_ref[c] for c in spec.covariates}
    refit = fit(
        ModelSpec(terms=(doubled,), criterion=model.criterion),
        data,
        response=model.residuals,
    )
    edf_star = float(refit.edf_per_term[0])
    edf_min = float(refit.design.blocks[0].null_dim)
    return ResmoothResult(
        edf_star=edf_star,
        edf_min=edf_min,
        threshold=threshold,
        flagged=edf_star > edf_min + threshold,
        criterion_before=model.criterion_value,
    )
