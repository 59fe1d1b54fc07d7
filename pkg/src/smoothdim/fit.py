"""Penalized least-squares fitting of Gaussian additive models.

A model is an intercept plus one or more P-spline terms.  Coefficients
minimize ||y - X b||^2 + sum_j lambda_j b' S_j b; the smoothing parameters
lambda_j are chosen by minimizing GCV or the (profiled) Gaussian REML score
with a per-term log-lambda grid, coordinate descent across terms, and a
golden-section polish of each coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .basis import BasisSpec, DesignBlock, build_design_block

GCV = "gcv"
REML = "reml"

LOG10_LAMBDA_GRID = np.linspace(-6.0, 8.0, 31)

_RANK_RTOL = 1e-10
_SWEEP_RTOL = 1e-7
_MAX_SWEEPS = 10
_REFINE_SHRINK = 1e-3
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


class FitError(RuntimeError):
    """Numerical failure while fitting (rank deficiency, exhausted EDF, ...)."""


@dataclass(frozen=True)
class ModelSpec:
    """An additive Gaussian model: intercept plus smooth terms."""

    terms: tuple[BasisSpec, ...]
    criterion: str = GCV

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("model needs at least one smooth term")
        names = [c for t in self.terms for c in t.covariates]
        if len(set(names)) != len(names):
            raise ValueError("covariate names must be distinct across terms")
        if self.criterion not in (GCV, REML):
            raise ValueError(f"unknown criterion {self.criterion!r}")


@dataclass
class PenaltyTerm:
    """One term's penalty, embedded by its column range in the full design."""

    cols: slice
    S: np.ndarray
    root: np.ndarray
    null_dim: int
    rank: int
    log_det_plus: float  # sum of log non-zero eigenvalues of S

    @classmethod
    def from_block(cls, block: DesignBlock, start: int) -> "PenaltyTerm":
        w = np.linalg.eigvalsh((block.S + block.S.T) / 2.0)
        nonzero = w[w > 1e-8 * max(float(w[-1]), 1e-300)]
        return cls(
            cols=slice(start, start + block.ncol),
            S=block.S,
            root=block.root,
            null_dim=block.ncol - len(nonzero),
            rank=len(nonzero),
            log_det_plus=float(np.sum(np.log(nonzero))) if len(nonzero) else 0.0,
        )


@dataclass
class AssembledDesign:
    """Full design (intercept column first), aligned penalties, and term blocks."""

    X: np.ndarray
    penalties: list[PenaltyTerm]
    blocks: list[DesignBlock]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def as_columns(data) -> dict[str, np.ndarray]:
    """Normalize a DataFrame or mapping of columns to float arrays."""
    if hasattr(data, "columns"):
        items = [(str(c), data[c]) for c in data.columns]
    elif isinstance(data, Mapping):
        items = list(data.items())
    else:
        raise ValueError("data must be a DataFrame or a mapping of columns")
    out: dict[str, np.ndarray] = {}
    length = None
    for name, col in items:
        arr = np.asarray(col, dtype=float).ravel()
        if length is None:
            length = len(arr)
        elif len(arr) != length:
            raise ValueError(f"column {name!r} has inconsistent length")
        out[str(name)] = arr
    return out


def assemble_design(spec: ModelSpec, data) -> AssembledDesign:
    """Build the full model design: intercept, then one centered block per term."""
    cols = as_columns(data)
    needed = [c for t in spec.terms for c in t.covariates]
    for name in needed:
        if name not in cols:
            raise ValueError(f"missing covariate column {name!r}")
        if not np.all(np.isfinite(cols[name])):
            raise ValueError(f"non-finite values in column {name!r}")
    n = len(next(iter(cols.values())))
    if n < 10:
        raise ValueError("need at least 10 observations")
    blocks = [build_design_block(cols, term) for term in spec.terms]
    parts = [np.ones((n, 1))]
    penalties: list[PenaltyTerm] = []
    start = 1
    for block in blocks:
        parts.append(block.X)
        penalties.append(PenaltyTerm.from_block(block, start))
        start += block.ncol
    return AssembledDesign(X=np.hstack(parts), penalties=penalties, blocks=blocks)


class _Workspace:
    """Cached cross-products for repeated criterion evaluations on one design."""

    def __init__(self, X: np.ndarray, penalties: Sequence[PenaltyTerm], y: np.ndarray):
        self.X = X
        self.y = y
        self.n, self.p = X.shape
        self.penalties = list(penalties)
        self.XtX = X.T @ X
        # Residual sums of squares at or below this level are solver noise
        # from an exact fit; such fits are treated as criterion ties so the
        # smoothest of them wins.
        self.rss_floor = self.n * (1e-11 * (1.0 + np.sqrt(float(y @ y) / max(self.n, 1)))) ** 2

    def _check_lambdas(self, lambdas) -> np.ndarray:
        lam = np.asarray(lambdas, dtype=float).ravel()
        if len(lam) != len(self.penalties):
            raise ValueError("one lambda per penalized term required")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("lambdas must be finite and non-negative")
        return lam

    def solve(self, lambdas) -> np.ndarray:
        """Penalized LS coefficients via the augmented least-squares system."""
        lam = self._check_lambdas(lambdas)
        rows = [self.X]
        rhs = [self.y]
        for pen, lj in zip(self.penalties, lam):
            if lj > 0:
                block = np.zeros((pen.root.shape[0], self.p))
                block[:, pen.cols] = np.sqrt(lj) * pen.root
                rows.append(block)
                rhs.append(np.zeros(pen.root.shape[0]))
        A = np.vstack(rows)
        b = np.concatenate(rhs)
        beta, _, rank, _ = np.linalg.lstsq(A, b, rcond=_RANK_RTOL)
        if rank < self.p:
            raise FitError("unidentifiable model")
        return beta

    def _gram(self, lam: np.ndarray) -> np.ndarray:
        G = self.XtX.copy()
        for pen, lj in zip(self.penalties, lam):
            if lj > 0:
                G[pen.cols, pen.cols] += lj * pen.S
        return G

    def _chol(self, lam: np.ndarray):
        try:
            return cho_factor(self._gram(lam), lower=True)
        except np.linalg.LinAlgError as exc:
            raise FitError("unidentifiable model") from exc

    def _edf_from_chol(self, c) -> tuple[np.ndarray, float]:
        diag = np.diag(cho_solve(c, self.XtX))
        per_term = np.array([float(diag[pen.cols].sum()) for pen in self.penalties])
        return per_term, float(diag.sum())

    def edf(self, lambdas) -> tuple[np.ndarray, float]:
        """Per-term effective degrees of freedom and the total influence trace."""
        lam = self._check_lambdas(lambdas)
        return self._edf_from_chol(self._chol(lam))

    def score(self, kind: str, lambdas) -> float:
        lam = self._check_lambdas(lambdas)
        beta = self.solve(lam)
        r = self.y - self.X @ beta
        rss = float(r @ r)
        c = self._chol(lam)
        _, trace = self._edf_from_chol(c)
        if trace >= self.n - 1e-8:
            raise FitError("effective degrees of freedom exhausts data")
        if kind == GCV:
            if rss <= self.rss_floor:
                return 0.0
            return self.n * rss / (self.n - trace) ** 2
        if kind != REML:
            raise ValueError(f"unknown criterion {kind!r}")
        # Gaussian REML with the scale profiled out.  Blocks with lambda=0
        # carry no penalty, so their whole dimension joins the unpenalized
        # null space instead of contributing to |S_lambda|_+.
        null_total = 1  # intercept
        log_det_s = 0.0
        d_p = rss
        for pen, lj in zip(self.penalties, lam):
            bj = beta[pen.cols]
            if lj > 0:
                null_total += pen.null_dim
                log_det_s += pen.rank * np.log(lj) + pen.log_det_plus
                d_p += lj * float(np.sum((pen.root @ bj) ** 2))
            else:
                null_total += pen.cols.stop - pen.cols.start
        df_resid = self.n - null_total
        if df_resid <= 0:
            raise FitError("effective degrees of freedom exhausts data")
        phi_r = max(d_p / df_resid, self.rss_floor / self.n)
        log_det_g = 2.0 * float(np.sum(np.log(np.diag(c[0]))))
        return 0.5 * (df_resid * np.log(2.0 * np.pi * phi_r) + df_resid + log_det_g - log_det_s)


def penalized_solve(X: np.ndarray, penalties: Sequence[PenaltyTerm], lambdas, y: np.ndarray) -> np.ndarray:
    """Coefficients minimizing ||y - X b||^2 + sum_j lambda_j b' S_j b."""
    return _Workspace(X, penalties, np.asarray(y, dtype=float)).solve(lambdas)


def edf_per_term(X: np.ndarray, penalties: Sequence[PenaltyTerm], lambdas) -> tuple[np.ndarray, float]:
    """Per-term EDF (diagonal block sums of (X'X + sum lambda S)^-1 X'X) and total trace."""
    return _Workspace(X, penalties, np.zeros(X.shape[0])).edf(lambdas)


def criterion_score(kind: str, X: np.ndarray, penalties: Sequence[PenaltyTerm], lambdas, y: np.ndarray) -> float:
    """GCV or profiled Gaussian REML score at fixed lambdas.  Lower is better."""
    return _Workspace(X, penalties, np.asarray(y, dtype=float)).score(kind, lambdas)


@dataclass
class LambdaSearch:
    lambdas: np.ndarray
    criterion_value: float
    sweeps: int
    converged: bool


def _safe_score(ws: _Workspace, kind: str, loglam: np.ndarray) -> float:
    try:
        s = ws.score(kind, 10.0**loglam)
    except FitError:
        return np.inf
    return s if np.isfinite(s) else np.inf


def _argmin_prefer_smooth(values: np.ndarray) -> int:
    """Index of the minimum, ties resolved toward the largest lambda."""
    m = values.min()
    return int(np.where(values == m)[0][-1])


def _golden_refine(ws: _Workspace, kind: str, loglam: np.ndarray, j: int, half_width: float) -> tuple[float, float]:
    """Golden-section polish of coordinate j; returns (best log-lambda, best score)."""
    a = max(float(LOG10_LAMBDA_GRID[0]), loglam[j] - half_width)
    b = min(float(LOG10_LAMBDA_GRID[-1]), loglam[j] + half_width)
    tol = _REFINE_SHRINK * (b - a)

    def f(t: float) -> float:
        trial = loglam.copy()
        trial[j] = t
        return _safe_score(ws, kind, trial)

    evaluated = [(f(loglam[j]), float(loglam[j]))]
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = f(x1), f(x2)
    evaluated += [(f1, x1), (f2, x2)]
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = f(x1)
            evaluated.append((f1, x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = f(x2)
            evaluated.append((f2, x2))
    best_score = min(e[0] for e in evaluated)
    # Among equally good points prefer the smoothest (largest lambda).
    best_t = max(t for s, t in evaluated if s == best_score)
    return best_t, best_score


def _optimize(ws: _Workspace, kind: str) -> LambdaSearch:
    nterms = len(ws.penalties)
    loglam = np.zeros(nterms)
    best = _safe_score(ws, kind, loglam)
    sweeps = 0
    converged = False
    for sweep in range(1, _MAX_SWEEPS + 1):
        sweeps = sweep
        prev = best
        for j in range(nterms):
            vals = np.empty(len(LOG10_LAMBDA_GRID))
            for i, g in enumerate(LOG10_LAMBDA_GRID):
                trial = loglam.copy()
                trial[j] = g
                vals[i] = _safe_score(ws, kind, trial)
            if not np.isfinite(vals.min()):
                raise FitError("criterion non-finite at every lambda grid point")
            idx = _argmin_prefer_smooth(vals)
            loglam[j] = LOG10_LAMBDA_GRID[idx]
            best = float(vals[idx])
        if abs(prev - best) <= _SWEEP_RTOL * max(1.0, abs(prev)):
            converged = True
            break
    half_width = float(LOG10_LAMBDA_GRID[1] - LOG10_LAMBDA_GRID[0])
    for j in range(nterms):
        t, s = _golden_refine(ws, kind, loglam, j, half_width)
        if s <= best:
            loglam[j] = t
            best = s
    return LambdaSearch(lambdas=10.0**loglam, criterion_value=best, sweeps=sweeps, converged=converged)


def optimize_lambdas(spec: ModelSpec, data, kind: str | None = None, response: str | np.ndarray = "y") -> LambdaSearch:
    """Select per-term smoothing parameters for a model on a dataset."""
    cols = as_columns(data)
    y = _response_vector(cols, response)
    asm = assemble_design(spec, cols)
    return _optimize(_Workspace(asm.X, asm.penalties, y), kind or spec.criterion)


def _response_vector(cols: dict[str, np.ndarray], response: str | np.ndarray) -> np.ndarray:
    if isinstance(response, str):
        if response not in cols:
            raise ValueError(f"missing response column {response!r}")
        y = cols[response]
    else:
        y = np.asarray(response, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite values in response")
    return y


@dataclass
class FittedModel:
    """A fitted additive model and everything diagnostics need from it."""

    spec: ModelSpec
    design: AssembledDesign
    beta: np.ndarray
    lambdas: np.ndarray
    edf_per_term: np.ndarray
    edf_total: float
    mu: np.ndarray
    residuals: np.ndarray
    phi_hat: float
    criterion: str
    criterion_value: float
    data_ref: dict[str, np.ndarray]
    y: np.ndarray
    lambda_search: LambdaSearch

    @property
    def n(self) -> int:
        return len(self.y)


def fit(spec: ModelSpec, data, response: str | np.ndarray = "y") -> FittedModel:
    """Fit the model: assemble, select lambdas, solve, and summarize."""
    cols = as_columns(data)
    y = _response_vector(cols, response)
    covariates = {c: cols[c] for t in spec.terms for c in t.covariates}
    asm = assemble_design(spec, cols)
    if len(y) != asm.n:
        raise ValueError("response length does not match covariates")
    ws = _Workspace(asm.X, asm.penalties, y)
    search = _optimize(ws, spec.criterion)
    beta = ws.solve(search.lambdas)
    per_term, trace = ws.edf(search.lambdas)
    mu = asm.X @ beta
    residuals = y - mu
    rss = float(residuals @ residuals)
    if trace >= asm.n - 1e-8:
        raise FitError("effective degrees of freedom exhausts data")
    return FittedModel(
        spec=spec,
        design=asm,
        beta=beta,
        lambdas=search.lambdas,
        edf_per_term=per_term,
        edf_total=trace,
        mu=mu,
        residuals=residuals,
        phi_hat=rss / (asm.n - trace),
        criterion=spec.criterion,
        criterion_value=search.criterion_value,
        data_ref=covariates,
        y=y,
        lambda_search=search,
    )


def evaluate_term(model: FittedModel, term: int, x) -> np.ndarray:
    """Evaluate one fitted smooth at new covariate values.

    For tensor terms pass a pair of coordinate arrays (or an n x 2 array).
    Single-smooth models include the intercept so the result is directly
    comparable to the function that generated the data.
    """
    block = model.design.blocks[term]
    if len(block.knots) == 1:
        columns = (np.asarray(x, dtype=float).ravel(),)
    else:
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 2 and arr.shape[1] == 2:
            columns = (arr[:, 0], arr[:, 1])
        elif arr.ndim == 2 and arr.shape[0] == 2:
            columns = (arr[0], arr[1])
        else:
            raise ValueError("tensor term evaluation needs two coordinate columns")
    pen = model.design.penalties[term]
    values = block.basis_rows(*columns) @ model.beta[pen.cols]
    if len(model.spec.terms) == 1:
        values = values + model.beta[0]
    return values
