"""B-spline bases, difference penalties, tensor products, and identifiability constraints.

Every smooth term is represented by a low-rank B-spline basis with a
difference penalty on its coefficients (a P-spline).  Bivariate terms use
the row-wise tensor product of two marginal bases with an isotropic sum of
marginal penalties.  A sum-to-zero constraint is absorbed into each term's
design so that additive models with an intercept remain identifiable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial, isqrt

import numpy as np
from scipy.interpolate import BSpline

DEFAULT_DEGREE = 3
DEFAULT_PENALTY_ORDER = 2

# Relative tolerance used when counting zero eigenvalues of a penalty.
_NULL_EIG_RTOL = 1e-8

# Smallest admissible marginal dimension of a tensor term: the marginal
# penalty needs order < k_i and the marginal spline needs k_i >= degree + 2
# with degree >= 1.
_MIN_MARGINAL = 3


def tensor_split(k: int) -> tuple[int, int]:
    """Split a total tensor dimension k into marginal dimensions (k1, k2).

    Prefers the divisor pair of k closest to square with both factors at
    least 3.  If no such pair exists the split falls back to round(sqrt(k))
    per margin, in which case the realized total k1*k2 differs from the
    requested k and callers should report the realized value.
    """
    if k < _MIN_MARGINAL * _MIN_MARGINAL:
        raise ValueError(f"tensor basis dimension {k} too small (need >= {_MIN_MARGINAL**2})")
    best: tuple[int, int] | None = None
    for k1 in range(_MIN_MARGINAL, isqrt(k) + 1):
        if k % k1 == 0 and k // k1 >= _MIN_MARGINAL:
            best = (k1, k // k1)
    if best is None:
        side = max(_MIN_MARGINAL, round(np.sqrt(k)))
        best = (side, side)
    return best


@dataclass(frozen=True)
class BasisSpec:
    """Definition of one smooth term's basis.

    k is the total basis dimension.  For tensor terms the marginal split is
    derived with tensor_split and the realized dimension is the product of
    the marginals (equal to k whenever k admits a near-square factor pair,
    which all the stock grid values do).
    """

    covariates: tuple[str, ...]
    k: int
    degree: int = DEFAULT_DEGREE
    penalty_order: int = DEFAULT_PENALTY_ORDER
    kind: str = field(default="")
    marginals: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        covs = tuple(self.covariates)
        object.__setattr__(self, "covariates", covs)
        if len(covs) not in (1, 2):
            raise ValueError("a smooth term takes one or two covariates")
        inferred = "bspline" if len(covs) == 1 else "tensor"
        if self.kind == "":
            object.__setattr__(self, "kind", inferred)
        elif self.kind != inferred:
            raise ValueError(f"kind {self.kind!r} inconsistent with {len(covs)} covariate(s)")
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        if self.penalty_order < 1:
            raise ValueError("penalty order must be positive")
        if self.kind == "bspline":
            if self.marginals is not None:
                raise ValueError("marginals only apply to tensor terms")
            if self.k < self.degree + 2:
                raise ValueError(f"k={self.k} too small for degree {self.degree} (need k >= degree+2)")
            if self.penalty_order >= self.k:
                raise ValueError("penalty order must be smaller than k")
        else:
            if self.marginals is not None:
                k1, k2 = self.marginals
                if k1 * k2 != self.k:
                    raise ValueError("marginal dimensions must multiply to k")
                if min(k1, k2) < _MIN_MARGINAL:
                    raise ValueError(f"marginal dimensions must be at least {_MIN_MARGINAL}")
            else:
                k1, k2 = tensor_split(self.k)
            for ki in (k1, k2):
                if self.penalty_order >= ki:
                    raise ValueError("penalty order must be smaller than every marginal dimension")

    @property
    def marginal_dims(self) -> tuple[int, int]:
        if self.kind != "tensor":
            raise ValueError("marginal_dims is only defined for tensor terms")
        return self.marginals if self.marginals is not None else tensor_split(self.k)

    @property
    def marginal_degrees(self) -> tuple[int, int]:
        """Per-margin spline degree, reduced where the marginal dimension forces it."""
        k1, k2 = self.marginal_dims
        return (min(self.degree, k1 - 2), min(self.degree, k2 - 2))

    @property
    def realized_k(self) -> int:
        """Total basis dimension actually constructed."""
        if self.kind == "tensor":
            k1, k2 = self.marginal_dims
            return k1 * k2
        return self.k

    def doubled(self) -> "BasisSpec":
        """The same term with twice the basis dimension (tensor terms re-split)."""
        return BasisSpec(self.covariates, 2 * self.k, self.degree, self.penalty_order, self.kind)


@dataclass(frozen=True)
class KnotVector:
    """Clamped (open) knot sequence for a B-spline basis of a given degree."""

    knots: np.ndarray
    degree: int

    def __post_init__(self) -> None:
        t = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", t)
        if t.ndim != 1 or len(t) < 2 * (self.degree + 1):
            raise ValueError("knot vector too short for degree")
        if np.any(np.diff(t) < 0):
            raise ValueError("knots must be non-decreasing")
        d = self.degree
        if not (np.all(t[: d + 1] == t[0]) and np.all(t[-d - 1 :] == t[-1])):
            raise ValueError("knot vector must be clamped (repeated boundary knots)")

    @property
    def size(self) -> int:
        """Number of basis functions."""
        return len(self.knots) - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])


def place_knots(x: np.ndarray, k: int, degree: int = DEFAULT_DEGREE) -> KnotVector:
    """Build a clamped knot vector for a k-dimensional basis over the range of x.

    Interior knots sit at evenly spaced quantiles of the distinct covariate
    values; boundary knots replicate min(x) and max(x) exactly degree+1
    times, so the basis domain is exactly the observed range.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty covariate")
    if k < degree + 2:
        raise ValueError(f"k={k} too small for degree {degree}")
    distinct = np.unique(x)
    if len(distinct) < k:
        raise ValueError("insufficient unique covariate values for requested k")
    n_interior = k - degree - 1
    lo, hi = distinct[0], distinct[-1]
    probs = np.arange(1, n_interior + 1) / (n_interior + 1)
    interior = np.quantile(distinct, probs) if n_interior > 0 else np.empty(0)
    knots = np.concatenate([np.full(degree + 1, lo), interior, np.full(degree + 1, hi)])
    return KnotVector(knots, degree)


def eval_bspline_basis(x: np.ndarray, knots: KnotVector) -> np.ndarray:
    """Evaluate all basis functions at x, one row per point.

    Rows form a partition of unity and have at most degree+1 non-zero
    entries.  Points outside the knot domain are an error: diagnostics only
    ever evaluate at observed covariates, so extrapolation is never silent.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = knots.domain
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError("covariate outside basis domain")
    return BSpline.design_matrix(x, knots.knots, knots.degree, extrapolate=False).toarray()


def difference_penalty(k: int, order: int) -> np.ndarray:
    """Penalty S = D'D from the order-th difference operator on k coefficients."""
    D = difference_operator(k, order)
    return D.T @ D


def difference_operator(k: int, order: int) -> np.ndarray:
    """The (k-order) x k matrix taking coefficients to their order-th differences."""
    if not 0 < order < k:
        raise ValueError("difference order must satisfy 0 < order < k")
    return np.diff(np.eye(k), n=order, axis=0)


def greville_sites(kv: KnotVector) -> np.ndarray:
    """Greville abscissae of a basis: the x locations its coefficients live at.

    By the Marsden identity, a function a + b*x has B-spline coefficients
    a + b*xi exactly, so penalties built on these sites leave straight lines
    unpenalized whatever the knot layout.
    """
    t, d = kv.knots, kv.degree
    k = kv.size
    if d == 0:
        return (t[:-1] + t[1:]) / 2.0
    return np.array([t[i + 1 : i + d + 1].mean() for i in range(k)])


def divided_difference_operator(xi: np.ndarray, order: int) -> np.ndarray:
    """Order-th divided-difference operator on coefficients located at sites xi.

    Annihilates exactly the polynomials of degree < order in xi.  Scaled by
    order! times the mean site spacing to the order, so it coincides with
    the plain difference operator when the sites are equally spaced.
    """
    xi = np.asarray(xi, dtype=float)
    k = len(xi)
    if not 0 < order < k:
        raise ValueError("difference order must satisfy 0 < order < k")
    D = np.eye(k)
    for level in range(1, order + 1):
        denom = xi[level:] - xi[:-level]
        if np.any(denom <= 0):
            raise ValueError("coefficient sites must be strictly increasing")
        D = (D[1:] - D[:-1]) / denom[:, None]
    h = float(np.mean(np.diff(xi)))
    return D * (h**order * factorial(order))


def tensor_basis(B1: np.ndarray, B2: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker product of two marginal design matrices.

    Row i of the result is kron(B1[i], B2[i]); the second margin's index
    varies fastest, matching the coefficient layout of tensor_penalty.
    """
    B1 = np.asarray(B1, dtype=float)
    B2 = np.asarray(B2, dtype=float)
    if B1.shape[0] != B2.shape[0]:
        raise ValueError("marginal design matrices must have equal row counts")
    n, k1 = B1.shape
    k2 = B2.shape[1]
    return (B1[:, :, None] * B2[:, None, :]).reshape(n, k1 * k2)


def tensor_penalty(S1: np.ndarray, S2: np.ndarray) -> np.ndarray:
    """Isotropic tensor penalty S1 (x) I + I (x) S2 on the stacked coefficients."""
    S1 = np.asarray(S1, dtype=float)
    S2 = np.asarray(S2, dtype=float)
    k1, k2 = S1.shape[0], S2.shape[0]
    return np.kron(S1, np.eye(k2)) + np.kron(np.eye(k1), S2)


@dataclass
class DesignBlock:
    """Realized design of one smooth term after absorbing its constraint.

    X is the n x (k-1) constrained design, S the congruently transformed
    penalty with root R (S = R'R), and transform the k x (k-1) map from
    constrained to raw coefficients, needed to evaluate the term at new
    covariate values.
    """

    X: np.ndarray
    S: np.ndarray
    root: np.ndarray
    null_dim: int
    spec: BasisSpec
    constraint: str
    transform: np.ndarray
    knots: tuple[KnotVector, ...]

    @property
    def ncol(self) -> int:
        return self.X.shape[1]

    def basis_rows(self, *columns: np.ndarray) -> np.ndarray:
        """Constrained basis rows at new covariate values."""
        if len(columns) != len(self.knots):
            raise ValueError("wrong number of covariate columns for this term")
        if len(self.knots) == 1:
            raw = eval_bspline_basis(columns[0], self.knots[0])
        else:
            raw = tensor_basis(
                eval_bspline_basis(columns[0], self.knots[0]),
                eval_bspline_basis(columns[1], self.knots[1]),
            )
        return raw @ self.transform


def penalty_null_dim(S: np.ndarray) -> int:
    """Number of zero eigenvalues of a symmetric PSD penalty, to relative tolerance."""
    w = np.linalg.eigvalsh((S + S.T) / 2.0)
    scale = max(float(w[-1]), 0.0)
    if scale == 0.0:
        return S.shape[0]
    return int(np.sum(w <= _NULL_EIG_RTOL * scale))


def apply_centering_constraint(
    X: np.ndarray,
    S: np.ndarray,
    *,
    root: np.ndarray | None = None,
    spec: BasisSpec | None = None,
    knots: tuple[KnotVector, ...] = (),
) -> DesignBlock:
    """Absorb the sum-to-zero constraint 1'X beta = 0 into a term's design.

    The constraint is removed by reparameterizing with an orthonormal basis
    Z of the null space of the column-sum vector, dropping exactly one
    column; the penalty (and its root) transform congruently.
    """
    X = np.asarray(X, dtype=float)
    S = np.asarray(S, dtype=float)
    c = X.sum(axis=0)
    norm = np.linalg.norm(c)
    if norm < 1e-12 * max(1.0, float(np.abs(X).max())):
        raise ValueError("degenerate constraint: design columns already sum to zero")
    Q, _ = np.linalg.qr(c[:, None] / norm, mode="complete")
    Z = Q[:, 1:]
    if root is None:
        root = _symmetric_root(S)
    Xc = X @ Z
    rootc = root @ Z
    Sc = rootc.T @ rootc
    return DesignBlock(
        X=Xc,
        S=Sc,
        root=rootc,
        null_dim=penalty_null_dim(Sc),
        spec=spec,
        constraint="sum-to-zero",
        transform=Z,
        knots=tuple(knots),
    )


def _symmetric_root(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((S + S.T) / 2.0)
    w = np.clip(w, 0.0, None)
    keep = w > _NULL_EIG_RTOL * max(float(w[-1]), 1e-300)
    return (np.sqrt(w[keep])[:, None] * V[:, keep].T) if keep.any() else np.zeros((0, S.shape[0]))


def build_design_block(data: dict[str, np.ndarray], spec: BasisSpec) -> DesignBlock:
    """Construct a term's centered design block from raw covariate columns."""
    if spec.kind == "bspline":
        x = np.asarray(data[spec.covariates[0]], dtype=float)
        kv = place_knots(x, spec.k, spec.degree)
        B = eval_bspline_basis(x, kv)
        root = divided_difference_operator(greville_sites(kv), spec.penalty_order)
        S = root.T @ root
        knots: tuple[KnotVector, ...] = (kv,)
    else:
        (k1, k2), (d1, d2) = spec.marginal_dims, spec.marginal_degrees
        x1 = np.asarray(data[spec.covariates[0]], dtype=float)
        x2 = np.asarray(data[spec.covariates[1]], dtype=float)
        kv1 = place_knots(x1, k1, d1)
        kv2 = place_knots(x2, k2, d2)
        B = tensor_basis(eval_bspline_basis(x1, kv1), eval_bspline_basis(x2, kv2))
        D1 = divided_difference_operator(greville_sites(kv1), spec.penalty_order)
        D2 = divided_difference_operator(greville_sites(kv2), spec.penalty_order)
        # Roots of the two marginal penalty pieces, stacked: S = R'R exactly.
        root = np.vstack([np.kron(D1, np.eye(k2)), np.kron(np.eye(k1), D2)])
        S = root.T @ root
        knots = (kv1, kv2)
    return apply_centering_constraint(B, S, root=root, spec=spec, knots=knots)
