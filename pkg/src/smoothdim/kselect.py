"""Basis dimension selection drivers.

Two families: doubling drivers that wrap a per-term adequacy check (the
kappa permutation test or the residual re-smoothing check) and double a
term's dimension whenever the check flags it, and exhaustive grid search
that refits the whole model at every combination of trial dimensions and
keeps the criterion minimizer.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .basis import BasisSpec, build_design_block
from .diagnostics import (
    DEFAULT_ALPHA,
    DEFAULT_EDF_THRESHOLD,
    DEFAULT_NEIGHBOURS,
    DEFAULT_PERMUTATIONS,
    kappa_test,
    resmooth_check,
)
from .fit import FitError, FittedModel, ModelSpec, as_columns, fit

METHOD_KAPPA = "kappa"
METHOD_RESMOOTH = "resmooth"
METHOD_GCV_GRID = "gcv-grid"
METHOD_REML_GRID = "reml-grid"
ALL_METHODS = (METHOD_KAPPA, METHOD_RESMOOTH, METHOD_GCV_GRID, METHOD_REML_GRID)

# The stopping rule credited to Ruppert: stop doubling when the criterion
# rose or improved by no more than this fraction of its previous value.
CRITERION_STOP_FRACTION = 0.02


@dataclass
class SearchStep:
    """One fitted model in a search: dimensions, score, per-term check outcome."""

    k: tuple[int, ...]
    criterion_value: float
    stats: tuple[float | None, ...]  # p-value or edf_star, by term
    decisions: tuple[str, ...]


@dataclass
class KSearchTrace:
    method: str
    steps: list[SearchStep]
    final_k: tuple[int, ...]
    final_model: FittedModel
    refit_count: int


def _with_ks(spec: ModelSpec, ks: list[int]) -> ModelSpec:
    terms = tuple(replace(t, k=k) for t, k in zip(spec.terms, ks))
    return ModelSpec(terms=terms, criterion=spec.criterion)


def _doubling_feasible(term: BasisSpec, cols: dict[str, np.ndarray]) -> bool:
    try:
        build_design_block(cols, term.doubled())
    except ValueError:
        return False
    return True


def _check_seed(seed: int, round_idx: int, term_idx: int) -> int:
    return int(np.random.SeedSequence([seed, round_idx, term_idx]).generate_state(1)[0])


def doubling_driver(
    spec: ModelSpec,
    data,
    method: str = METHOD_KAPPA,
    *,
    response: str | np.ndarray = "y",
    alpha: float = DEFAULT_ALPHA,
    max_doublings: int = 3,
    seed: int = 0,
    n_perm: int = DEFAULT_PERMUTATIONS,
    neighbours: int = DEFAULT_NEIGHBOURS,
    edf_threshold: float = DEFAULT_EDF_THRESHOLD,
) -> KSearchTrace:
    """Fit, check each term, and double flagged terms until every term stops.

    A term stops when its check passes, when its doubling budget is spent,
    when a doubled basis is not constructible on the data (frozen at the
    last feasible dimension), or when a refit moves the smoothing criterion
    up or down by at most 2% of its previous value.  All terms flagged in a
    round double together, so each round costs one refit of the full model.
    """
    if method not in (METHOD_KAPPA, METHOD_RESMOOTH):
        raise ValueError(f"unknown doubling method {method!r}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if max_doublings < 0:
        raise ValueError("max_doublings must be non-negative")
    cols = as_columns(data)
    nterms = len(spec.terms)
    ks = [t.k for t in spec.terms]
    doublings = [0] * nterms
    active = [True] * nterms
    model = fit(_with_ks(spec, ks), cols, response=response)
    refits = 1
    steps: list[SearchStep] = []
    prev_criterion = None
    pending: set[int] = set()
    round_idx = 0
    while True:
        crit = model.criterion_value
        stop_rule_fired = prev_criterion is not None and (
            crit > prev_criterion or prev_criterion - crit <= CRITERION_STOP_FRACTION * abs(prev_criterion)
        )
        stats: list[float | None] = [None] * nterms
        decisions = ["stopped"] * nterms
        for j in range(nterms):
            if not active[j]:
                continue
            if j in pending and stop_rule_fired:
                decisions[j] = "stop-criterion"
                active[j] = False
                continue
            if doublings[j] >= max_doublings:
                # No doubling budget left, so the check cannot change k.
                decisions[j] = "stop-max"
                active[j] = False
                continue
            feasible = _doubling_feasible(model.spec.terms[j], cols)
            if method == METHOD_RESMOOTH and not feasible:
                # The re-smoothing check itself needs the doubled basis.
                decisions[j] = "frozen"
                active[j] = False
                continue
            if method == METHOD_KAPPA:
                res = kappa_test(model, j, n_perm=n_perm, seed=_check_seed(seed, round_idx, j), neighbours=neighbours)
                stats[j] = res.p_value
                flagged = res.p_value < alpha
            else:
                rr = resmooth_check(model, j, threshold=edf_threshold)
                stats[j] = rr.edf_star
                flagged = rr.flagged
            if not flagged:
                decisions[j] = "pass"
                active[j] = False
            elif not feasible:
                decisions[j] = "frozen"
                active[j] = False
            else:
                decisions[j] = "double"
        steps.append(SearchStep(tuple(ks), crit, tuple(stats), tuple(decisions)))
        to_double = [j for j in range(nterms) if decisions[j] == "double"]
        if not to_double:
            break
        for j in to_double:
            ks[j] *= 2
            doublings[j] += 1
        prev_criterion = crit
        model = fit(_with_ks(spec, ks), cols, response=response)
        refits += 1
        pending = set(to_double)
        round_idx += 1
    return KSearchTrace(
        method=method,
        steps=steps,
        final_k=tuple(ks),
        final_model=model,
        refit_count=refits,
    )


def grid_search(
    spec: ModelSpec,
    data,
    grids: list[list[int]],
    kind: str | None = None,
    *,
    response: str | np.ndarray = "y",
) -> KSearchTrace:
    """Refit the whole model at every combination of trial dimensions.

    Returns the criterion minimizer; ties break toward the smallest total
    dimension, then lexicographically, so the result is deterministic.
    Infeasible combinations are recorded and skipped.
    """
    if len(grids) != len(spec.terms) or any(not g for g in grids):
        raise ValueError("one non-empty dimension grid per term required")
    kind = kind or spec.criterion
    cols = as_columns(data)
    steps: list[SearchStep] = []
    best_key: tuple | None = None
    best_model: FittedModel | None = None
    best_ks: tuple[int, ...] | None = None
    refits = 0
    none_stats = tuple([None] * len(spec.terms))
    for combo in itertools.product(*grids):
        trial = ModelSpec(terms=tuple(replace(t, k=k) for t, k in zip(spec.terms, combo)), criterion=kind)
        try:
            model = fit(trial, cols, response=response)
        except (ValueError, FitError):
            steps.append(SearchStep(combo, float("nan"), none_stats, tuple(["infeasible"] * len(combo))))
            continue
        refits += 1
        steps.append(SearchStep(combo, model.criterion_value, none_stats, tuple(["evaluated"] * len(combo))))
        key = (model.criterion_value, sum(combo), combo)
        if best_key is None or key < best_key:
            best_key, best_model, best_ks = key, model, combo
    if best_model is None:
        raise FitError("every grid combination was infeasible")
    return KSearchTrace(
        method=METHOD_GCV_GRID if kind == "gcv" else METHOD_REML_GRID,
        steps=steps,
        final_k=best_ks,
        final_model=best_model,
        refit_count=refits,
    )
