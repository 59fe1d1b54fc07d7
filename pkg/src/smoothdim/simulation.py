"""Simulation scenarios for benchmarking the dimension-selection methods.

Five stock scenarios: three univariate test functions of increasing
wiggliness on an equally spaced grid, a bivariate surface on a lattice,
and a two-term additive model with uniform covariates.  Every replicate is
reproducible from (base_seed, replicate index) alone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import isqrt

import numpy as np

from .basis import BasisSpec
from .fit import ModelSpec
from .kselect import (
    ALL_METHODS,
    METHOD_GCV_GRID,
    METHOD_KAPPA,
    METHOD_REML_GRID,
    METHOD_RESMOOTH,
    KSearchTrace,
    doubling_driver,
    grid_search,
)

SCENARIO_IDS = ("uni-f1", "uni-f2", "uni-f3", "bivariate", "additive")

UNIVARIATE_GRID = (10, 20, 40, 80)
TENSOR_GRID = (15, 30, 60, 120)


def f1(x):
    """Monotone sigmoid."""
    return 1.0 / (1.0 + np.exp(-20.0 * (np.asarray(x) - 0.5)))


def f2(x):
    """Linear trend with a narrow bump."""
    x = np.asarray(x)
    return x + 2.0 * np.exp(-64.0 * (x - 0.5) ** 2)


def f3(x):
    """Six full sine cycles on [0, 1]."""
    return np.sin(12.0 * np.pi * np.asarray(x))


def f_additive2(x):
    """Single-cycle sine, the second term of the additive scenario."""
    return np.sin(2.0 * np.pi * np.asarray(x))


def f_bivariate(x1, x2):
    """Tilted plane plus a smooth ridge."""
    x1 = np.asarray(x1)
    x2 = np.asarray(x2)
    return 0.5 * x1 + np.sin(np.pi * x2) * np.exp(-((x1 - 1.0) ** 2))


def test_function(scenario_id: str, *coords) -> np.ndarray:
    """True mean function of a scenario at the given coordinates."""
    if scenario_id == "uni-f1":
        return f1(coords[0])
    if scenario_id == "uni-f2":
        return f2(coords[0])
    if scenario_id == "uni-f3":
        return f3(coords[0])
    if scenario_id == "bivariate":
        return f_bivariate(coords[0], coords[1])
    if scenario_id == "additive":
        return f1(coords[0]) + f_additive2(coords[1])
    raise ValueError(f"unknown scenario {scenario_id!r}")


@dataclass(frozen=True)
class KPolicy:
    """Per-term dimension grids and doubling settings for one scenario."""

    initial_k: tuple[int, ...]
    grids: tuple[tuple[int, ...], ...]
    alpha: float = 0.05
    max_doublings: int = 3
    n_perm: int = 199
    neighbours: int = 3
    edf_threshold: float = 0.5


_DEFAULT_N = {"uni-f1": 100, "uni-f2": 100, "uni-f3": 100, "bivariate": 400, "additive": 200}


def _default_policy(scenario_id: str) -> KPolicy:
    if scenario_id == "bivariate":
        return KPolicy(initial_k=(15,), grids=(TENSOR_GRID,))
    if scenario_id == "additive":
        return KPolicy(initial_k=(10, 10), grids=(UNIVARIATE_GRID, UNIVARIATE_GRID))
    return KPolicy(initial_k=(10,), grids=(UNIVARIATE_GRID,))


@dataclass(frozen=True)
class Scenario:
    id: str
    n: int = 0
    sigma: float = 0.2
    replicates: int = 50
    methods: tuple[str, ...] = ALL_METHODS
    base_seed: int = 0
    policy: KPolicy = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.id not in SCENARIO_IDS:
            raise ValueError(f"unknown scenario {self.id!r}")
        if self.n <= 0:
            object.__setattr__(self, "n", _DEFAULT_N[self.id])
        if self.id == "bivariate" and isqrt(self.n) ** 2 != self.n:
            raise ValueError("bivariate scenario needs a square sample size")
        if self.policy is None:
            object.__setattr__(self, "policy", _default_policy(self.id))
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        object.__setattr__(self, "methods", tuple(self.methods))

    @property
    def term_names(self) -> tuple[str, ...]:
        return tuple(":".join(t.covariates) for t in self.terms())

    def terms(self) -> tuple[BasisSpec, ...]:
        ks = self.policy.initial_k
        if self.id == "bivariate":
            return (BasisSpec(("x1", "x2"), ks[0]),)
        if self.id == "additive":
            return (BasisSpec(("x1",), ks[0]), BasisSpec(("x2",), ks[1]))
        return (BasisSpec(("x",), ks[0]),)

    def model_spec(self, criterion: str = "gcv") -> ModelSpec:
        return ModelSpec(terms=self.terms(), criterion=criterion)


def replicate_seed(scenario: Scenario, replicate_index: int) -> int:
    """Deterministic per-replicate seed for the diagnostics."""
    return int(np.random.SeedSequence([scenario.base_seed, replicate_index, 1]).generate_state(1)[0])


def gen_data(scenario: Scenario, replicate_index: int) -> dict[str, np.ndarray]:
    """Simulate one replicate: covariate layout per scenario, Gaussian noise."""
    rng = np.random.default_rng([scenario.base_seed, replicate_index, 0])
    n = scenario.n
    if scenario.id in ("uni-f1", "uni-f2", "uni-f3"):
        x = np.linspace(0.0, 1.0, n)
        data = {"x": x}
        f = test_function(scenario.id, x)
    elif scenario.id == "bivariate":
        m = isqrt(n)
        g1, g2 = np.meshgrid(np.linspace(-1.0, 3.0, m), np.linspace(0.0, 1.0, m), indexing="ij")
        data = {"x1": g1.ravel(), "x2": g2.ravel()}
        f = test_function(scenario.id, data["x1"], data["x2"])
    else:
        data = {"x1": rng.uniform(0.0, 1.0, n), "x2": rng.uniform(0.0, 1.0, n)}
        f = test_function(scenario.id, data["x1"], data["x2"])
    data["y"] = f + scenario.sigma * rng.standard_normal(n)
    return data


def true_values(scenario: Scenario, data: dict[str, np.ndarray]) -> np.ndarray:
    names = ("x",) if scenario.id.startswith("uni-") else ("x1", "x2")
    return test_function(scenario.id, *(data[c] for c in names))


def mse(model, scenario: Scenario, data: dict[str, np.ndarray]) -> float:
    """Mean squared difference between the fitted and true mean functions.

    For the additive scenario both sides are centered first, so a constant
    offset between the fitted predictor and the true surface contributes
    nothing.
    """
    f = true_values(scenario, data)
    fhat = model.mu
    if scenario.id == "additive":
        fhat = fhat - fhat.mean()
        f = f - f.mean()
    d = fhat - f
    return float(d @ d) / len(f)


@dataclass
class ReplicateRow:
    """Outcome of one (replicate, method) run."""

    scenario: str
    replicate: int
    method: str
    k_selected: tuple[int, ...] | None
    mse: float | None
    p_values: tuple[float | None, ...] | None
    edf_stars: tuple[float | None, ...] | None
    refits: int | None
    seed: int
    ms_elapsed: float
    error: str | None = None


@dataclass
class ScenarioResult:
    scenario: Scenario
    rows: list[ReplicateRow]

    @property
    def n_failures(self) -> int:
        return sum(1 for r in self.rows if r.error is not None)


def _final_stats(trace: KSearchTrace, nterms: int) -> tuple[float | None, ...]:
    out: list[float | None] = [None] * nterms
    for step in trace.steps:
        for j in range(nterms):
            if step.stats[j] is not None:
                out[j] = step.stats[j]
    return tuple(out)


def _run_method(scenario: Scenario, data, method: str, seed: int) -> KSearchTrace:
    pol = scenario.policy
    if method == METHOD_KAPPA:
        return doubling_driver(
            scenario.model_spec("gcv"), data, method,
            alpha=pol.alpha, max_doublings=pol.max_doublings, seed=seed,
            n_perm=pol.n_perm, neighbours=pol.neighbours,
        )
    if method == METHOD_RESMOOTH:
        return doubling_driver(
            scenario.model_spec("gcv"), data, method,
            alpha=pol.alpha, max_doublings=pol.max_doublings, seed=seed,
            edf_threshold=pol.edf_threshold,
        )
    if method == METHOD_GCV_GRID:
        return grid_search(scenario.model_spec("gcv"), data, [list(g) for g in pol.grids], "gcv")
    if method == METHOD_REML_GRID:
        return grid_search(scenario.model_spec("reml"), data, [list(g) for g in pol.grids], "reml")
    raise ValueError(f"unknown method {method!r}")


def run_experiment(scenario: Scenario) -> ScenarioResult:
    """Run every method on every replicate; abort on more than 5% failures."""
    rows: list[ReplicateRow] = []
    nterms = len(scenario.terms())
    for i in range(scenario.replicates):
        data = gen_data(scenario, i)
        seed = replicate_seed(scenario, i)
        for method in scenario.methods:
            t0 = time.perf_counter()
            try:
                trace = _run_method(scenario, data, method, seed)
                stats = _final_stats(trace, nterms)
                rows.append(
                    ReplicateRow(
                        scenario=scenario.id,
                        replicate=i,
                        method=method,
                        k_selected=trace.final_k,
                        mse=mse(trace.final_model, scenario, data),
                        p_values=stats if method == METHOD_KAPPA else None,
                        edf_stars=stats if method == METHOD_RESMOOTH else None,
                        refits=trace.refit_count,
                        seed=seed,
                        ms_elapsed=(time.perf_counter() - t0) * 1000.0,
                    )
                )
            except Exception as exc:  # noqa: BLE001 - failures become error rows
                rows.append(
                    ReplicateRow(
                        scenario=scenario.id,
                        replicate=i,
                        method=method,
                        k_selected=None,
                        mse=None,
                        p_values=None,
                        edf_stars=None,
                        refits=None,
                        seed=seed,
                        ms_elapsed=(time.perf_counter() - t0) * 1000.0,
                        error=str(exc),
                    )
                )
    result = ScenarioResult(scenario=scenario, rows=rows)
    if result.n_failures > 0.05 * len(rows):
        raise RuntimeError(f"{result.n_failures} of {len(rows)} replicate runs failed")
    return result
