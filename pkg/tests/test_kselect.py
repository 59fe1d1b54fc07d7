import numpy as np
import pytest

import smoothdim as sd
from smoothdim.fit import FitError, ModelSpec, fit
from smoothdim.kselect import doubling_driver, grid_search


def f3_data(n=100, seed=0):
    x = np.linspace(0, 1, n)
    y = np.sin(12 * np.pi * x) + 0.2 * np.random.default_rng(seed).standard_normal(n)
    return {"x": x, "y": y}


def spec_k(k, criterion="gcv"):
    return ModelSpec(terms=(sd.BasisSpec(("x",), k),), criterion=criterion)


class TestDoublingDriver:
    def test_zero_doublings_is_single_fit(self):
        tr = doubling_driver(spec_k(10), f3_data(), "kappa", max_doublings=0, seed=1)
        assert tr.refit_count == 1
        assert tr.final_k == (10,)
        assert tr.steps[0].decisions == ("stop-max",)

    def test_f3_doubles_away_from_k10(self):
        tr = doubling_driver(spec_k(10), f3_data(), "kappa", seed=1)
        assert tr.final_k[0] >= 20
        assert tr.steps[0].decisions == ("double",)
        assert tr.steps[0].stats[0] == pytest.approx(1.0 / 200.0)

    def test_resmooth_driver_also_detects_f3(self):
        tr = doubling_driver(spec_k(10), f3_data(seed=2), "resmooth", seed=2)
        assert tr.final_k[0] >= 20
        assert tr.steps[0].stats[0] > 1.5  # edf of the residual smooth

    def test_two_percent_stop_keeps_doubled_k(self):
        x = np.linspace(0, 1, 100)
        y = 0.2 * np.random.default_rng([500, 0]).standard_normal(100)
        tr = doubling_driver(spec_k(10), {"x": x, "y": y}, "kappa", alpha=0.95, seed=0)
        assert [s.decisions for s in tr.steps] == [("double",), ("stop-criterion",)]
        assert tr.final_k == (20,)
        assert tr.refit_count == 2

    def test_passed_term_never_redoubled(self):
        rng = np.random.default_rng(3)
        data = {
            "x1": rng.uniform(0, 1, 200),
            "x2": rng.uniform(0, 1, 200),
        }
        data["y"] = (
            np.sin(12 * np.pi * data["x1"])
            + np.sin(2 * np.pi * data["x2"])
            + 0.2 * rng.standard_normal(200)
        )
        spec = ModelSpec(terms=(sd.BasisSpec(("x1",), 10), sd.BasisSpec(("x2",), 10)))
        tr = doubling_driver(spec, data, "kappa", seed=3)
        passed = [None, None]
        for step in tr.steps:
            for j in range(2):
                if passed[j] is not None:
                    assert step.decisions[j] in ("stopped",)
                if step.decisions[j] == "pass":
                    passed[j] = True

    def test_fit_count_bound(self):
        for seed in range(3):
            tr = doubling_driver(spec_k(10), f3_data(seed=seed), "kappa", seed=seed)
            assert tr.refit_count <= 1 + 3 * 1

    def test_infeasible_doubling_freezes_term(self):
        # Only 30 distinct covariate values: the check still flags at k=20,
        # but a doubled basis is not constructible, so the term freezes.
        x = np.repeat(np.linspace(0, 1, 30), 4)
        y = np.sin(25 * np.pi * x) + 0.1 * np.random.default_rng(4).standard_normal(120)
        tr = doubling_driver(spec_k(20), {"x": x, "y": y}, "kappa", seed=4)
        assert tr.final_k == (20,)
        assert tr.steps[-1].decisions == ("frozen",)
        assert tr.refit_count == 1

    def test_determinism(self):
        a = doubling_driver(spec_k(10), f3_data(seed=5), "kappa", seed=9)
        b = doubling_driver(spec_k(10), f3_data(seed=5), "kappa", seed=9)
        assert a.final_k == b.final_k
        assert [s.decisions for s in a.steps] == [s.decisions for s in b.steps]
        assert [s.stats for s in a.steps] == [s.stats for s in b.steps]
        assert [s.criterion_value for s in a.steps] == [s.criterion_value for s in b.steps]

    def test_validation(self):
        with pytest.raises(ValueError):
            doubling_driver(spec_k(10), f3_data(), "gcv-grid")
        with pytest.raises(ValueError):
            doubling_driver(spec_k(10), f3_data(), "kappa", alpha=1.5)


class TestGridSearch:
    def test_single_element_grid(self):
        tr = grid_search(spec_k(10), f3_data(), [[10]], "gcv")
        assert tr.final_k == (10,)
        assert tr.refit_count == 1

    def test_univariate_grid_matches_external_argmin(self):
        data = f3_data(seed=6)
        tr = grid_search(spec_k(10), data, [[10, 20, 40, 80]], "gcv")
        assert tr.refit_count == 4
        scores = {}
        for k in (10, 20, 40, 80):
            scores[k] = fit(spec_k(k), data).criterion_value
        best = min(scores, key=lambda k: (scores[k], k))
        assert tr.final_k == (best,)
        assert tr.final_model.criterion_value == pytest.approx(scores[best])
        assert all(tr.final_model.criterion_value <= s.criterion_value + 1e-12 for s in tr.steps)

    def test_two_term_grid_refits_and_argmin(self):
        rng = np.random.default_rng(7)
        data = {"x1": rng.uniform(0, 1, 60), "x2": rng.uniform(0, 1, 60)}
        data["y"] = np.sin(2 * np.pi * data["x1"]) + data["x2"] + 0.2 * rng.standard_normal(60)
        spec = ModelSpec(terms=(sd.BasisSpec(("x1",), 6), sd.BasisSpec(("x2",), 6)))
        grids = [[6, 8, 10, 12], [6, 8, 10, 12]]
        tr = grid_search(spec, data, grids, "gcv")
        assert tr.refit_count == 16
        best = None
        for k1 in grids[0]:
            for k2 in grids[1]:
                trial = ModelSpec(terms=(sd.BasisSpec(("x1",), k1), sd.BasisSpec(("x2",), k2)))
                val = fit(trial, data).criterion_value
                key = (val, k1 + k2, (k1, k2))
                if best is None or key < best:
                    best = key
        assert tr.final_k == best[2]

    def test_infeasible_points_are_recorded(self):
        x = np.repeat(np.linspace(0, 1, 30), 2)
        y = np.sin(2 * np.pi * x) + 0.1 * np.random.default_rng(8).standard_normal(60)
        tr = grid_search(spec_k(10), {"x": x, "y": y}, [[10, 40]], "gcv")
        assert tr.refit_count == 1
        assert tr.final_k == (10,)
        assert tr.steps[1].decisions == ("infeasible",)

    def test_all_infeasible_is_error(self):
        x = np.repeat(np.linspace(0, 1, 15), 4)
        with pytest.raises(FitError, match="infeasible"):
            grid_search(spec_k(10), {"x": x, "y": np.ones(60)}, [[40, 80]], "gcv")
