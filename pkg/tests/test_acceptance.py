"""Acceptance suite: one test per exit criterion, each printing a summary line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see per-criterion
timings alongside the pass/fail verdicts.
"""

import collections
import csv
import time

import numpy as np
import pytest
from scipy import stats

import smoothdim as sd
from smoothdim.cli import main
from smoothdim.diagnostics import kappa_test, knn_indices
from smoothdim.fit import ModelSpec, assemble_design, edf_per_term, fit, penalized_solve
from smoothdim.kselect import doubling_driver
from smoothdim.simulation import Scenario, gen_data, run_experiment

from oracles import embed_penalties, exhaustive_knn, naive_bspline, normal_equations_solve


def report(name, detail):
    print(f"\n[criterion] {name}: {detail}")


def test_criterion_1_small_instance_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)

    worst_solve = 0.0
    worst_edf = 0.0
    for _ in range(100):
        n = int(rng.integers(20, 51))
        k = int(rng.integers(6, 13))
        x = np.sort(rng.uniform(0, 1, n))
        asm = assemble_design(ModelSpec(terms=(sd.BasisSpec(("x",), k),)), {"x": x})
        y = rng.normal(size=n)
        lam = [float(10.0 ** rng.uniform(-3, 3))]
        beta = penalized_solve(asm.X, asm.penalties, lam, y)
        oracle = normal_equations_solve(asm, lam, y)
        worst_solve = max(worst_solve, float(np.abs(beta - oracle).max() / np.abs(oracle).max()))

        per_term, trace = edf_per_term(asm.X, asm.penalties, lam)
        G = asm.X.T @ asm.X + embed_penalties(asm.penalties, lam, asm.X.shape[1])
        H = asm.X @ np.linalg.solve(G, asm.X.T)
        worst_edf = max(worst_edf, abs(trace - float(np.trace(H))))
        F = np.linalg.solve(G, asm.X.T @ asm.X)
        worst_edf = max(worst_edf, abs(per_term[0] - float(np.diag(F)[1:].sum())))

    assert worst_solve < 1e-8, f"penalized solve vs normal equations: {worst_solve:.3g}"
    assert worst_edf < 1e-8, f"edf block formula vs influence trace: {worst_edf:.3g}"

    x = rng.uniform(0, 1, 50)
    kv = sd.place_knots(np.linspace(0, 1, 60), 10, 3)
    B = sd.eval_bspline_basis(x, kv)
    worst_b = max(
        abs(B[r, i] - naive_bspline(xi, kv.knots, 3, i))
        for r, xi in enumerate(x)
        for i in range(10)
    )
    assert worst_b < 1e-12, f"basis evaluation vs naive recursion: {worst_b:.3g}"

    C = rng.normal(size=(200, 2))
    assert np.array_equal(knn_indices(C, 3), exhaustive_knn(C, 3)), "knn vs exhaustive scan"

    el = time.perf_counter() - t0
    assert el < 60.0
    report("small-instance oracles", f"solve {worst_solve:.2e}, edf {worst_edf:.2e}, basis {worst_b:.2e}, knn exact ({el:.1f}s)")


def test_criterion_2_exact_unit_values():
    expected = [[1, -2, 1, 0], [-2, 5, -4, 1], [1, -4, 5, -2], [0, 1, -2, 1]]
    assert np.array_equal(sd.difference_penalty(4, 2), expected)

    phi = sd.phi_delta_univariate(np.array([0.0, 1.0, 0.0, 1.0]), np.arange(4.0))
    assert phi == pytest.approx(0.5, abs=1e-15)

    X = np.column_stack([np.ones(4), np.array([0.0, 1.0, 2.0, 3.0])])
    e = np.array([1.0, -1.0, -1.0, 1.0]) / np.sqrt(2.0)
    y = X @ np.array([0.5, 1.5]) + e
    gcv = sd.criterion_score("gcv", X, [], [], y)
    assert gcv == pytest.approx(2.0, abs=1e-9)
    report("exact unit values", f"difference penalty, phi_delta=0.5, gcv={gcv:.12f}")


def test_criterion_3_null_calibration():
    # 200 replicates of the sigmoid scenario with a comfortably large basis:
    # kappa permutation p-values should look uniform if fitted residuals were
    # exchangeable.
    t0 = time.perf_counter()
    x = np.linspace(0, 1, 100)
    f = 1 / (1 + np.exp(-20 * (x - 0.5)))
    spec = ModelSpec(terms=(sd.BasisSpec(("x",), 20),))
    pvals = np.empty(200)
    for i in range(200):
        y = f + 0.2 * np.random.default_rng([12345, i]).standard_normal(100)
        m = fit(spec, {"x": x, "y": y})
        pvals[i] = kappa_test(m, 0, n_perm=199, seed=i).p_value
    ks_p = stats.kstest(pvals, "uniform").pvalue
    rejection = float(np.mean(pvals < 0.05))
    el = time.perf_counter() - t0
    report(
        "null calibration",
        f"KS uniformity p={ks_p:.3g}, rejection at 0.05 = {rejection:.3f} ({el:.0f}s)",
    )
    assert el < 600.0
    assert ks_p > 0.01, (
        f"kappa p-values are not uniform under a correct fit (KS p = {ks_p:.3g}; "
        f"median p = {np.median(pvals):.3f}). Fitted residuals are not exchangeable: "
        "shuffling destroys the smoothing-induced correlation, centring the "
        "permutation null below the observed statistic."
    )
    assert 0.02 <= rejection <= 0.09, (
        f"rejection rate at alpha=0.05 is {rejection:.3f}, outside [0.02, 0.09]"
    )


def test_criterion_4_power_and_stability():
    t0 = time.perf_counter()
    reps = 200

    sc3 = Scenario("uni-f3", replicates=reps)
    kappa_hits = resmooth_hits = 0
    for i in range(reps):
        data = gen_data(sc3, i)
        tr = doubling_driver(sc3.model_spec("gcv"), data, "kappa", seed=i)
        kappa_hits += tr.final_k[0] >= 20
        tr = doubling_driver(sc3.model_spec("gcv"), data, "resmooth", seed=i)
        resmooth_hits += tr.final_k[0] >= 20

    sc1 = Scenario("uni-f1", replicates=reps)
    stay_hits = 0
    for i in range(reps):
        data = gen_data(sc1, i)
        tr = doubling_driver(sc1.model_spec("gcv"), data, "kappa", seed=i)
        stay_hits += tr.final_k[0] == 10

    el = time.perf_counter() - t0
    report(
        "power and stability",
        f"f3 kappa {kappa_hits}/{reps}, f3 resmooth {resmooth_hits}/{reps}, "
        f"f1 stays {stay_hits}/{reps} ({el:.0f}s)",
    )
    assert el < 900.0
    assert kappa_hits >= 0.90 * reps, f"kappa driver reached k>=20 in only {kappa_hits}/{reps}"
    assert resmooth_hits >= 0.85 * reps, f"resmooth driver reached k>=20 in only {resmooth_hits}/{reps}"
    assert stay_hits >= 0.60 * reps, f"kappa driver stayed at k=10 in only {stay_hits}/{reps}"


def test_criterion_5_method_agreement():
    t0 = time.perf_counter()
    medians = {}
    for sid in ("uni-f1", "uni-f2", "uni-f3"):
        res = run_experiment(Scenario(sid, replicates=50))
        for method in ("kappa", "resmooth", "gcv-grid", "reml-grid"):
            vals = [r.mse for r in res.rows if r.method == method and r.error is None]
            medians[(sid, method)] = float(np.median(vals))
    el = time.perf_counter() - t0

    failures = []
    for sid in ("uni-f1", "uni-f2", "uni-f3"):
        methods = ["kappa", "resmooth", "gcv-grid", "reml-grid"]
        if sid == "uni-f3":
            methods.remove("reml-grid")  # documented exception at n=100
        for i, a in enumerate(methods):
            for b in methods[i + 1 :]:
                ratio = medians[(sid, a)] / medians[(sid, b)]
                ratio = max(ratio, 1.0 / ratio)
                if ratio > 1.5:
                    failures.append(f"{sid}: {a} vs {b} median MSE ratio {ratio:.2f}")
    detail = ", ".join(
        f"{sid}:{method[:2]}={medians[(sid, method)]:.4f}"
        for sid in ("uni-f1", "uni-f2", "uni-f3")
        for method in ("kappa", "resmooth", "gcv-grid", "reml-grid")
    )
    report("method agreement", f"{detail} ({el:.0f}s)")
    assert el < 1200.0
    assert not failures, "median MSE ratios above 1.5: " + "; ".join(failures)


def test_criterion_6_computational_efficiency():
    t0 = time.perf_counter()
    sc = Scenario("additive", n=200, replicates=20, methods=("kappa", "gcv-grid"), base_seed=17)
    res = run_experiment(sc)
    by_rep = collections.defaultdict(dict)
    for r in res.rows:
        assert r.error is None, r.error
        by_rep[r.replicate][r.method] = r.refits
    el = time.perf_counter() - t0
    wins = sum(d["kappa"] < d["gcv-grid"] for d in by_rep.values())
    grid_counts = {d["gcv-grid"] for d in by_rep.values()}
    report(
        "computational efficiency",
        f"kappa refits < grid refits in {wins}/20 replicates; grid refits={grid_counts} ({el:.0f}s)",
    )
    assert el < 600.0
    assert grid_counts == {16}
    assert wins == 20


def test_criterion_7_csv_determinism(tmp_path):
    args = [
        "simulate", "--scenario", "uni-f1", "--replicates", "3",
        "--method", "kappa,gcv-grid", "--seed", "31",
    ]
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--output", str(out1)]) == 0
    assert main(args + ["--output", str(out2)]) == 0

    def strip_timing(path):
        lines = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                lines.append(",".join(row[:-1]))
        return "\n".join(lines)

    a, b = strip_timing(out1), strip_timing(out2)
    assert a == b, "simulate output differs beyond the timing column"
    report("csv determinism", f"{len(a.splitlines()) - 1} data rows byte-identical excluding timing")
