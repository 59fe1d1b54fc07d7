"""Render simulation results as MSE boxplots and selected-dimension bar plots.

Input is the CSV written by ``smoothdim simulate``; the expected header is
checked verbatim.  Figures are built on matplotlib Figure objects directly,
so no interactive backend is ever touched.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import pandas as pd
from matplotlib.figure import Figure

EXPECTED_HEADER = [
    "scenario", "replicate", "method", "term", "k_selected",
    "mse", "p_value", "edf_star", "refits", "seed", "ms_elapsed",
]

# Legend labels for the four selection methods.
METHOD_LABELS = {"kappa": "pv", "resmooth": "sm", "gcv-grid": "gcv", "reml-grid": "reml"}
METHOD_ORDER = ["kappa", "resmooth", "gcv-grid", "reml-grid"]
KINDS = ("mse-boxplot", "k-barplot")


@dataclass(frozen=True)
class PlotRequest:
    kind: str
    input_csv: str
    output: str
    scenario: str | None = None
    n: int | None = None


def load_results(path: str) -> pd.DataFrame:
    """Read a simulation CSV, insisting on the exact column contract."""
    df = pd.read_csv(path, dtype={"scenario": str, "method": str, "term": str})
    if list(df.columns) != EXPECTED_HEADER:
        raise ValueError(
            f"unexpected header in {path}: {list(df.columns)} (want {EXPECTED_HEADER})"
        )
    return df


def _methods_present(df: pd.DataFrame) -> list[str]:
    present = [m for m in METHOD_ORDER if m in set(df["method"])]
    extra = sorted(set(df["method"]) - set(METHOD_ORDER))
    return present + extra


def mse_by_method(df: pd.DataFrame) -> dict[str, dict[str, list[float]]]:
    """Per-scenario, per-method MSE values, one per replicate.

    Multi-term scenarios repeat the model MSE on every term row, so rows are
    first reduced to one per (scenario, replicate, method).
    """
    out: dict[str, dict[str, list[float]]] = {}
    reduced = df.dropna(subset=["mse"]).drop_duplicates(["scenario", "replicate", "method"])
    for (scenario, method), group in reduced.groupby(["scenario", "method"], sort=True):
        out.setdefault(scenario, {})[method] = group["mse"].tolist()
    return out


def k_counts(df: pd.DataFrame) -> dict[tuple[str, str, str, int], int]:
    """Count selected dimensions by (scenario, term, method, k)."""
    out: dict[tuple[str, str, str, int], int] = {}
    rows = df.dropna(subset=["k_selected"])
    for (scenario, term, method, k), group in rows.groupby(
        ["scenario", "term", "method", "k_selected"], sort=True
    ):
        out[(scenario, term, method, int(k))] = len(group)
    return out


def _apply_filters(df: pd.DataFrame, request: PlotRequest) -> pd.DataFrame:
    if request.scenario is not None:
        df = df[df["scenario"] == request.scenario]
        if df.empty:
            raise ValueError(f"no rows for scenario {request.scenario!r}")
    return df


def build_figure(df: pd.DataFrame, request: PlotRequest) -> tuple[Figure, dict]:
    """Build the requested figure; returns it with the plotted numbers.

    The metadata dictionary carries exactly what was drawn (per-panel box
    values or bar heights) so callers can verify the rendering against an
    independent tabulation of the CSV.
    """
    if request.kind not in KINDS:
        raise ValueError(f"unknown figure kind {request.kind!r} (choose from {KINDS})")
    df = _apply_filters(df, request)
    if df.empty:
        raise ValueError("no rows to plot")
    suffix = f", n={request.n}" if request.n is not None else ""

    if request.kind == "mse-boxplot":
        groups = mse_by_method(df)
        scenarios = sorted(groups)
        fig = Figure(figsize=(4.0 * len(scenarios), 3.4))
        axes = fig.subplots(1, len(scenarios), squeeze=False)[0]
        meta: dict = {"panels": scenarios, "values": {}}
        for ax, scenario in zip(axes, scenarios):
            methods = [m for m in _methods_present(df) if m in groups[scenario]]
            data = [groups[scenario][m] for m in methods]
            ax.boxplot(data, tick_labels=[METHOD_LABELS.get(m, m) for m in methods])
            ax.set_title(f"{scenario}{suffix}")
            ax.set_ylabel("MSE")
            meta["values"][scenario] = dict(zip(methods, data))
        fig.tight_layout()
        return fig, meta

    counts = k_counts(df)
    panels = sorted({(s, t) for s, t, _, _ in counts})
    fig = Figure(figsize=(4.0 * len(panels), 3.4))
    axes = fig.subplots(1, len(panels), squeeze=False)[0]
    meta = {"panels": panels, "heights": {}}
    for ax, (scenario, term) in zip(axes, panels):
        panel_methods = {m for (s, t, m, _) in counts if (s, t) == (scenario, term)}
        methods = [m for m in _methods_present(df) if m in panel_methods]
        ks = sorted({k for (s, t, m, k) in counts if (s, t) == (scenario, term)})
        width = 0.8 / max(len(methods), 1)
        heights = {}
        for j, method in enumerate(methods):
            h = [counts.get((scenario, term, method, k), 0) for k in ks]
            pos = [i + j * width for i in range(len(ks))]
            ax.bar(pos, h, width=width, label=METHOD_LABELS.get(method, method))
            heights[method] = dict(zip(ks, h))
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(ks))])
        ax.set_xticklabels([str(k) for k in ks])
        ax.set_title(f"{scenario}: {term}{suffix}")
        ax.set_xlabel("selected k")
        ax.set_ylabel("count")
        ax.legend()
        meta["heights"][(scenario, term)] = heights
    fig.tight_layout()
    return fig, meta


def render(request: PlotRequest) -> Path:
    """Load the CSV, build the figure, and write the image file."""
    df = load_results(request.input_csv)
    fig, _ = build_figure(df, request)
    out = Path(request.output)
    fig.savefig(out)
    return out
