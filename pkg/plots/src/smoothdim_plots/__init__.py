"""Figures from smoothdim simulation CSVs."""

from .figures import PlotRequest, build_figure, k_counts, load_results, mse_by_method, render

__all__ = ["PlotRequest", "build_figure", "k_counts", "load_results", "mse_by_method", "render"]
