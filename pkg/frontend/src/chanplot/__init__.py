"""Plotting for sweep result CSVs produced by the prediction harness."""

from .figures import (FigureSpec, MethodCurve, plot_nmse, read_sweep_csv,
                      summarize)

__all__ = ["FigureSpec", "MethodCurve", "plot_nmse", "read_sweep_csv",
           "summarize"]
