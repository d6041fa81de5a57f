"""Figure rendering for the point-cloud estimation harness CSV outputs."""

from .render import (
    DataError,
    GridTable,
    HeatmapRender,
    HeatmapSpec,
    LoglogRender,
    read_grid_csv,
    render_heatmap,
    render_loglog,
)

__all__ = [
    "DataError",
    "GridTable",
    "HeatmapRender",
    "HeatmapSpec",
    "LoglogRender",
    "read_grid_csv",
    "render_heatmap",
    "render_loglog",
]
