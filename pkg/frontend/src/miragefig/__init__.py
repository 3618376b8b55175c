"""Figure rendering for the CSV files the simulation CLI emits.

The package never recomputes a metric: everything drawn comes straight
out of the CSVs, the only transformation being axis labeling. See
``plots`` for the schemas and ``cli`` for the ``plot`` entry point.
"""

from .plots import PlotSpec, SchemaError, build_figure, render

__version__ = "0.1.0"

__all__ = ["PlotSpec", "SchemaError", "build_figure", "render", "__version__"]
