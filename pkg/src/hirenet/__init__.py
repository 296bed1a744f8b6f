"""Dominance-hierarchy analysis of weighted directed networks."""

from .errors import (ConvergenceError, DivergenceError, HirenetError, InputError, LoadError,
                     NumericalError, UndefinedStatisticError)
from .netcore import NodeRecord, WeightedDigraph, describe, load_graph, save_graph

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "DivergenceError", "HirenetError", "InputError", "LoadError",
    "NumericalError", "UndefinedStatisticError", "NodeRecord", "WeightedDigraph",
    "describe", "load_graph", "save_graph", "__version__",
]
