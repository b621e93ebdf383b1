"""Amortized Bayesian inference on graph-structured data.

Pipeline: a permutation-invariant summary network compresses an attributed
graph to a fixed-length vector, which conditions a rational-quadratic spline
coupling flow over the simulator parameters.  Training pairs come from
built-in simulators; posterior quality is assessed with simulation-based
calibration, posterior contraction, and recovery diagnostics.
"""

from graphabi.graphs import Graph, PaddedGraph, Permutation

__all__ = ["Graph", "PaddedGraph", "Permutation"]
__version__ = "0.1.0"
