"""Microbiome exchange on a weighted social network of mice.

An Erdos-Renyi network with density delta carries Unif(0, 1) edge weights.
Each mouse starts with 5 of 20 taxa in equal shares summing to 100.  Each day
every connected pair mixes taxa shares symmetrically with coefficient
alpha * w_ij, tiny shares are removed, acquired taxa that received no inflow
for four consecutive days are removed, and rows are renormalized to 100.
The observation is the final-day taxa matrix plus the weighted adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from graphabi.engine import PriorSpec
from graphabi.graphs import Graph, PaddedGraph, pad_graph

MICE_PRIOR = PriorSpec(
    names=("delta", "alpha"),
    lows=np.array([0.01, 0.05]),
    highs=np.array([0.5, 0.5]),
)


@dataclass(frozen=True)
class MiceConfig:
    n_mice: int = 30
    n_taxa: int = 20
    n_initial: int = 5
    presence_threshold: float = 1e-4  # percent
    stale_limit: int = 4


def sample_network(delta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Erdos-Renyi ties with probability delta; weights Unif(0, 1)."""
    upper = np.triu(rng.random((n, n)) < delta, k=1)
    weights = np.triu(rng.random((n, n)), k=1) * upper
    return weights + weights.T


def mice_simulate(theta: np.ndarray, days: int, rng: np.random.Generator,
                  cfg: MiceConfig = MiceConfig(),
                  fixed_network: np.ndarray | None = None) -> Graph:
    """Run the daily exchange process; ``fixed_network`` is a test hook."""
    theta = np.asarray(theta, dtype=np.float64)
    if days < 1:
        raise ValueError("days must be >= 1")
    if np.any(theta < MICE_PRIOR.lows) or np.any(theta > MICE_PRIOR.highs):
        raise ValueError("theta outside prior support")
    delta, alpha = theta

    w = fixed_network if fixed_network is not None else sample_network(
        delta, cfg.n_mice, rng)

    x = np.zeros((cfg.n_mice, cfg.n_taxa))
    initial = np.zeros((cfg.n_mice, cfg.n_taxa), dtype=bool)
    for i in range(cfg.n_mice):
        taxa = rng.choice(cfg.n_taxa, size=cfg.n_initial, replace=False)
        x[i, taxa] = 100.0 / cfg.n_initial
        initial[i, taxa] = True

    edges = np.argwhere(np.triu(w, k=1) > 0)
    stale = np.zeros((cfg.n_mice, cfg.n_taxa), dtype=np.int64)

    for _ in range(days):
        received = np.zeros((cfg.n_mice, cfg.n_taxa), dtype=bool)
        for i, j in edges:
            coeff = alpha * w[i, j]
            diff = x[j] - x[i]  # symmetric mixing from pre-edge values
            x[i] = x[i] + coeff * diff
            x[j] = x[j] - coeff * diff
            received[i] |= diff > 0
            received[j] |= diff < 0
        x[x < cfg.presence_threshold] = 0.0
        # staleness applies only to acquired (non-initial) taxa
        acquired = (x > 0) & ~initial
        stale = np.where(acquired & ~received, stale + 1, 0)
        x[stale >= cfg.stale_limit] = 0.0
        stale[stale >= cfg.stale_limit] = 0
        totals = x.sum(axis=1, keepdims=True)
        alive = totals[:, 0] > 0
        x[alive] *= 100.0 / totals[alive]

    return Graph(adjacency=w, features=x)


def make_mice_simulator(days: int, cfg: MiceConfig = MiceConfig()):
    """Engine-compatible simulator: (theta, rng) -> PaddedGraph."""

    def simulate(theta: np.ndarray, rng: np.random.Generator) -> PaddedGraph:
        return pad_graph(mice_simulate(theta, days, rng, cfg), cfg.n_mice)

    return simulate, cfg.n_mice
