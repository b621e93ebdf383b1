"""Two-type random graph simulator with triadic closure.

Nodes carry a binary type label (A = 1, B = 0).  Base edges are independent
Bernoulli draws with type-pair probabilities (pi_aa, pi_bb, pi_ab); a second
single pass revisits every non-edge whose endpoints share at least one common
neighbor in the base graph and adds it with probability lambda.  Common
neighbors are computed once from the base graph, so the pass is
order-independent.
"""

from __future__ import annotations

import numpy as np

from graphabi.engine import PriorSpec
from graphabi.graphs import Graph, PaddedGraph, common_neighbors, pad_graph

TOY_PRIOR = PriorSpec(
    names=("pi_aa", "pi_bb", "pi_ab", "lambda"),
    lows=np.array([0.1, 0.1, 0.1, 0.1]),
    highs=np.array([0.9, 0.9, 0.9, 0.9]),
)

NUM_A_LOW, NUM_A_HIGH = 5, 25
N_FIXED = 30
VARY_N_LOW, VARY_N_HIGH = 10, 50


def toy_prior_sample(rng: np.random.Generator, vary_n: bool = False
                     ) -> tuple[np.ndarray, int, int]:
    """Draw (theta, num_a, n).  num_a is a simulator-internal nuisance."""
    theta = TOY_PRIOR.sample(rng, 1)[0]
    n = int(rng.integers(VARY_N_LOW, VARY_N_HIGH + 1)) if vary_n else N_FIXED
    num_a = int(rng.integers(NUM_A_LOW, min(NUM_A_HIGH, n) + 1))
    return theta, num_a, n


def toy_simulate(theta: np.ndarray, n: int, num_a: int, rng: np.random.Generator,
                 force_lambda_zero: bool = False) -> Graph:
    """Simulate one labeled graph; ``force_lambda_zero`` is a test hook."""
    theta = np.asarray(theta, dtype=np.float64)
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if np.any(theta < TOY_PRIOR.lows) or np.any(theta > TOY_PRIOR.highs):
        raise ValueError("theta outside prior support")
    if not 0 <= num_a <= n:
        raise ValueError("num_a must lie in {0..n}")
    pi_aa, pi_bb, pi_ab, lam = theta
    if force_lambda_zero:
        lam = 0.0

    labels = np.zeros(n)
    labels[:num_a] = 1.0
    same_a = np.outer(labels, labels) > 0
    same_b = np.outer(1 - labels, 1 - labels) > 0
    p = np.where(same_a, pi_aa, np.where(same_b, pi_bb, pi_ab))

    upper = np.triu(rng.random((n, n)) < p, k=1)
    base = (upper | upper.T).astype(np.float64)

    cn = common_neighbors(base)
    np.fill_diagonal(cn, 0)
    candidates = np.triu((base == 0) & (cn > 0), k=1)
    added = candidates & (rng.random((n, n)) < lam)
    adj = base + (added | added.T).astype(np.float64)

    return Graph(adjacency=adj, features=labels.reshape(-1, 1))


def make_toy_simulator(vary_n: bool = False):
    """Engine-compatible simulator: (theta, rng) -> PaddedGraph.

    Returns (simulator, n_max); the nuisance draws (num_a, and n when varying)
    happen inside the simulator.
    """
    n_max = VARY_N_HIGH if vary_n else N_FIXED

    def simulate(theta: np.ndarray, rng: np.random.Generator) -> PaddedGraph:
        n = int(rng.integers(VARY_N_LOW, VARY_N_HIGH + 1)) if vary_n else N_FIXED
        num_a = int(rng.integers(NUM_A_LOW, min(NUM_A_HIGH, n) + 1))
        return pad_graph(toy_simulate(theta, n, num_a, rng), n_max)

    return simulate, n_max
