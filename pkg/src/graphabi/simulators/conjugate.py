"""Built-in Gaussian mean-inference problem with a known posterior.

The observation is an edgeless graph whose 20 node features are i.i.d.
N(mu, 1) draws; mu has a Unif(2, 10) prior.  The exact posterior is a normal
with mean x-bar and sd 1/sqrt(20), truncated to the prior support, which gives
an analytic oracle for end-to-end checks and SBC self-consistency.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from graphabi.engine import PriorSpec
from graphabi.graphs import Graph, PaddedGraph, pad_graph

CONJUGATE_PRIOR = PriorSpec(names=("mu",), lows=np.array([2.0]),
                            highs=np.array([10.0]))
N_OBSERVATIONS = 20
NOISE_SD = 1.0


def conjugate_simulate(theta: np.ndarray, rng: np.random.Generator) -> PaddedGraph:
    mu = float(np.asarray(theta).reshape(-1)[0])
    x = rng.normal(mu, NOISE_SD, size=(N_OBSERVATIONS, 1))
    g = Graph(adjacency=np.zeros((N_OBSERVATIONS, N_OBSERVATIONS)), features=x)
    return pad_graph(g, N_OBSERVATIONS)


def analytic_posterior(x_bar: float):
    """Truncated-normal posterior for mu given the sample mean."""
    lo, hi = CONJUGATE_PRIOR.lows[0], CONJUGATE_PRIOR.highs[0]
    scale = NOISE_SD / np.sqrt(N_OBSERVATIONS)
    a, b = (lo - x_bar) / scale, (hi - x_bar) / scale
    return stats.truncnorm(a, b, loc=x_bar, scale=scale)
