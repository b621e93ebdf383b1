"""Discrete-event rail simulator: four trains on ten single-occupancy sections.

Fixed topology: ring 0-1-...-9-0 plus chords {0-5, 2-7, 4-9}.  Each run draws
integer default traversal times in {5..25} minutes and four random 4-section
routes starting from distinct sections.  A traversal incurs an exogenous
Gamma(shape 5, rate 0.5) delay with probability 0.1.  A waiting train keeps
occupying its current section; contested entries go to the train that has
waited longest (lower index on ties).  Observations are the trains' total
travel times plus unit Gaussian noise.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from graphabi.engine import PriorSpec
from graphabi.graphs import Graph, PaddedGraph, pad_graph

N_SECTIONS = 10
N_TRAINS = 4
ROUTE_LEN = 4
T_DEFAULT_LOW, T_DEFAULT_HIGH = 5, 25
DELAY_PROB = 0.1
DELAY_SHAPE = 5.0
DELAY_RATE = 0.5

# standardization bounds for observed total travel times (minutes)
RAIL_BOUNDS = PriorSpec(
    names=("t_obs_1", "t_obs_2", "t_obs_3", "t_obs_4"),
    lows=np.full(4, 10.0),
    highs=np.full(4, 300.0),
)

_CHORDS = ((0, 5), (2, 7), (4, 9))


def _build_neighbors() -> list[list[int]]:
    neigh = [set() for _ in range(N_SECTIONS)]
    for i in range(N_SECTIONS):
        neigh[i].add((i + 1) % N_SECTIONS)
        neigh[i].add((i - 1) % N_SECTIONS)
    for a, b in _CHORDS:
        neigh[a].add(b)
        neigh[b].add(a)
    return [sorted(s) for s in neigh]


NEIGHBORS = _build_neighbors()


class RailDeadlockError(RuntimeError):
    """Watchdog: every remaining train is waiting on an occupied section."""


@dataclass(frozen=True)
class RailScenario:
    t_default: np.ndarray  # (10,) minutes
    routes: np.ndarray     # (4, 4) section indices per (train, step)

    def __post_init__(self):
        t = np.asarray(self.t_default, dtype=np.float64)
        r = np.asarray(self.routes, dtype=np.int64)
        if t.shape != (N_SECTIONS,) or r.shape != (N_TRAINS, ROUTE_LEN):
            raise ValueError("bad scenario shapes")
        starts = r[:, 0]
        if len(set(starts.tolist())) != N_TRAINS:
            raise ValueError("train starts must be distinct sections")
        for tr in range(N_TRAINS):
            for k in range(ROUTE_LEN - 1):
                if r[tr, k + 1] not in NEIGHBORS[r[tr, k]]:
                    raise ValueError(f"route of train {tr} leaves the topology")
        object.__setattr__(self, "t_default", t)
        object.__setattr__(self, "routes", r)


def sample_scenario(rng: np.random.Generator) -> RailScenario:
    t_default = rng.integers(T_DEFAULT_LOW, T_DEFAULT_HIGH + 1,
                             size=N_SECTIONS).astype(np.float64)
    starts = rng.choice(N_SECTIONS, size=N_TRAINS, replace=False)
    routes = np.zeros((N_TRAINS, ROUTE_LEN), dtype=np.int64)
    for tr in range(N_TRAINS):
        routes[tr, 0] = starts[tr]
        for k in range(1, ROUTE_LEN):
            options = NEIGHBORS[routes[tr, k - 1]]
            routes[tr, k] = options[rng.integers(len(options))]
    return RailScenario(t_default=t_default, routes=routes)


def simulate_run(scenario: RailScenario, rng: np.random.Generator,
                 disable_delays: bool = False,
                 max_events: int = 10_000) -> np.ndarray:
    """One continuous-time run; returns the four true total travel times."""
    routes = scenario.routes
    occupant = [-1] * N_SECTIONS
    step = [0] * N_TRAINS              # index into the route
    done = [False] * N_TRAINS
    t_true = np.zeros(N_TRAINS)
    # waiting[s] holds (wait_start, train_index) entries for section s
    waiting: list[list[tuple[float, int]]] = [[] for _ in range(N_SECTIONS)]
    events: list[tuple[float, int]] = []  # (finish_time, train)

    def duration(section: int, now_rng: np.random.Generator) -> float:
        d = scenario.t_default[section]
        if not disable_delays and now_rng.random() < DELAY_PROB:
            d += now_rng.gamma(DELAY_SHAPE, 1.0 / DELAY_RATE)
        return float(d)

    def start_traversal(train: int, section: int, now: float) -> None:
        occupant[section] = train
        heapq.heappush(events, (now + duration(section, rng), train))

    def vacate(section: int, now: float) -> None:
        occupant[section] = -1
        if waiting[section]:
            waiting[section].sort()  # longest wait first; ties by train index
            _, train = waiting[section].pop(0)
            old = routes[train, step[train]]
            step[train] += 1
            start_traversal(train, section, now)
            vacate(old, now)

    for tr in range(N_TRAINS):
        start_traversal(tr, routes[tr, 0], 0.0)

    processed = 0
    while events:
        processed += 1
        if processed > max_events:
            raise RailDeadlockError("event budget exceeded")
        now, train = heapq.heappop(events)
        here = routes[train, step[train]]
        if step[train] == ROUTE_LEN - 1:
            done[train] = True
            t_true[train] = now
            vacate(here, now)
            continue
        nxt = routes[train, step[train] + 1]
        if occupant[nxt] == -1 and not waiting[nxt]:
            step[train] += 1
            start_traversal(train, nxt, now)
            vacate(here, now)
        else:
            waiting[nxt].append((now, train))

    if not all(done):
        raise RailDeadlockError("circular wait among trains")
    return t_true


def encode_scenario(scenario: RailScenario) -> np.ndarray:
    """10 x 17 conditioning matrix: default times + (train, step) one-hots."""
    enc = np.zeros((N_SECTIONS, 1 + N_TRAINS * ROUTE_LEN))
    enc[:, 0] = scenario.t_default
    for tr in range(N_TRAINS):
        for k in range(ROUTE_LEN):
            enc[scenario.routes[tr, k], 1 + tr * ROUTE_LEN + k] = 1.0
    return enc


def rail_simulate(rng: np.random.Generator, scenario: RailScenario | None = None,
                  disable_delays: bool = False, disable_noise: bool = False
                  ) -> tuple[PaddedGraph, np.ndarray]:
    """Sample (scenario encoding, observed travel times) for one run.

    Randomly drawn scenarios that deadlock are rejected and redrawn; with an
    explicit scenario the deadlock error propagates to the caller.
    """
    if scenario is None:
        for _ in range(1000):
            scenario = sample_scenario(rng)
            try:
                t_true = simulate_run(scenario, rng,
                                      disable_delays=disable_delays)
                break
            except RailDeadlockError:
                continue
        else:
            raise RailDeadlockError("could not sample a deadlock-free scenario")
    else:
        t_true = simulate_run(scenario, rng, disable_delays=disable_delays)
    t_obs = t_true if disable_noise else t_true + rng.standard_normal(N_TRAINS)
    graph = Graph(adjacency=np.zeros((N_SECTIONS, N_SECTIONS)),
                  features=encode_scenario(scenario))
    return pad_graph(graph, N_SECTIONS), t_obs
