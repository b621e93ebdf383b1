"""Joint training of summary + inference networks and amortized posteriors.

Parameters are standardized to [-1, 1] via their prior bounds before entering
the flow; posterior draws are destandardized back to natural units and clamped
to the prior support (spline tails can overshoot), with a clamp counter kept
for diagnostics.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from graphabi.encoders import SummaryNet, augment_features
from graphabi.flow import ConditionalFlow
from graphabi.graphs import PaddedGraph
from graphabi.nncore import DTYPE, ParameterStore, TrainStep, optimizer_step


class PriorError(ValueError):
    pass


@dataclass(frozen=True)
class PriorSpec:
    """Independent uniform priors, one (lo, hi) pair per target parameter."""

    names: tuple[str, ...]
    lows: np.ndarray
    highs: np.ndarray

    def __post_init__(self):
        lows = np.asarray(self.lows, dtype=np.float64)
        highs = np.asarray(self.highs, dtype=np.float64)
        if lows.shape != highs.shape or lows.ndim != 1 or len(self.names) != lows.size:
            raise PriorError("prior bounds must be 1-D and match the name list")
        if np.any(lows >= highs):
            raise PriorError("every prior must satisfy lo < hi")
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)

    @property
    def dim(self) -> int:
        return self.lows.size

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lows, self.highs, size=(size, self.dim))

    def variance(self) -> np.ndarray:
        return (self.highs - self.lows) ** 2 / 12.0


def standardize(theta: np.ndarray, prior: PriorSpec) -> np.ndarray:
    """Affine map of each coordinate onto [-1, 1]."""
    theta = np.asarray(theta, dtype=np.float64)
    tol = 1e-9 * (prior.highs - prior.lows)
    if np.any(theta < prior.lows - tol) or np.any(theta > prior.highs + tol):
        raise PriorError("theta outside prior support")
    return 2.0 * (theta - prior.lows) / (prior.highs - prior.lows) - 1.0


def destandardize(theta_std: np.ndarray, prior: PriorSpec) -> np.ndarray:
    theta_std = np.asarray(theta_std, dtype=np.float64)
    return prior.lows + (theta_std + 1.0) * (prior.highs - prior.lows) / 2.0


@dataclass
class GraphBatch:
    features: torch.Tensor            # (B, n, d_in)
    adjacency: torch.Tensor | None    # (B, n, n)
    mask: torch.Tensor                # (B, n)


def prepare_batch(graphs: Sequence[PaddedGraph], augment: str = "none",
                  with_adjacency: bool = True) -> GraphBatch:
    feats = np.stack([
        augment_features(pg.adjacency, pg.features, pg.mask, augment)
        for pg in graphs
    ])
    mask = np.stack([pg.mask for pg in graphs])
    adj = None
    if with_adjacency:
        adj = torch.as_tensor(np.stack([pg.adjacency for pg in graphs]), dtype=DTYPE)
    return GraphBatch(
        features=torch.as_tensor(feats, dtype=DTYPE),
        adjacency=adj,
        mask=torch.as_tensor(mask, dtype=DTYPE),
    )


@dataclass
class Networks:
    """Summary network + conditional flow + the shared prior and augment mode."""

    summary: SummaryNet
    flow: ConditionalFlow
    prior: PriorSpec
    augment: str = "none"

    def store(self) -> ParameterStore:
        return ParameterStore.from_modules(
            {"summary": self.summary, "flow": self.flow}
        )

    def eval(self) -> None:
        self.summary.eval()
        self.flow.eval()

    def train(self) -> None:
        self.summary.train()
        self.flow.train()


def nll_loss(theta: np.ndarray, batch: GraphBatch, nets: Networks) -> torch.Tensor:
    """Mean negative log posterior density over the batch, differentiable."""
    if len(theta) == 0:
        raise ValueError("batch must be nonempty")
    theta_std = torch.as_tensor(standardize(theta, nets.prior), dtype=DTYPE)
    s = nets.summary(batch.features, batch.adjacency, batch.mask)
    log_p = nets.flow.log_prob(theta_std, s)
    bad = ~torch.isfinite(log_p)
    if bad.any():
        idx = int(bad.nonzero()[0])
        raise RuntimeError(f"non-finite loss contribution at sample index {idx}")
    return -log_p.mean()


@dataclass
class TrainConfig:
    regime: str = "online"            # online | offline
    epochs: int = 50
    batches_per_epoch: int = 100
    batch_size: int = 32
    validation_size: int = 500
    patience: int = 10
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.regime not in ("online", "offline"):
            raise ValueError(f"unknown regime: {self.regime!r}")
        if min(self.epochs, self.batches_per_epoch, self.batch_size) < 1:
            raise ValueError("epoch/batch counts must be positive")
        if self.regime == "offline" and self.patience < 1:
            raise ValueError("offline training needs patience >= 1")


@dataclass
class TrainingRun:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    wall_clock: float = 0.0
    best_arrays: dict | None = None


Simulator = Callable[[np.ndarray, np.random.Generator], PaddedGraph]
"""Maps one natural-unit theta row and an rng to a padded graph."""


def _simulate_batch(prior: PriorSpec, simulator: Simulator, batch_size: int,
                    rng: np.random.Generator) -> tuple[np.ndarray, list[PaddedGraph]]:
    theta = prior.sample(rng, batch_size)
    graphs = [simulator(theta[i], rng) for i in range(batch_size)]
    return theta, graphs


def train_online(simulator: Simulator, nets: Networks, cfg: TrainConfig,
                 log_every: int = 0) -> TrainingRun:
    """Fresh simulations each batch; one optimizer step per batch."""
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    store = nets.store()
    opt = TrainStep(lr=cfg.lr)
    run = TrainingRun()
    t0 = time.time()
    nets.train()
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for b in range(cfg.batches_per_epoch):
            try:
                theta, graphs = _simulate_batch(nets.prior, simulator,
                                                cfg.batch_size, rng)
            except Exception as exc:
                raise RuntimeError(
                    f"simulator failed at epoch {epoch}, batch {b}: {exc}"
                ) from exc
            batch = prepare_batch(graphs, nets.augment)
            loss = nll_loss(theta, batch, nets)
            store.zero_grad()
            loss.backward()
            optimizer_step(store, opt)
            epoch_losses.append(loss.item())
        run.train_losses.append(float(np.mean(epoch_losses)))
        if log_every and (epoch + 1) % log_every == 0:
            print(f"[online] epoch {epoch + 1}/{cfg.epochs} "
                  f"loss {run.train_losses[-1]:.4f}", flush=True)
    run.wall_clock = time.time() - t0
    run.best_epoch = len(run.train_losses) - 1
    run.best_arrays = store.state_arrays()
    nets.eval()
    return run


def _dataset_loss(records: Sequence[tuple[np.ndarray, PaddedGraph]], nets: Networks,
                  batch_size: int) -> float:
    nets.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(records), batch_size):
            chunk = records[i:i + batch_size]
            theta = np.stack([r[0] for r in chunk])
            batch = prepare_batch([r[1] for r in chunk], nets.augment)
            total += nll_loss(theta, batch, nets).item() * len(chunk)
            count += len(chunk)
    nets.train()
    return total / count


def train_offline(train_set: Sequence[tuple[np.ndarray, PaddedGraph]],
                  val_set: Sequence[tuple[np.ndarray, PaddedGraph]],
                  nets: Networks, cfg: TrainConfig,
                  log_every: int = 0) -> TrainingRun:
    """Shuffled full passes with early stopping on the validation loss."""
    if not train_set or not val_set:
        raise ValueError("train and validation sets must be nonempty")
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    store = nets.store()
    opt = TrainStep(lr=cfg.lr)
    run = TrainingRun()
    t0 = time.time()
    best_val = float("inf")
    since_best = 0
    nets.train()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_set))
        epoch_losses = []
        for i in range(0, len(order), cfg.batch_size):
            chunk = [train_set[j] for j in order[i:i + cfg.batch_size]]
            theta = np.stack([r[0] for r in chunk])
            batch = prepare_batch([r[1] for r in chunk], nets.augment)
            loss = nll_loss(theta, batch, nets)
            store.zero_grad()
            loss.backward()
            optimizer_step(store, opt)
            epoch_losses.append(loss.item())
        run.train_losses.append(float(np.mean(epoch_losses)))
        val = _dataset_loss(val_set, nets, cfg.batch_size)
        run.val_losses.append(val)
        if log_every and (epoch + 1) % log_every == 0:
            print(f"[offline] epoch {epoch + 1}/{cfg.epochs} "
                  f"train {run.train_losses[-1]:.4f} val {val:.4f}", flush=True)
        if val < best_val:
            best_val = val
            run.best_epoch = epoch
            run.best_arrays = store.state_arrays()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    if run.best_arrays is not None:
        store.load_arrays(run.best_arrays)
    run.wall_clock = time.time() - t0
    nets.eval()
    return run


def posterior_for(pg: PaddedGraph, nets: Networks, num_draws: int,
                  seed: int) -> tuple[np.ndarray, int]:
    """Amortized inference: summary -> flow sampling -> natural units.

    Returns (num_draws x P draws, clamp count); draws outside the prior
    support after destandardization are clamped to the boundary.
    """
    nets.eval()
    batch = prepare_batch([pg], nets.augment)
    with torch.no_grad():
        s = nets.summary(batch.features, batch.adjacency, batch.mask)
    gen = torch.Generator().manual_seed(seed)
    draws_std = nets.flow.sample(s.squeeze(0), num_draws, generator=gen).numpy()
    draws = destandardize(draws_std, nets.prior)
    clamped = np.clip(draws, nets.prior.lows, nets.prior.highs)
    n_clamped = int(np.sum(np.any(clamped != draws, axis=1)))
    return clamped, n_clamped


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_run_manifest(path: str | Path, cfg_hash: str, seed: int,
                       run: TrainingRun) -> None:
    lines = [f"config_hash\t{cfg_hash}", f"seed\t{seed}",
             f"best_epoch\t{run.best_epoch}",
             f"wall_clock_s\t{run.wall_clock:.1f}",
             "train_losses\t" + ",".join(f"{x:.6f}" for x in run.train_losses)]
    if run.val_losses:
        lines.append("val_losses\t" + ",".join(f"{x:.6f}" for x in run.val_losses))
    Path(path).write_text("\n".join(lines) + "\n")
