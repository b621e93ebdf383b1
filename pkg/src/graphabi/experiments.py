"""Canonical experiment wiring: priors, simulators, default networks, and
end-to-end run helpers shared by the CLI and the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from graphabi import diagnostics as diag
from graphabi.encoders import EncoderConfig, SummaryNet, augmented_width
from graphabi.engine import (Networks, PriorSpec, Simulator, TrainConfig,
                             TrainingRun, config_hash, posterior_for,
                             train_offline, train_online, write_run_manifest)
from graphabi.flow import ConditionalFlow
from graphabi.graphs import PaddedGraph
from graphabi.nncore import load_checkpoint, save_checkpoint
from graphabi.simulators import (CONJUGATE_PRIOR, MICE_PRIOR, RAIL_BOUNDS,
                                 TOY_PRIOR, conjugate_simulate,
                                 make_mice_simulator, make_toy_simulator,
                                 rail_simulate, sample_scenario)

EXPERIMENT_NAMES = ("toy", "toy_vary_n", "mice", "rail", "conjugate_gaussian")

# non-structural architectures read the graph through equivariant structure
# summaries; message-passing architectures consume the adjacency directly
DEFAULT_AUGMENT = {
    "deep_sets": "structural",
    "set_transformer": "structural",
    "gcn": "none",
    "graph_transformer": "none",
}


@dataclass(frozen=True)
class ExperimentSetup:
    name: str
    prior: PriorSpec
    simulator: Simulator
    n_max: int
    feature_dim: int
    with_adjacency: bool = True


def make_setup(name: str, mice_days: int = 5) -> ExperimentSetup:
    if name == "toy" or name == "toy_vary_n":
        sim, n_max = make_toy_simulator(vary_n=(name == "toy_vary_n"))
        return ExperimentSetup(name, TOY_PRIOR, sim, n_max, 1)
    if name == "mice":
        sim, n_max = make_mice_simulator(days=mice_days)
        return ExperimentSetup(name, MICE_PRIOR, sim, n_max, 20)
    if name == "rail":
        def sim(theta, rng):  # theta is ignored: the joint draw happens inside
            raise RuntimeError("rail pairs are generated jointly; use rail_records")
        return ExperimentSetup(name, RAIL_BOUNDS, sim, 10, 17,
                               with_adjacency=False)
    if name == "conjugate_gaussian":
        return ExperimentSetup(name, CONJUGATE_PRIOR, conjugate_simulate, 20, 1)
    raise ValueError(f"unknown experiment: {name!r}")


def build_networks(setup: ExperimentSetup, encoder: EncoderConfig,
                   flow_layers: int = 6, flow_bins: int = 8,
                   flow_bound: float = 3.0, flow_hidden: int = 64) -> Networks:
    if encoder.augment == "none" and setup.name in ("toy", "toy_vary_n", "mice"):
        augment = DEFAULT_AUGMENT[encoder.architecture]
        encoder = replace(encoder, augment=augment)
    input_dim = augmented_width(setup.feature_dim, setup.n_max, encoder.augment)
    summary = SummaryNet(encoder, input_dim)
    flow = ConditionalFlow(setup.prior.dim, encoder.summary_dim,
                           num_layers=flow_layers, num_bins=flow_bins,
                           bound=flow_bound, hidden_dim=flow_hidden)
    return Networks(summary=summary, flow=flow, prior=setup.prior,
                    augment=encoder.augment)


def rail_records(num_scenarios: int, obs_per_scenario: int, seed: int
                 ) -> list[tuple[np.ndarray, PaddedGraph]]:
    """(T_obs, scenario encoding) pairs: each scenario observed repeatedly."""
    from graphabi.simulators.rail import RailDeadlockError
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(num_scenarios):
        # delay realizations can turn a workable scenario into a circular
        # wait, so a scenario is kept only if all its observations complete
        for _attempt in range(100):
            scenario = sample_scenario(rng)
            block = []
            try:
                for _ in range(obs_per_scenario):
                    graph, t_obs = rail_simulate(rng, scenario=scenario)
                    block.append((t_obs, graph))
            except RailDeadlockError:
                continue
            records.extend(block)
            break
        else:
            raise RailDeadlockError("could not sample a deadlock-free scenario")
    return records


def simulate_records(setup: ExperimentSetup, count: int, seed: int
                     ) -> list[tuple[np.ndarray, PaddedGraph]]:
    rng = np.random.default_rng(seed)
    theta = setup.prior.sample(rng, count)
    return [(theta[i], setup.simulator(theta[i], rng)) for i in range(count)]


@dataclass
class EvalResult:
    truths: np.ndarray      # (N, P)
    medians: np.ndarray     # (N, P)
    ci_low: np.ndarray
    ci_high: np.ndarray
    recovery: np.ndarray    # (P,)
    contraction: np.ndarray # (P,), mean over cases
    clamp_count: int


def evaluate_posteriors(cases: list[tuple[np.ndarray, PaddedGraph]],
                        nets: Networks, num_draws: int = 250,
                        seed: int = 1234) -> EvalResult:
    """Recovery/contraction summary over held-out (theta, graph) test cases."""
    p = nets.prior.dim
    n = len(cases)
    truths = np.zeros((n, p))
    medians = np.zeros((n, p))
    ci_low = np.zeros((n, p))
    ci_high = np.zeros((n, p))
    pcs = np.zeros((n, p))
    clamps = 0
    for i, (theta, graph) in enumerate(cases):
        draws, n_clamped = posterior_for(graph, nets, num_draws, seed + i)
        clamps += n_clamped
        truths[i] = theta
        medians[i] = np.median(draws, axis=0)
        ci_low[i] = np.percentile(draws, 2.5, axis=0)
        ci_high[i] = np.percentile(draws, 97.5, axis=0)
        pcs[i] = diag.posterior_contraction(draws, nets.prior)
    rec = np.array([diag.recovery(truths[:, j], medians[:, j]) for j in range(p)])
    return EvalResult(truths=truths, medians=medians, ci_low=ci_low,
                      ci_high=ci_high, recovery=rec,
                      contraction=pcs.mean(axis=0), clamp_count=clamps)


def save_networks(nets: Networks, path: str | Path) -> None:
    save_checkpoint(nets.store().state_arrays(), path)


def load_networks(nets: Networks, path: str | Path) -> None:
    nets.store().load_arrays(load_checkpoint(path))


def build_report(setup: ExperimentSetup, ev: EvalResult,
                 sbc: diag.SbcResult | None, metadata: dict) -> diag.MetricsReport:
    log_gamma = sbc.log_gamma if sbc is not None else np.full(setup.prior.dim, np.nan)
    return diag.MetricsReport(
        parameter_names=setup.prior.names,
        recovery=ev.recovery,
        contraction=ev.contraction,
        log_gamma=log_gamma,
        clamp_count=ev.clamp_count,
        metadata=metadata,
        truths=ev.truths, medians=ev.medians,
        ci_low=ev.ci_low, ci_high=ev.ci_high,
    )


# --- end-to-end experiment runners ---------------------------------------------

def run_conjugate(out_dir: str | Path, seed: int = 0, full: bool = False,
                  sbc_reps: int = 500, sbc_draws: int = 100,
                  log_every: int = 0) -> tuple[diag.MetricsReport, diag.SbcResult, Networks]:
    """Train on the Gaussian mean problem and emit the full diagnostics set."""
    setup = make_setup("conjugate_gaussian")
    encoder = EncoderConfig(architecture="deep_sets", pooling="invariant",
                            summary_dim=8, hidden_dim=48, augment="structural")
    # wide spline bound: base-Gaussian mass beyond the bound passes through the
    # identity tails, lands outside the prior support, and gets clamped to the
    # boundary, inflating the posterior spread
    nets = build_networks(setup, encoder, flow_bound=5.0, flow_bins=12)
    phases = [(80 if full else 40, 1e-3), (30, 1e-4), (20, 2e-5)]
    run = TrainingRun()
    for k, (epochs, lr) in enumerate(phases):
        cfg = TrainConfig(regime="online", epochs=epochs, batches_per_epoch=100,
                          batch_size=64, seed=seed + k, lr=lr)
        part = train_online(setup.simulator, nets, cfg, log_every=log_every)
        run.train_losses.extend(part.train_losses)
        run.wall_clock += part.wall_clock
    run.best_epoch = len(run.train_losses) - 1

    cases = simulate_records(setup, 50, seed + 101)
    ev = evaluate_posteriors(cases, nets, num_draws=1000, seed=seed + 202)
    ranks = diag.sbc_ranks(setup.prior, setup.simulator, diag.nets_sampler(nets),
                           sbc_reps, sbc_draws, seed + 303)
    sbc = diag.sbc_evaluate(ranks, sbc_draws, seed=seed + 404)
    report = build_report(setup, ev, sbc, {"experiment": setup.name, "seed": seed})
    _emit(out_dir, report, sbc, nets, cfg, run)
    return report, sbc, nets


def run_toy(out_dir: str | Path, seed: int = 0, architecture: str = "set_transformer",
            pooling: str = "pma", full: bool = False, vary_n: bool = False,
            epochs: int | None = None, sbc_reps: int = 300, sbc_draws: int = 100,
            num_test_cases: int = 200,
            log_every: int = 0) -> tuple[diag.MetricsReport, diag.SbcResult, Networks]:
    setup = make_setup("toy_vary_n" if vary_n else "toy")
    encoder = EncoderConfig(architecture=architecture, pooling=pooling,
                            summary_dim=16, hidden_dim=64)
    nets = build_networks(setup, encoder)
    if epochs is None:
        epochs = 250 if full else 50
    cfg = TrainConfig(regime="online", epochs=epochs, batches_per_epoch=100,
                      batch_size=32, seed=seed)
    run = train_online(setup.simulator, nets, cfg, log_every=log_every)

    cases = simulate_records(setup, num_test_cases, seed + 101)
    ev = evaluate_posteriors(cases, nets, num_draws=250, seed=seed + 202)
    ranks = diag.sbc_ranks(setup.prior, setup.simulator, diag.nets_sampler(nets),
                           sbc_reps, sbc_draws, seed + 303)
    sbc = diag.sbc_evaluate(ranks, sbc_draws, seed=seed + 404)
    report = build_report(setup, ev, sbc, {
        "experiment": setup.name, "seed": seed,
        "architecture": architecture, "pooling": pooling,
        "final_loss": run.train_losses[-1],
    })
    _emit(out_dir, report, sbc, nets, cfg, run)
    return report, sbc, nets


def run_mice(out_dir: str | Path, seed: int = 0, days: int = 5, full: bool = False,
             architecture: str = "set_transformer", pooling: str = "pma",
             num_train: int | None = None, num_val: int | None = None,
             sbc_reps: int = 300, sbc_draws: int = 100, num_test_cases: int = 200,
             log_every: int = 0) -> tuple[diag.MetricsReport, diag.SbcResult, Networks]:
    setup = make_setup("mice", mice_days=days)
    encoder = EncoderConfig(architecture=architecture, pooling=pooling,
                            summary_dim=16, hidden_dim=64, dropout=0.05)
    nets = build_networks(setup, encoder)
    if num_train is None:
        num_train = 50_000 if full else 10_000
    if num_val is None:
        num_val = 1000 if full else 500
    train_set = simulate_records(setup, num_train, seed + 11)
    val_set = simulate_records(setup, num_val, seed + 12)
    cfg = TrainConfig(regime="offline", epochs=250 if full else 40,
                      batch_size=64, patience=10 if full else 6, seed=seed)
    run = train_offline(train_set, val_set, nets, cfg, log_every=log_every)

    cases = simulate_records(setup, num_test_cases, seed + 101)
    ev = evaluate_posteriors(cases, nets, num_draws=250, seed=seed + 202)
    ranks = diag.sbc_ranks(setup.prior, setup.simulator, diag.nets_sampler(nets),
                           sbc_reps, sbc_draws, seed + 303)
    sbc = diag.sbc_evaluate(ranks, sbc_draws, seed=seed + 404)
    report = build_report(setup, ev, sbc, {
        "experiment": setup.name, "seed": seed, "days": days,
        "architecture": architecture, "pooling": pooling,
        "val_loss": min(run.val_losses),
    })
    _emit(out_dir, report, sbc, nets, cfg, run)
    return report, sbc, nets


def run_rail(out_dir: str | Path, seed: int = 0, full: bool = False,
             num_scenarios: int | None = None, obs_per_scenario: int | None = None,
             sbc_reps: int = 300, sbc_draws: int = 100, num_test_cases: int = 300,
             log_every: int = 0) -> tuple[diag.MetricsReport, diag.SbcResult, Networks]:
    """Neural likelihood estimation for total travel times given a scenario."""
    setup = make_setup("rail")
    encoder = EncoderConfig(architecture="set_transformer", pooling="pma",
                            summary_dim=64, hidden_dim=64, augment="none")
    # finer spline resolution: travel-time likelihoods are sharp and multimodal
    nets = build_networks(setup, encoder, flow_bins=16)
    if num_scenarios is None:
        num_scenarios = 10_000 if full else 2000
    if obs_per_scenario is None:
        obs_per_scenario = 64 if full else 32
    records = rail_records(num_scenarios, obs_per_scenario, seed + 11)
    val = rail_records(150, 4, seed + 12)
    cfg = TrainConfig(regime="offline", epochs=30 if full else 15,
                      batch_size=128, patience=4, seed=seed)
    run = train_offline(records, val, nets, cfg, log_every=log_every)

    cases = rail_records(num_test_cases, 1, seed + 101)
    ev = evaluate_posteriors(cases, nets, num_draws=250, seed=seed + 202)
    ranks = _rail_sbc_ranks(nets, sbc_reps, sbc_draws, seed + 303)
    sbc = diag.sbc_evaluate(ranks, sbc_draws, seed=seed + 404)
    report = build_report(setup, ev, sbc, {
        "experiment": setup.name, "seed": seed,
        "val_loss": min(run.val_losses),
    })
    _emit(out_dir, report, sbc, nets, cfg, run)
    return report, sbc, nets


def _rail_sbc_ranks(nets: Networks, reps: int, draws: int, seed: int) -> np.ndarray:
    """SBC for the likelihood setting: the joint draw is (scenario, T_obs)."""
    rng = np.random.default_rng(seed)
    ranks = np.zeros((reps, 4), dtype=np.int64)
    for i in range(reps):
        graph, t_obs = rail_simulate(rng)
        post, _ = posterior_for(graph, nets, draws, int(rng.integers(2 ** 31)))
        below = (post < t_obs).sum(axis=0)
        ties = (post == t_obs).sum(axis=0)
        ranks[i] = below + rng.binomial(ties, 0.5)
    return ranks


def _emit(out_dir: str | Path, report: diag.MetricsReport,
          sbc: diag.SbcResult | None, nets: Networks, cfg: TrainConfig,
          run) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    diag.emit_report(report, sbc, out)
    save_networks(nets, out / "checkpoint.bin")
    write_run_manifest(out / "run_manifest.txt",
                       config_hash(report.metadata), cfg.seed, run)
