"""Posterior-quality metrics: SBC ranks, gamma calibration score, ECDF bands,
posterior contraction, recovery, and CSV report emission.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from graphabi.engine import Networks, PriorSpec, Simulator, posterior_for
from graphabi.graphs import PaddedGraph

PosteriorSampler = Callable[[PaddedGraph, np.ndarray, int, int], np.ndarray]
"""(graph, theta_true, num_draws, seed) -> (num_draws, P) draws in natural units."""


@dataclass
class SbcResult:
    ranks: np.ndarray          # (S, P) integers in 0..M
    num_draws: int             # M
    num_replications: int      # S
    gamma: np.ndarray          # (P,)
    gamma_bar: float           # null 5th percentile
    log_gamma: np.ndarray      # (P,), -inf sentinel when gamma == 0


@dataclass
class MetricsReport:
    parameter_names: tuple[str, ...]
    recovery: np.ndarray          # (P,)
    contraction: np.ndarray       # (P,)
    log_gamma: np.ndarray         # (P,)
    clamp_count: int = 0
    metadata: dict = field(default_factory=dict)
    # optional plot data: per-parameter true values, medians, CI endpoints
    truths: np.ndarray | None = None       # (N, P)
    medians: np.ndarray | None = None      # (N, P)
    ci_low: np.ndarray | None = None       # (N, P), 2.5th percentile
    ci_high: np.ndarray | None = None      # (N, P), 97.5th percentile


def sbc_ranks(prior: PriorSpec, simulator: Simulator, sampler: PosteriorSampler,
              num_replications: int, num_draws: int, seed: int,
              rng_ties: np.random.Generator | None = None) -> np.ndarray:
    """Rank of the prior draw within its posterior sample, per replication.

    Ties between a draw and the truth get a fair random split so discretized
    parameters keep uniform null ranks.
    """
    if num_replications < 1 or num_draws < 1:
        raise ValueError("S and M must be >= 1")
    rng = np.random.default_rng(seed)
    rng_ties = rng_ties or rng
    ranks = np.zeros((num_replications, prior.dim), dtype=np.int64)
    for i in range(num_replications):
        theta_star = prior.sample(rng, 1)[0]
        try:
            graph = simulator(theta_star, rng)
            draws = sampler(graph, theta_star, num_draws,
                            int(rng.integers(2 ** 31)))
        except Exception as exc:
            raise RuntimeError(f"SBC replication {i} failed: {exc}") from exc
        below = (draws < theta_star).sum(axis=0)
        ties = (draws == theta_star).sum(axis=0)
        split = rng_ties.binomial(ties, 0.5)
        ranks[i] = below + split
    return ranks


def nets_sampler(nets: Networks) -> PosteriorSampler:
    """Posterior sampler backed by trained networks, for SBC."""

    def sample(graph: PaddedGraph, theta_true: np.ndarray, num_draws: int,
               seed: int) -> np.ndarray:
        draws, _ = posterior_for(graph, nets, num_draws, seed)
        return draws

    return sample


def gamma_statistic(ranks: np.ndarray, num_draws: int) -> float:
    """Departure-from-uniformity statistic across all rank cutpoints.

    gamma = 2 min_i min{Bin(R_i | S, z_i), 1 - Bin(R_i - 1 | S, z_i)} with
    z_i = i / (M + 1) and R_i the count of ranks strictly below i.
    """
    ranks = np.asarray(ranks).reshape(-1)
    if np.any((ranks < 0) | (ranks > num_draws)):
        raise ValueError("ranks must lie in 0..M")
    s = ranks.size
    m = num_draws
    i = np.arange(1, m + 2)
    z = i / (m + 1.0)
    r = np.searchsorted(np.sort(ranks), i, side="left")  # counts ranks < i
    low = stats.binom.cdf(r, s, z)
    high = 1.0 - stats.binom.cdf(r - 1, s, z)
    return float(2.0 * np.min(np.minimum(low, high)))


def _null_gammas(num_draws: int, num_replications: int, n_null: int,
                 rng: np.random.Generator) -> np.ndarray:
    m = num_draws
    s = num_replications
    i = np.arange(1, m + 2)
    z = i / (m + 1.0)
    ranks = rng.integers(0, m + 1, size=(n_null, s))
    ranks.sort(axis=1)
    r = np.stack([np.searchsorted(row, i, side="left") for row in ranks])
    low = stats.binom.cdf(r, s, z[None, :])
    high = 1.0 - stats.binom.cdf(r - 1, s, z[None, :])
    return 2.0 * np.minimum(low, high).min(axis=1)


def null_gamma_quantile(num_draws: int, num_replications: int, n_null: int,
                        rng: np.random.Generator) -> float:
    """Empirical 5th percentile of gamma under uniform ranks."""
    if n_null < 100:
        raise ValueError("need at least 100 null simulations")
    return float(np.percentile(_null_gammas(num_draws, num_replications,
                                            n_null, rng), 5.0))


def log_gamma_score(gamma: float, gamma_bar: float) -> float:
    """log(gamma / gamma_bar); negative values signal miscalibration."""
    if gamma_bar <= 0:
        raise ValueError("gamma_bar must be positive")
    if gamma == 0:
        return float("-inf")
    return float(np.log(gamma / gamma_bar))


def sbc_evaluate(ranks: np.ndarray, num_draws: int, n_null: int = 10_000,
                 seed: int = 0) -> SbcResult:
    """Bundle ranks with gamma, the simulated null quantile, and log scores."""
    ranks = np.asarray(ranks)
    s, p = ranks.shape
    rng = np.random.default_rng(seed)
    gamma_bar = null_gamma_quantile(num_draws, s, n_null, rng)
    gamma = np.array([gamma_statistic(ranks[:, j], num_draws) for j in range(p)])
    lg = np.array([log_gamma_score(g, gamma_bar) for g in gamma])
    return SbcResult(ranks=ranks, num_draws=num_draws, num_replications=s,
                     gamma=gamma, gamma_bar=gamma_bar, log_gamma=lg)


def posterior_contraction(draws: np.ndarray, prior: PriorSpec) -> np.ndarray:
    """PC = 1 - posterior variance / analytic prior variance, per parameter."""
    draws = np.atleast_2d(np.asarray(draws, dtype=np.float64))
    if draws.shape[0] < 2:
        raise ValueError("need at least 2 posterior draws")
    prior_var = prior.variance()
    if np.any(prior_var <= 0):
        raise ValueError("prior variance must be positive")
    return 1.0 - draws.var(axis=0, ddof=1) / prior_var


def recovery(true_values: np.ndarray, posterior_medians: np.ndarray) -> float:
    """Pearson correlation between truths and posterior medians."""
    t = np.asarray(true_values, dtype=np.float64).reshape(-1)
    m = np.asarray(posterior_medians, dtype=np.float64).reshape(-1)
    if t.size != m.size or t.size < 2:
        raise ValueError("need >= 2 matching pairs")
    if t.std() == 0 or m.std() == 0:
        raise ValueError("recovery undefined for zero-variance inputs")
    return float(np.corrcoef(t, m)[0, 1])


@dataclass
class EcdfBand:
    grid: np.ndarray        # cutpoints z_i = i/(M+1)
    difference: np.ndarray  # ECDF(z_i) - z_i for the observed ranks
    lower: np.ndarray
    upper: np.ndarray
    coverage: float         # achieved simultaneous null coverage


def ecdf_difference(ranks: np.ndarray, num_draws: int, n_null: int = 2000,
                    rng: np.random.Generator | None = None,
                    level: float = 0.95) -> EcdfBand:
    """ECDF-minus-uniform curve with a simulation-calibrated simultaneous band."""
    rng = rng or np.random.default_rng(0)
    ranks = np.asarray(ranks).reshape(-1)
    s = ranks.size
    m = num_draws
    i = np.arange(1, m + 2)
    z = i / (m + 1.0)
    obs = np.searchsorted(np.sort(ranks), i, side="left") / s - z

    null_ranks = rng.integers(0, m + 1, size=(n_null, s))
    null_ranks.sort(axis=1)
    null = np.stack([np.searchsorted(row, i, side="left") for row in null_ranks])
    null = null / s - z[None, :]

    # coverage shrinks as the pointwise tail level q grows; bisect for the
    # largest q whose envelope still contains `level` of whole null curves
    q_wide, q_narrow = 1e-4, 0.5
    for _ in range(30):
        q = 0.5 * (q_wide + q_narrow)
        lower = np.quantile(null, q, axis=0)
        upper = np.quantile(null, 1.0 - q, axis=0)
        inside = np.mean(np.all((null >= lower) & (null <= upper), axis=1))
        if inside >= level:
            q_wide = q
        else:
            q_narrow = q
    q = q_wide
    lower = np.quantile(null, q, axis=0)
    upper = np.quantile(null, 1.0 - q, axis=0)
    cov = float(np.mean(np.all((null >= lower) & (null <= upper), axis=1)))
    return EcdfBand(grid=z, difference=obs, lower=lower, upper=upper, coverage=cov)


# --- report emission ----------------------------------------------------------

def emit_report(report: MetricsReport, sbc: SbcResult | None,
                out_dir: str | Path) -> dict[str, Path]:
    """Write the metrics table and plot-data CSVs; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}

    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "recovery", "contraction", "log_gamma",
                    "clamp_count"])
        for j, name in enumerate(report.parameter_names):
            w.writerow([name, f"{report.recovery[j]:.6f}",
                        f"{report.contraction[j]:.6f}",
                        f"{report.log_gamma[j]:.6f}", report.clamp_count])
    written["metrics"] = metrics_path

    if report.truths is not None:
        scatter_path = out / "recovery_scatter.csv"
        with open(scatter_path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["case"]
            for name in report.parameter_names:
                header += [f"{name}_true", f"{name}_median",
                           f"{name}_q025", f"{name}_q975"]
            w.writerow(header)
            for i in range(report.truths.shape[0]):
                row = [i]
                for j in range(len(report.parameter_names)):
                    row += [f"{report.truths[i, j]:.6f}",
                            f"{report.medians[i, j]:.6f}",
                            f"{report.ci_low[i, j]:.6f}",
                            f"{report.ci_high[i, j]:.6f}"]
                w.writerow(row)
        written["recovery_scatter"] = scatter_path

    if sbc is not None:
        ranks_path = out / "sbc_ranks.csv"
        with open(ranks_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replication"] + list(report.parameter_names))
            for i in range(sbc.ranks.shape[0]):
                w.writerow([i] + sbc.ranks[i].tolist())
        written["sbc_ranks"] = ranks_path

        ecdf_path = out / "ecdf.csv"
        with open(ecdf_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["parameter", "z", "difference", "band_lower", "band_upper"])
            for j, name in enumerate(report.parameter_names):
                band = ecdf_difference(sbc.ranks[:, j], sbc.num_draws)
                for g, d, lo, hi in zip(band.grid, band.difference,
                                        band.lower, band.upper):
                    w.writerow([name, f"{g:.6f}", f"{d:.6f}",
                                f"{lo:.6f}", f"{hi:.6f}"])
        written["ecdf"] = ecdf_path

    return written


def parse_metrics(path: str | Path) -> dict[str, dict[str, float]]:
    """Read back the metrics table as {parameter: {metric: value}}."""
    out: dict[str, dict[str, float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["parameter"]] = {
                k: float(v) for k, v in row.items() if k != "parameter"
            }
    return out


SWEEP_COLUMNS = ["architecture", "pooling", "final_loss",
                 "recovery_pi", "recovery_lambda",
                 "log_gamma_pi", "log_gamma_lambda",
                 "contraction_pi", "contraction_lambda"]


def write_sweep_table(rows: Sequence[dict], path: str | Path) -> None:
    """Architecture x pooling results table for the 12-configuration sweep."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in SWEEP_COLUMNS})
