"""Plain-text experiment configuration (TOML) with strict validation.

A config file has three sections plus top-level keys::

    experiment = "toy"          # toy | toy_vary_n | mice | rail | conjugate_gaussian
    seed = 0
    out_dir = "runs/toy"

    [encoder]
    architecture = "set_transformer"
    pooling = "pma"
    summary_dim = 16
    ...

    [flow]
    num_layers = 6
    num_bins = 8
    bound = 3.0
    hidden_dim = 64

    [training]
    regime = "online"
    epochs = 50
    ...

Unknown keys anywhere are rejected by name; all validation problems are
aggregated into a single error message.
"""

from __future__ import annotations

import dataclasses
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path

from graphabi.encoders import EncoderConfig
from graphabi.engine import TrainConfig
from graphabi.experiments import EXPERIMENT_NAMES

OUT_ROOT_ENV = "GRAPHABI_OUT"


class ConfigFileError(Exception):
    """Raised for unparseable, unknown-key, or invalid configurations."""


@dataclass(frozen=True)
class FlowConfig:
    num_layers: int = 6
    num_bins: int = 8
    bound: float = 3.0
    hidden_dim: int = 64

    def __post_init__(self):
        problems = []
        if self.num_layers < 1:
            problems.append("flow.num_layers must be >= 1")
        if self.num_bins < 1:
            problems.append("flow.num_bins must be >= 1")
        if self.bound <= 0:
            problems.append("flow.bound must be positive")
        if self.hidden_dim < 1:
            problems.append("flow.hidden_dim must be >= 1")
        if problems:
            raise ConfigFileError("; ".join(problems))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    out_dir: str = ""
    mice_days: int = 5
    encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(
        architecture="set_transformer", pooling="pma"))
    flow: FlowConfig = field(default_factory=FlowConfig)
    training: TrainConfig = field(default_factory=TrainConfig)

    def resolved_out_dir(self) -> Path:
        if self.out_dir:
            return Path(self.out_dir)
        root = os.environ.get(OUT_ROOT_ENV, "runs")
        return Path(root) / self.experiment


_TOP_KEYS = {"experiment", "seed", "out_dir", "mice_days",
             "encoder", "flow", "training"}


def _build_section(cls, data: dict, section: str, problems: list[str]):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    for key in unknown:
        problems.append(f"unknown key '{section}.{key}'")
    kwargs = {k: v for k, v in data.items() if k in known}
    try:
        return cls(**kwargs)
    except Exception as exc:
        problems.append(f"[{section}] {exc}")
        return cls()


def validate_config(data: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed TOML data, aggregating errors."""
    problems: list[str] = []
    unknown = sorted(set(data) - _TOP_KEYS)
    for key in unknown:
        problems.append(f"unknown key '{key}'")

    experiment = data.get("experiment")
    if experiment is None:
        problems.append("missing required key 'experiment'")
        experiment = "toy"
    elif experiment not in EXPERIMENT_NAMES:
        problems.append(f"unknown experiment {experiment!r}; "
                        f"expected one of {', '.join(EXPERIMENT_NAMES)}")
        experiment = "toy"

    encoder = _build_section(EncoderConfig, data.get("encoder", {}),
                             "encoder", problems)
    if encoder is None:
        encoder = EncoderConfig(architecture="set_transformer", pooling="pma")
    flow = _build_section(FlowConfig, data.get("flow", {}), "flow", problems)
    training = _build_section(TrainConfig, data.get("training", {}),
                              "training", problems)

    # cross-module invariants
    param_dims = {"toy": 4, "toy_vary_n": 4, "mice": 2, "rail": 4,
                  "conjugate_gaussian": 1}
    p = param_dims.get(experiment, 1)
    if encoder is not None:
        if encoder.summary_dim < p:
            problems.append(
                f"encoder.summary_dim={encoder.summary_dim} is smaller than "
                f"the parameter dimension {p} of experiment '{experiment}'")
        if (encoder.augment == "adjacency_row"
                and experiment in ("toy_vary_n",)):
            problems.append(
                "encoder.augment='adjacency_row' requires a fixed node count; "
                f"experiment '{experiment}' varies n")
        if encoder.pooling == "pma" and encoder.num_seeds < 1:
            problems.append("encoder.num_seeds must be >= 1 for PMA pooling")

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append("seed must be a nonnegative integer")
        seed = 0
    out_dir = data.get("out_dir", "")
    if not isinstance(out_dir, str):
        problems.append("out_dir must be a string")
        out_dir = ""
    mice_days = data.get("mice_days", 5)
    if not isinstance(mice_days, int) or mice_days < 1:
        problems.append("mice_days must be a positive integer")
        mice_days = 5

    if problems:
        raise ConfigFileError("invalid configuration:\n  " +
                              "\n  ".join(problems))
    return ExperimentConfig(experiment=experiment, seed=seed, out_dir=out_dir,
                            mice_days=mice_days, encoder=encoder, flow=flow,
                            training=training)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigFileError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigFileError(f"could not parse {path}: {exc}") from exc
    return validate_config(data)


def config_help() -> str:
    """Human-readable list of every recognized config key."""
    lines = ["Config file keys (TOML):",
             "  experiment   one of: " + ", ".join(EXPERIMENT_NAMES),
             "  seed         nonnegative integer",
             "  out_dir      output directory (default $GRAPHABI_OUT/<experiment>)",
             "  mice_days    observation day for the mice experiment"]
    for section, cls in (("encoder", EncoderConfig), ("flow", FlowConfig),
                         ("training", TrainConfig)):
        lines.append(f"  [{section}]")
        for f in dataclasses.fields(cls):
            default = f.default if f.default is not dataclasses.MISSING else ""
            lines.append(f"    {f.name} (default {default!r})")
    return "\n".join(lines)
