"""Differentiable numeric core: float64 tensors, layers, Adam, checkpoints.

Reverse-mode differentiation and dense linear algebra are delegated to
torch (CPU, float64 throughout); this module pins down the contracts the
rest of the package relies on: named parameter stores with optimizer
moments, gradient accumulation semantics, and a flat little-endian
checkpoint format with a text manifest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch

DTYPE = torch.float64

ACTIVATIONS: dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "gelu": torch.nn.functional.gelu,
    "relu": torch.relu,
    "tanh": torch.tanh,
    "linear": lambda x: x,
}


def diff_array(values, requires_grad: bool = False) -> torch.Tensor:
    """Create a float64 tensor, optionally tracked for gradients."""
    t = torch.as_tensor(np.asarray(values), dtype=DTYPE)
    if requires_grad:
        t = t.clone().requires_grad_(True)
    return t


def linear(in_dim: int, out_dim: int, bias: bool = True) -> torch.nn.Linear:
    return torch.nn.Linear(in_dim, out_dim, bias=bias, dtype=DTYPE)


class MLP(torch.nn.Module):
    """Row-wise feed-forward stack: affine layers with hidden activations.

    The activation is applied after every layer except the last, so an MLP
    with identity weights (or a single layer) realizes an affine map exactly.
    """

    def __init__(self, dims: Sequence[int], activation: str = "gelu",
                 zero_init_last: bool = False):
        super().__init__()
        if len(dims) < 2:
            raise ValueError("MLP needs at least input and output dims")
        self.activation = activation
        self.layers = torch.nn.ModuleList(
            linear(dims[i], dims[i + 1]) for i in range(len(dims) - 1)
        )
        if zero_init_last:
            torch.nn.init.zeros_(self.layers[-1].weight)
            torch.nn.init.zeros_(self.layers[-1].bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        act = ACTIVATIONS[self.activation]
        for layer in self.layers[:-1]:
            x = act(layer(x))
        return self.layers[-1](x)


def mlp_forward(x: torch.Tensor, params: Sequence[tuple[torch.Tensor, torch.Tensor]],
                activation: str = "gelu") -> torch.Tensor:
    """Functional MLP: ``params`` is a list of (weight, bias) pairs.

    Weights have shape (in, out); rows of ``x`` are processed independently.
    """
    act = ACTIVATIONS[activation]
    for k, (w, b) in enumerate(params):
        if x.shape[-1] != w.shape[0]:
            raise ValueError(
                f"layer {k}: input width {x.shape[-1]} != weight rows {w.shape[0]}"
            )
        x = x @ w + b
        if k < len(params) - 1:
            x = act(x)
    return x


def softmax_rows(x: torch.Tensor) -> torch.Tensor:
    """Softmax along the last axis; rows are nonnegative and sum to one."""
    return torch.softmax(x, dim=-1)


def layer_norm(x: torch.Tensor, gain: torch.Tensor, shift: torch.Tensor,
               eps: float = 1e-6) -> torch.Tensor:
    """Normalize each row to zero mean / unit variance, then affine."""
    mean = x.mean(dim=-1, keepdim=True)
    var = x.var(dim=-1, keepdim=True, unbiased=False)
    return (x - mean) / torch.sqrt(var + eps) * gain + shift


def dropout(x: torch.Tensor, rate: float, training: bool) -> torch.Tensor:
    """Inverted dropout; identity when rate is 0 or in evaluation mode."""
    if not training or rate == 0.0:
        return x
    return torch.nn.functional.dropout(x, p=rate, training=True)


def backward(loss: torch.Tensor) -> None:
    """Accumulate d(loss)/d(param) into every tracked parameter's grad slot."""
    if loss.dim() != 0:
        raise ValueError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    loss.backward()


@dataclass
class TrainStep:
    """Adaptive-moment optimizer settings plus the global step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("moment decay rates must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class ParameterStore:
    """Named trainable tensors with per-parameter optimizer moment state."""

    params: dict[str, torch.Tensor] = field(default_factory=dict)
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)

    def register(self, name: str, tensor: torch.Tensor) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter name: {name}")
        if not tensor.requires_grad:
            raise ValueError(f"parameter {name} must require grad")
        self.params[name] = tensor
        self.m[name] = torch.zeros_like(tensor)
        self.v[name] = torch.zeros_like(tensor)

    @staticmethod
    def from_modules(modules: dict[str, torch.nn.Module]) -> "ParameterStore":
        store = ParameterStore()
        for prefix, module in modules.items():
            for name, p in module.named_parameters():
                store.register(f"{prefix}.{name}", p)
        return store

    def zero_grad(self) -> None:
        for p in self.params.values():
            if p.grad is not None:
                p.grad.zero_()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.detach().numpy().copy() for name, p in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in arrays:
                raise KeyError(f"checkpoint is missing parameter {name}")
            a = arrays[name]
            if tuple(a.shape) != tuple(p.shape):
                raise ValueError(
                    f"shape mismatch for {name}: {a.shape} vs {tuple(p.shape)}"
                )
            with torch.no_grad():
                p.copy_(torch.as_tensor(a, dtype=DTYPE))


def optimizer_step(store: ParameterStore, cfg: TrainStep) -> None:
    """One adaptive-moment update with bias correction; grads are left intact."""
    cfg.step += 1
    t = cfg.step
    with torch.no_grad():
        for name, p in store.params.items():
            g = p.grad
            if g is None:
                continue
            m = store.m[name]
            v = store.v[name]
            m.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
            v.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
            m_hat = m / (1.0 - cfg.beta1 ** t)
            v_hat = v / (1.0 - cfg.beta2 ** t)
            p.addcdiv_(m_hat, v_hat.sqrt() + cfg.eps, value=-cfg.lr)


# --- checkpoint format -------------------------------------------------------
#
# <path>          little-endian float64 arrays, concatenated flat
# <path>.manifest one line per array: name<TAB>shape-csv<TAB>byte-offset

def save_checkpoint(arrays: dict[str, np.ndarray], path: str | Path) -> None:
    path = Path(path)
    offset = 0
    lines = []
    with open(path, "wb") as fh:
        for name, a in arrays.items():
            flat = np.ascontiguousarray(a, dtype="<f8")
            shape = ",".join(str(d) for d in flat.shape) or "0"
            lines.append(f"{name}\t{shape}\t{offset}")
            fh.write(flat.tobytes())
            offset += flat.nbytes
    Path(str(path) + ".manifest").write_text("\n".join(lines) + "\n")


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    manifest = Path(str(path) + ".manifest")
    if not path.exists() or not manifest.exists():
        raise FileNotFoundError(f"checkpoint {path} (+ .manifest) not found")
    blob = path.read_bytes()
    arrays: dict[str, np.ndarray] = {}
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        name, shape_csv, offset_s = line.split("\t")
        shape = tuple(int(d) for d in shape_csv.split(",") if d != "")
        count = math.prod(shape) if shape else 1
        offset = int(offset_s)
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        arrays[name] = arr.reshape(shape).copy()
    return arrays


def gradient_check(loss_fn: Callable[[], torch.Tensor],
                   params: Iterable[torch.Tensor],
                   h: float = 1e-5) -> float:
    """Max relative error between autodiff and central finite differences.

    Intended for tests: evaluates ``loss_fn`` repeatedly while perturbing each
    parameter entry in place.
    """
    params = list(params)
    for p in params:
        if p.grad is not None:
            p.grad.zero_()
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    for p in params:
        grad = p.grad.detach().clone().reshape(-1)
        flat = p.detach().reshape(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + h
            up = loss_fn().item()
            with torch.no_grad():
                flat[i] = orig - h
            down = loss_fn().item()
            with torch.no_grad():
                flat[i] = orig
            fd = (up - down) / (2.0 * h)
            denom = max(abs(fd), abs(grad[i].item()), 1e-8)
            worst = max(worst, abs(fd - grad[i].item()) / denom)
    return worst
