"""Conditional coupling flow with monotone rational-quadratic spline transforms.

The flow maps standardized parameters theta to a standard-normal latent z,
conditioned on a summary vector s.  Each coupling layer transforms the active
coordinate block elementwise by a spline whose knots come from a conditioner
network reading (passive coordinates, s); halves alternate across layers.
Outside [-bound, bound] the transform is the identity (linear tails), and the
conditioner's final layer is zero-initialized so training starts at the base
distribution.
"""

from __future__ import annotations

import math

import torch

from graphabi.nncore import DTYPE, MLP

MIN_BIN = 1e-3
_SOFTPLUS_SHIFT = math.log(math.e - 1.0)  # softplus(0 + shift) == 1


class FlowError(RuntimeError):
    """Raised on non-finite inputs or intermediates, naming the layer."""


def rq_spline_apply(x: torch.Tensor, raw: torch.Tensor, inverse: bool = False,
                    num_bins: int = 8, bound: float = 3.0
                    ) -> tuple[torch.Tensor, torch.Tensor]:
    """Monotone rational-quadratic spline, elementwise.

    ``raw`` carries 3K-1 unconstrained values per element: K bin widths and K
    bin heights (normalized-exponential over [-bound, bound]) plus K-1 interior
    knot derivatives (softplus); boundary derivatives are fixed at 1 to join
    the identity tails smoothly.  Returns (y, log|dy/dx|); in inverse mode the
    second output is log|dx/dy| negated, i.e. still the forward log-slope at
    the returned point, negated.
    """
    k = num_bins
    if raw.shape[-1] != 3 * k - 1:
        raise ValueError(f"expected {3 * k - 1} raw params per element, got {raw.shape[-1]}")

    widths = torch.softmax(raw[..., :k], dim=-1)
    widths = MIN_BIN + (1.0 - MIN_BIN * k) * widths
    heights = torch.softmax(raw[..., k:2 * k], dim=-1)
    heights = MIN_BIN + (1.0 - MIN_BIN * k) * heights
    # softplus keeps derivatives positive; the shift makes raw == 0 give slope 1
    derivs_inner = torch.nn.functional.softplus(raw[..., 2 * k:] + _SOFTPLUS_SHIFT)
    ones = torch.ones(raw.shape[:-1] + (1,), dtype=DTYPE)
    derivs = torch.cat([ones, derivs_inner, ones], dim=-1)  # (..., K+1)

    total = 2.0 * bound
    cum_w = torch.cumsum(widths, dim=-1) * total
    cum_w = torch.cat([torch.zeros_like(cum_w[..., :1]), cum_w], dim=-1) - bound
    cum_h = torch.cumsum(heights, dim=-1) * total
    cum_h = torch.cat([torch.zeros_like(cum_h[..., :1]), cum_h], dim=-1) - bound
    cum_w[..., -1] = bound
    cum_h[..., -1] = bound
    bin_w = cum_w[..., 1:] - cum_w[..., :-1]
    bin_h = cum_h[..., 1:] - cum_h[..., :-1]

    inside = (x > -bound) & (x < bound)
    x_in = torch.where(inside, x, torch.zeros_like(x))

    knots = cum_h if inverse else cum_w
    idx = (torch.searchsorted(knots[..., 1:-1].contiguous(), x_in.unsqueeze(-1),
                              right=True)).squeeze(-1)
    idx = idx.clamp(0, k - 1)

    def gather(t: torch.Tensor) -> torch.Tensor:
        return t.gather(-1, idx.unsqueeze(-1)).squeeze(-1)

    xk = gather(cum_w[..., :-1])
    yk = gather(cum_h[..., :-1])
    wk = gather(bin_w)
    hk = gather(bin_h)
    dk = gather(derivs[..., :-1])
    dk1 = gather(derivs[..., 1:])
    sk = hk / wk

    if not inverse:
        xi = (x_in - xk) / wk
        ximxi = xi * (1.0 - xi)
        denom = sk + (dk1 + dk - 2.0 * sk) * ximxi
        y = yk + hk * (sk * xi * xi + dk * ximxi) / denom
        deriv = (sk * sk * (dk1 * xi * xi + 2.0 * sk * ximxi
                            + dk * (1.0 - xi) ** 2)) / (denom * denom)
        out = torch.where(inside, y, x)
        log_slope = torch.where(inside, torch.log(deriv), torch.zeros_like(x))
        return out, log_slope

    dy = x_in - yk
    coef = dy * (dk1 + dk - 2.0 * sk)
    a = hk * (sk - dk) + coef
    b = hk * dk - coef
    c = -sk * dy
    disc = (b * b - 4.0 * a * c).clamp(min=0.0)
    xi = (2.0 * c) / (-b - torch.sqrt(disc))
    xi = xi.clamp(0.0, 1.0)
    ximxi = xi * (1.0 - xi)
    denom = sk + (dk1 + dk - 2.0 * sk) * ximxi
    x_out = xk + xi * wk
    deriv = (sk * sk * (dk1 * xi * xi + 2.0 * sk * ximxi
                        + dk * (1.0 - xi) ** 2)) / (denom * denom)
    out = torch.where(inside, x_out, x)
    log_slope = torch.where(inside, -torch.log(deriv), torch.zeros_like(x))
    return out, log_slope


class CouplingLayer(torch.nn.Module):
    def __init__(self, param_dim: int, summary_dim: int, active: list[int],
                 num_bins: int, bound: float, hidden_dim: int):
        super().__init__()
        self.num_bins = num_bins
        self.bound = bound
        self.register_buffer("active_idx", torch.tensor(active, dtype=torch.long))
        passive = [i for i in range(param_dim) if i not in active]
        self.register_buffer("passive_idx", torch.tensor(passive, dtype=torch.long))
        in_dim = len(passive) + summary_dim
        out_dim = len(active) * (3 * num_bins - 1)
        self.conditioner = MLP([in_dim, hidden_dim, hidden_dim, out_dim],
                               activation="gelu", zero_init_last=True)

    def _raw(self, passive_vals: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
        cond_in = torch.cat([passive_vals, s], dim=-1)
        raw = self.conditioner(cond_in)
        b = raw.shape[:-1]
        return raw.view(*b, self.active_idx.numel(), 3 * self.num_bins - 1)

    def forward(self, theta: torch.Tensor, s: torch.Tensor,
                inverse: bool = False) -> tuple[torch.Tensor, torch.Tensor]:
        passive_vals = theta[..., self.passive_idx]
        active_vals = theta[..., self.active_idx]
        raw = self._raw(passive_vals, s)
        y, log_slope = rq_spline_apply(active_vals, raw, inverse=inverse,
                                       num_bins=self.num_bins, bound=self.bound)
        out = theta.clone()
        out[..., self.active_idx] = y
        return out, log_slope.sum(dim=-1)


class ConditionalFlow(torch.nn.Module):
    """Stack of coupling layers with alternating active halves."""

    def __init__(self, param_dim: int, summary_dim: int, num_layers: int = 6,
                 num_bins: int = 8, bound: float = 3.0, hidden_dim: int = 64):
        super().__init__()
        if param_dim < 1:
            raise ValueError("param_dim must be >= 1")
        self.param_dim = param_dim
        self.summary_dim = summary_dim
        first = list(range(math.ceil(param_dim / 2)))
        second = list(range(math.ceil(param_dim / 2), param_dim))
        if not second:  # 1-D case: every layer transforms the single coordinate
            second = first
        self.layers = torch.nn.ModuleList(
            CouplingLayer(param_dim, summary_dim,
                          first if i % 2 == 0 else second,
                          num_bins, bound, hidden_dim)
            for i in range(num_layers)
        )

    def _check_finite(self, t: torch.Tensor, what: str, layer: int | None = None) -> None:
        if not torch.isfinite(t).all():
            where = f" at layer {layer}" if layer is not None else ""
            raise FlowError(f"non-finite {what}{where}")

    def forward(self, theta: torch.Tensor, s: torch.Tensor
                ) -> tuple[torch.Tensor, torch.Tensor]:
        self._check_finite(theta, "input theta")
        z = theta
        log_det = torch.zeros(theta.shape[:-1], dtype=DTYPE)
        for i, layer in enumerate(self.layers):
            z, ld = layer(z, s, inverse=False)
            self._check_finite(z, "state", i)
            log_det = log_det + ld
        return z, log_det

    def inverse(self, z: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
        self._check_finite(z, "input z")
        theta = z
        for i, layer in reversed(list(enumerate(self.layers))):
            theta, _ = layer(theta, s, inverse=True)
            self._check_finite(theta, "state", i)
        return theta

    def log_prob(self, theta: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
        z, log_det = self.forward(theta, s)
        base = -0.5 * (z * z).sum(dim=-1) - 0.5 * self.param_dim * math.log(2.0 * math.pi)
        return base + log_det

    def sample(self, s: torch.Tensor, num_draws: int,
               generator: torch.Generator | None = None) -> torch.Tensor:
        """num_draws x P standardized draws for a single summary vector s."""
        if num_draws < 1:
            raise ValueError("num_draws must be >= 1")
        if s.dim() == 1:
            s = s.unsqueeze(0)
        z = torch.randn(num_draws, self.param_dim, dtype=DTYPE, generator=generator)
        s_rep = s.expand(num_draws, -1)
        with torch.no_grad():
            return self.inverse(z, s_rep)
