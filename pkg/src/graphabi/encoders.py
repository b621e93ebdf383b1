"""Permutation-invariant summary networks.

Four interchangeable encoder trunks (Deep Sets, GCN, Set Transformer, Graph
Transformer) crossed with three pooling heads (masked mean, Deep-Sets
invariant pooling, pooling by multi-head attention) produce a fixed-length
summary vector from a padded attributed graph.

All tensors are batched: features (B, n, d), adjacency (B, n, n), mask (B, n)
with 1.0 marking real nodes.  Every trunk layer is permutation-equivariant and
every pooling head is permutation-invariant, so the summary is invariant under
joint node relabeling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from graphabi import nncore
from graphabi.graphs import PaddedGraph, structural_node_features
from graphabi.nncore import DTYPE, MLP, linear

ARCHITECTURES = ("deep_sets", "gcn", "set_transformer", "graph_transformer")
POOLINGS = ("mean", "invariant", "pma")
AUGMENT_MODES = ("none", "adjacency_row", "structural")


class ConfigError(ValueError):
    """Raised for inconsistent encoder configuration."""


@dataclass
class EncoderConfig:
    architecture: str = "set_transformer"
    pooling: str = "pma"
    summary_dim: int = 16
    hidden_dim: int = 64
    num_layers: int = 0          # 0 = architecture default (2 / 3 for GCN)
    num_heads: int = 4
    num_inducing: int = 16       # only used when use_inducing is set
    use_inducing: bool = False
    num_seeds: int = 1           # PMA seed count k
    augment: str = "none"
    dropout: float = 0.0
    activation: str = "gelu"

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture: {self.architecture!r}")
        if self.pooling not in POOLINGS:
            raise ConfigError(f"unknown pooling: {self.pooling!r}")
        if self.augment not in AUGMENT_MODES:
            raise ConfigError(f"unknown augment mode: {self.augment!r}")
        if self.num_layers == 0:
            self.num_layers = 3 if self.architecture == "gcn" else 2
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.num_seeds < 1:
            raise ConfigError("PMA seed count must be >= 1")
        if self.num_inducing < 1:
            raise ConfigError("inducing point count must be >= 1")
        if self.summary_dim < 1:
            raise ConfigError("summary_dim must be >= 1")


# --- attention primitives ----------------------------------------------------

def scaled_dot_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
                         mask: torch.Tensor | None = None) -> torch.Tensor:
    """softmax(QK^T / sqrt(d_k)) V with optional boolean mask (True = allowed).

    Rows whose mask excludes every key yield an all-zero output rather than
    NaN; that case only arises for padded nodes, which are pooled out.
    """
    d_k = q.shape[-1]
    scores = q @ k.transpose(-2, -1) / math.sqrt(d_k)
    if mask is not None:
        allowed_any = mask.any(dim=-1, keepdim=True)
        scores = scores.masked_fill(~mask, float("-inf"))
        scores = torch.where(allowed_any, scores, torch.zeros_like(scores))
        attn = torch.softmax(scores, dim=-1)
        attn = attn * allowed_any
    else:
        attn = torch.softmax(scores, dim=-1)
    return attn @ v


class MultiHeadAttention(torch.nn.Module):
    """Heads computed independently, concatenated, projected by W^O."""

    def __init__(self, d_model: int, num_heads: int):
        super().__init__()
        if d_model % num_heads != 0:
            raise ConfigError("d_model must be divisible by num_heads")
        self.num_heads = num_heads
        self.d_head = d_model // num_heads
        self.w_q = linear(d_model, d_model, bias=False)
        self.w_k = linear(d_model, d_model, bias=False)
        self.w_v = linear(d_model, d_model, bias=False)
        self.w_o = linear(d_model, d_model, bias=False)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, n, _ = x.shape
        return x.view(b, n, self.num_heads, self.d_head).transpose(1, 2)

    def forward(self, x: torch.Tensor, y: torch.Tensor,
                key_mask: torch.Tensor | None = None,
                attn_mask: torch.Tensor | None = None) -> torch.Tensor:
        q = self._split(self.w_q(x))
        k = self._split(self.w_k(y))
        v = self._split(self.w_v(y))
        mask = None
        if key_mask is not None:
            mask = (key_mask > 0).unsqueeze(1).unsqueeze(2)  # (B,1,1,nk)
            mask = mask.expand(-1, 1, x.shape[1], -1)
        if attn_mask is not None:
            am = attn_mask.unsqueeze(1)  # (B,1,nq,nk)
            mask = am if mask is None else (mask & am)
        z = scaled_dot_attention(q, k, v, mask)
        b, _, n, _ = z.shape
        z = z.transpose(1, 2).reshape(b, n, self.num_heads * self.d_head)
        return self.w_o(z)


class MAB(torch.nn.Module):
    """Multi-head attention block: LN(H + rFF(H)), H = LN(X + MHA(X, Y, Y))."""

    def __init__(self, d_model: int, num_heads: int, activation: str = "gelu"):
        super().__init__()
        self.mha = MultiHeadAttention(d_model, num_heads)
        self.ln1 = torch.nn.LayerNorm(d_model, dtype=DTYPE)
        self.ln2 = torch.nn.LayerNorm(d_model, dtype=DTYPE)
        self.rff = MLP([d_model, d_model, d_model], activation=activation)

    def forward(self, x: torch.Tensor, y: torch.Tensor,
                query_mask: torch.Tensor | None = None,
                key_mask: torch.Tensor | None = None) -> torch.Tensor:
        h = self.ln1(x + self.mha(x, y, key_mask=key_mask))
        z = self.ln2(h + self.rff(h))
        if query_mask is not None:
            z = z * query_mask.unsqueeze(-1)
        return z


class SAB(torch.nn.Module):
    """Self-attention block: MAB(X, X)."""

    def __init__(self, d_model: int, num_heads: int, activation: str = "gelu"):
        super().__init__()
        self.mab = MAB(d_model, num_heads, activation)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        return self.mab(x, x, query_mask=mask, key_mask=mask)


class ISAB(torch.nn.Module):
    """Induced set attention: attention routed through r learned inducing points."""

    def __init__(self, d_model: int, num_heads: int, num_inducing: int,
                 activation: str = "gelu"):
        super().__init__()
        self.inducing = torch.nn.Parameter(
            torch.randn(num_inducing, d_model, dtype=DTYPE) / math.sqrt(d_model)
        )
        self.mab1 = MAB(d_model, num_heads, activation)
        self.mab2 = MAB(d_model, num_heads, activation)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        b = x.shape[0]
        i = self.inducing.unsqueeze(0).expand(b, -1, -1)
        h = self.mab1(i, x, key_mask=mask)
        return self.mab2(x, h, query_mask=mask)


class PMA(torch.nn.Module):
    """Pooling by multi-head attention: MAB(S, rFF(Z)) with k learned seeds."""

    def __init__(self, d_model: int, num_heads: int, num_seeds: int = 1,
                 activation: str = "gelu"):
        super().__init__()
        self.seeds = torch.nn.Parameter(
            torch.randn(num_seeds, d_model, dtype=DTYPE) / math.sqrt(d_model)
        )
        self.rff = MLP([d_model, d_model, d_model], activation=activation)
        self.mab = MAB(d_model, num_heads, activation)

    def forward(self, z: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        b = z.shape[0]
        s = self.seeds.unsqueeze(0).expand(b, -1, -1)
        return self.mab(s, self.rff(z), key_mask=mask)


# --- message-passing layers --------------------------------------------------

class GCNLayer(torch.nn.Module):
    """Self-loop augmented convolution with symmetric degree normalization."""

    def __init__(self, d_in: int, d_out: int, activation: str = "gelu"):
        super().__init__()
        self.lin = linear(d_in, d_out)
        self.activation = activation

    def forward(self, h: torch.Tensor, adjacency: torch.Tensor,
                mask: torch.Tensor) -> torch.Tensor:
        b, n, _ = h.shape
        eye = torch.eye(n, dtype=DTYPE).unsqueeze(0)
        a_tilde = adjacency + eye
        deg = a_tilde.sum(dim=-1).clamp(min=1.0)
        norm = deg.rsqrt()
        msg = norm.unsqueeze(-1) * (a_tilde @ (norm.unsqueeze(-1) * h))
        out = nncore.ACTIVATIONS[self.activation](self.lin(msg))
        return out * mask.unsqueeze(-1)


class BasicGNNLayer(torch.nn.Module):
    """h_i' = act(W_self h_i + W_neigh sum_{j in N(i)} h_j + b)."""

    def __init__(self, d_in: int, d_out: int, activation: str = "gelu"):
        super().__init__()
        self.w_self = linear(d_in, d_out, bias=False)
        self.w_neigh = linear(d_in, d_out, bias=False)
        self.bias = torch.nn.Parameter(torch.zeros(d_out, dtype=DTYPE))
        self.activation = activation

    def forward(self, h: torch.Tensor, adjacency: torch.Tensor,
                mask: torch.Tensor) -> torch.Tensor:
        out = self.w_self(h) + self.w_neigh(adjacency @ h) + self.bias
        out = nncore.ACTIVATIONS[self.activation](out)
        return out * mask.unsqueeze(-1)


class GraphTransformerLayer(torch.nn.Module):
    """Pre-norm transformer layer with attention restricted to N(i) + self.

    Weighted adjacency is binarized at > 0 for masking; edge weights are not
    used as attention biases.
    """

    def __init__(self, d_model: int, num_heads: int, activation: str = "gelu"):
        super().__init__()
        self.ln1 = torch.nn.LayerNorm(d_model, dtype=DTYPE)
        self.ln2 = torch.nn.LayerNorm(d_model, dtype=DTYPE)
        self.mha = MultiHeadAttention(d_model, num_heads)
        self.ffn = MLP([d_model, d_model, d_model], activation=activation)

    def forward(self, h: torch.Tensor, adjacency: torch.Tensor,
                mask: torch.Tensor) -> torch.Tensor:
        b, n, _ = h.shape
        eye = torch.eye(n, dtype=torch.bool).unsqueeze(0).expand(b, -1, -1)
        allowed = (adjacency > 0) | eye
        allowed = allowed & (mask > 0).unsqueeze(1)  # padded keys excluded
        hn = self.ln1(h)
        h = h + self.mha(hn, hn, attn_mask=allowed)
        h = h + self.ffn(self.ln2(h))
        return h * mask.unsqueeze(-1)


# --- pooling heads ------------------------------------------------------------

class MeanPool(torch.nn.Module):
    def forward(self, z: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        m = mask.unsqueeze(-1)
        return (z * m).sum(dim=1) / m.sum(dim=1).clamp(min=1.0)


class InvariantPool(torch.nn.Module):
    """Deep-Sets pooling head: rho(sum_i phi(z_i)) over unmasked nodes."""

    def __init__(self, d_model: int, activation: str = "gelu"):
        super().__init__()
        self.phi = MLP([d_model, d_model, d_model], activation=activation)
        self.rho = MLP([d_model, d_model, d_model], activation=activation)

    def forward(self, z: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        pooled = (self.phi(z) * mask.unsqueeze(-1)).sum(dim=1)
        return self.rho(pooled)


class PMAPool(torch.nn.Module):
    def __init__(self, d_model: int, num_heads: int, num_seeds: int,
                 activation: str = "gelu"):
        super().__init__()
        self.pma = PMA(d_model, num_heads, num_seeds, activation)

    def forward(self, z: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        out = self.pma(z, mask)  # (B, k, d)
        return out.reshape(out.shape[0], -1)


# --- feature augmentation -----------------------------------------------------

def augment_features(adjacency: np.ndarray, features: np.ndarray,
                     mask: np.ndarray, mode: str) -> np.ndarray:
    """Assemble encoder input rows for one padded graph.

    ``adjacency_row`` concatenates each node's raw adjacency row (the width
    then equals p + n_max, so all graphs must share a fixed node count).
    ``structural`` appends permutation-equivariant structure summaries scaled
    to O(1), keeping the final summary exactly invariant under relabeling.
    """
    if mode == "none":
        return features
    if mode == "adjacency_row":
        return np.concatenate([features, adjacency], axis=1)
    if mode == "structural":
        raw = structural_node_features(adjacency, features)
        n_real = max(float(mask.sum()), 2.0)
        p = features.shape[1]
        scale = np.ones(raw.shape[1])
        scale[0] = n_real - 1.0                      # degree
        scale[1:1 + p] = n_real - 1.0                # neighbor aggregates
        scale[1 + p] = (n_real - 1.0) * (n_real - 2.0) / 2.0 + 1.0  # triangles
        scale[2 + p] = n_real - 1.0                  # non-edge CN count
        scale[3 + p] = (n_real - 1.0) * (n_real - 2.0) + 1.0        # non-edge CN sum
        scale[4 + p] = n_real - 1.0                  # weighted disagreement
        return np.concatenate([features, raw / scale], axis=1)
    raise ConfigError(f"unknown augment mode: {mode!r}")


def augmented_width(p: int, n_max: int, mode: str) -> int:
    if mode == "none":
        return p
    if mode == "adjacency_row":
        return p + n_max
    if mode == "structural":
        return 2 * p + 5
    raise ConfigError(f"unknown augment mode: {mode!r}")


# --- the summary network -------------------------------------------------------

class SummaryNet(torch.nn.Module):
    """Configured encoder trunk + pooling head + linear summary projection."""

    def __init__(self, config: EncoderConfig, input_dim: int):
        super().__init__()
        self.config = config
        self.input_dim = input_dim
        d = config.hidden_dim
        act = config.activation
        self.proj = linear(max(input_dim, 1), d)
        arch = config.architecture
        if arch == "deep_sets":
            self.trunk = torch.nn.ModuleList(
                MLP([d, d, d], activation=act) for _ in range(config.num_layers)
            )
        elif arch == "gcn":
            self.trunk = torch.nn.ModuleList(
                GCNLayer(d, d, activation=act) for _ in range(config.num_layers)
            )
        elif arch == "set_transformer":
            block = ISAB if config.use_inducing else SAB
            args = (d, config.num_heads)
            if config.use_inducing:
                args = (d, config.num_heads, config.num_inducing)
            self.trunk = torch.nn.ModuleList(
                block(*args, activation=act) for _ in range(config.num_layers)
            )
        else:  # graph_transformer
            self.trunk = torch.nn.ModuleList(
                GraphTransformerLayer(d, config.num_heads, activation=act)
                for _ in range(config.num_layers)
            )
        if config.pooling == "mean":
            self.pool = MeanPool()
        elif config.pooling == "invariant":
            self.pool = InvariantPool(d, activation=act)
        else:
            self.pool = PMAPool(d, config.num_heads, config.num_seeds, activation=act)
        pooled_dim = d * (config.num_seeds if config.pooling == "pma" else 1)
        self.head = linear(pooled_dim, config.summary_dim)

    def forward(self, features: torch.Tensor, adjacency: torch.Tensor | None,
                mask: torch.Tensor) -> torch.Tensor:
        if features.shape[-1] != self.input_dim:
            raise ConfigError(
                f"encoder expects input width {self.input_dim}, got {features.shape[-1]}"
            )
        x = features
        if self.input_dim == 0:
            if adjacency is None:
                raise ConfigError("featureless graphs need an adjacency for degrees")
            x = adjacency.sum(dim=-1, keepdim=True)
        x = self.proj(x) * mask.unsqueeze(-1)
        structural = self.config.architecture in ("gcn", "graph_transformer")
        if structural and adjacency is None:
            raise ConfigError(
                f"{self.config.architecture} requires an adjacency matrix"
            )
        for layer in self.trunk:
            if structural:
                x = layer(x, adjacency, mask)
            elif self.config.architecture == "deep_sets":
                x = layer(x) * mask.unsqueeze(-1)
            else:
                x = layer(x, mask)
            x = nncore.dropout(x, self.config.dropout, self.training)
            x = x * mask.unsqueeze(-1)
        pooled = self.pool(x, mask)
        return self.head(pooled)


def summarize(net: SummaryNet, pg: PaddedGraph, augment: str = "none") -> np.ndarray:
    """Summary vector for a single padded graph (convenience wrapper)."""
    feats = augment_features(pg.adjacency, pg.features, pg.mask, augment)
    f = torch.as_tensor(feats, dtype=DTYPE).unsqueeze(0)
    a = torch.as_tensor(pg.adjacency, dtype=DTYPE).unsqueeze(0)
    m = torch.as_tensor(pg.mask, dtype=DTYPE).unsqueeze(0)
    was_training = net.training
    net.eval()
    with torch.no_grad():
        s = net(f, a, m)
    net.train(was_training)
    return s.squeeze(0).numpy()
