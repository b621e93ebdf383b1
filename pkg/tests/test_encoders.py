"""Summary networks: masking, equivariance of trunks, invariance of summaries."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from graphabi.encoders import (ARCHITECTURES, POOLINGS, BasicGNNLayer,
                               ConfigError, EncoderConfig, GCNLayer,
                               GraphTransformerLayer, ISAB, MAB,
                               MultiHeadAttention, PMA, SAB, SummaryNet,
                               augment_features, augmented_width,
                               scaled_dot_attention, summarize)
from graphabi.graphs import (Graph, Permutation, apply_permutation, pad_graph)
from graphabi.nncore import DTYPE

torch.manual_seed(0)


def random_padded(rng, n, n_max, p=2):
    upper = np.triu(rng.random((n, n)) < 0.4, k=1).astype(np.float64)
    g = Graph(adjacency=upper + upper.T, features=rng.normal(size=(n, p)))
    return g, pad_graph(g, n_max)


def permuted_padded(g, perm, n_max):
    return pad_graph(apply_permutation(g, perm), n_max)


def tensors(x):
    return torch.as_tensor(np.asarray(x), dtype=DTYPE)


# --- config validation -----------------------------------------------------------

def test_config_rejects_unknown_architecture():
    with pytest.raises(ConfigError):
        EncoderConfig(architecture="mlp", pooling="mean")


def test_config_rejects_indivisible_heads():
    with pytest.raises(ConfigError):
        EncoderConfig(hidden_dim=30, num_heads=4)


def test_config_default_layers():
    assert EncoderConfig(architecture="gcn", pooling="mean").num_layers == 3
    assert EncoderConfig(architecture="deep_sets", pooling="mean").num_layers == 2


# --- attention primitives ---------------------------------------------------------

def test_scaled_dot_attention_uniform_keys():
    """Identical keys give the average of the values regardless of the query."""
    q = torch.randn(1, 3, 4, dtype=DTYPE)
    k = torch.ones(1, 5, 4, dtype=DTYPE)
    v = torch.arange(5, dtype=DTYPE).reshape(1, 5, 1).expand(1, 5, 4).clone()
    out = scaled_dot_attention(q, k, v)
    np.testing.assert_allclose(out.numpy(), 2.0, atol=1e-12)


def test_scaled_dot_attention_mask_excludes_keys():
    """A masked key gets zero attention weight: result matches dropping it."""
    torch.manual_seed(1)
    q = torch.randn(1, 2, 4, dtype=DTYPE)
    k = torch.randn(1, 3, 4, dtype=DTYPE)
    v = torch.randn(1, 3, 4, dtype=DTYPE)
    mask = torch.tensor([[[True, True, False]] * 2])
    out = scaled_dot_attention(q, k, v, mask)
    ref = scaled_dot_attention(q, k[:, :2], v[:, :2])
    np.testing.assert_allclose(out.numpy(), ref.numpy(), atol=1e-12)


def test_scaled_dot_attention_all_masked_row_is_zero():
    q = torch.randn(1, 2, 4, dtype=DTYPE)
    k = torch.randn(1, 3, 4, dtype=DTYPE)
    v = torch.randn(1, 3, 4, dtype=DTYPE)
    mask = torch.tensor([[[False] * 3, [True] * 3]])
    out = scaled_dot_attention(q, k, v, mask)
    assert torch.all(out[0, 0] == 0) and torch.any(out[0, 1] != 0)
    assert torch.isfinite(out).all()


def test_mab_reduces_to_layernorm_chain_with_zero_weights():
    """With all attention and rFF weights zeroed, MAB(X, Y) = LN2(LN1(X))."""
    mab = MAB(8, 2)
    with torch.no_grad():
        for p in mab.mha.parameters():
            p.zero_()
        for layer in mab.rff.layers:
            layer.weight.zero_()
            layer.bias.zero_()
    x = torch.randn(2, 5, 8, dtype=DTYPE)
    y = torch.randn(2, 7, 8, dtype=DTYPE)
    expected = mab.ln2(mab.ln1(x))
    np.testing.assert_allclose(mab(x, y).detach().numpy(),
                               expected.detach().numpy(), atol=1e-12)


def test_pma_invariant_sab_isab_equivariant():
    rng = np.random.default_rng(0)
    x = torch.randn(1, 6, 8, dtype=DTYPE)
    perm = torch.as_tensor(rng.permutation(6))
    for block in (SAB(8, 2), ISAB(8, 2, 3)):
        out = block(x)
        out_p = block(x[:, perm])
        np.testing.assert_allclose(out_p.detach().numpy(),
                                   out[:, perm].detach().numpy(), atol=1e-10)
    pma = PMA(8, 2, num_seeds=2)
    np.testing.assert_allclose(pma(x[:, perm]).detach().numpy(),
                               pma(x).detach().numpy(), atol=1e-10)


# --- message-passing layers --------------------------------------------------------

def test_gcn_layer_hand_case():
    """Two connected nodes: output = (h_i + h_j) / 2 with identity weights.

    A_tilde = [[1,1],[1,1]], degrees 2, so each message is
    (1/sqrt(2)) * sum_j A_tilde_ij (1/sqrt(2)) h_j = (h_i + h_j) / 2.
    """
    layer = GCNLayer(2, 2, activation="linear")
    with torch.no_grad():
        layer.lin.weight.copy_(torch.eye(2, dtype=DTYPE))
        layer.lin.bias.zero_()
    h = tensors([[[2.0, 0.0], [0.0, 4.0]]])
    a = tensors([[[0.0, 1.0], [1.0, 0.0]]])
    m = tensors([[1.0, 1.0]])
    np.testing.assert_allclose(layer(h, a, m).detach().numpy(),
                               [[[1.0, 2.0], [1.0, 2.0]]], atol=1e-12)


def test_gcn_isolated_node_keeps_self_message():
    """Isolated node: A_tilde row is just the self-loop, degree 1."""
    layer = GCNLayer(1, 1, activation="linear")
    with torch.no_grad():
        layer.lin.weight.copy_(torch.ones(1, 1, dtype=DTYPE))
        layer.lin.bias.zero_()
    h = tensors([[[3.0], [5.0]]])
    a = tensors([[[0.0, 0.0], [0.0, 0.0]]])
    m = tensors([[1.0, 1.0]])
    np.testing.assert_allclose(layer(h, a, m).detach().numpy(),
                               [[[3.0], [5.0]]], atol=1e-12)


def test_basic_gnn_layer_hand_case():
    """h' = W_self h + W_neigh sum_neighbors h with identity weights."""
    layer = BasicGNNLayer(1, 1, activation="linear")
    with torch.no_grad():
        layer.w_self.weight.copy_(torch.ones(1, 1, dtype=DTYPE))
        layer.w_neigh.weight.copy_(torch.ones(1, 1, dtype=DTYPE))
        layer.bias.zero_()
    h = tensors([[[1.0], [10.0], [100.0]]])
    a = tensors([[[0., 1., 1.], [1., 0., 0.], [1., 0., 0.]]])
    m = tensors([[1.0, 1.0, 1.0]])
    np.testing.assert_allclose(layer(h, a, m).detach().numpy(),
                               [[[111.0], [11.0], [101.0]]], atol=1e-12)


@pytest.mark.parametrize("layer_factory", [
    lambda: GCNLayer(4, 4),
    lambda: BasicGNNLayer(4, 4),
    lambda: GraphTransformerLayer(4, 2),
])
def test_message_passing_layers_equivariant(layer_factory):
    rng = np.random.default_rng(3)
    layer = layer_factory()
    g, pg = random_padded(rng, 7, 7, p=4)
    perm = Permutation.random(7, rng)
    pgp = permuted_padded(g, perm, 7)
    h = tensors(pg.features).unsqueeze(0)
    a = tensors(pg.adjacency).unsqueeze(0)
    m = tensors(pg.mask).unsqueeze(0)
    hp = tensors(pgp.features).unsqueeze(0)
    ap = tensors(pgp.adjacency).unsqueeze(0)
    out = layer(h, a, m).detach().numpy()[0]
    out_p = layer(hp, ap, m).detach().numpy()[0]
    np.testing.assert_allclose(out_p, out[perm.order], atol=1e-10)


def test_graph_transformer_restricts_attention():
    """A node with no neighbors only attends to itself: changing a far node's
    features must not change its output."""
    layer = GraphTransformerLayer(4, 2)
    a = tensors(np.zeros((3, 3))).unsqueeze(0)
    m = tensors(np.ones(3)).unsqueeze(0)
    h1 = torch.randn(1, 3, 4, dtype=DTYPE)
    h2 = h1.clone()
    h2[0, 2] += 10.0
    o1 = layer(h1, a, m).detach()
    o2 = layer(h2, a, m).detach()
    np.testing.assert_allclose(o1[0, 0].numpy(), o2[0, 0].numpy(), atol=1e-12)
    assert not np.allclose(o1[0, 2].numpy(), o2[0, 2].numpy())


# --- augmentation ------------------------------------------------------------------

def test_augment_widths_match():
    rng = np.random.default_rng(4)
    _, pg = random_padded(rng, 5, 8, p=3)
    for mode in ("none", "adjacency_row", "structural"):
        out = augment_features(pg.adjacency, pg.features, pg.mask, mode)
        assert out.shape[1] == augmented_width(3, 8, mode)


def test_adjacency_row_augment_concatenates_raw_rows():
    rng = np.random.default_rng(5)
    _, pg = random_padded(rng, 4, 4, p=1)
    out = augment_features(pg.adjacency, pg.features, pg.mask, "adjacency_row")
    np.testing.assert_array_equal(out[:, 1:], pg.adjacency)


def test_structural_augment_is_bounded():
    rng = np.random.default_rng(6)
    _, pg = random_padded(rng, 30, 30, p=1)
    out = augment_features(pg.adjacency, pg.features, pg.mask, "structural")
    assert np.all(np.abs(out[:, 1:]) <= 3.0)


# --- summary invariance (the core contract) ------------------------------------------

ALL_CONFIGS = [(a, p) for a in ARCHITECTURES for p in POOLINGS]


@pytest.mark.parametrize("arch,pool", ALL_CONFIGS)
def test_summary_invariant_under_relabeling(arch, pool):
    torch.manual_seed(7)
    rng = np.random.default_rng(7)
    cfg = EncoderConfig(architecture=arch, pooling=pool, summary_dim=6,
                        hidden_dim=16, num_heads=2)
    augment = "structural" if arch in ("deep_sets", "set_transformer") else "none"
    net = SummaryNet(cfg, augmented_width(2, 9, augment))
    g, pg = random_padded(rng, 9, 9)
    s0 = summarize(net, pg, augment)
    for _ in range(5):
        perm = Permutation.random(9, rng)
        s1 = summarize(net, permuted_padded(g, perm, 9), augment)
        np.testing.assert_allclose(s1, s0, atol=1e-8)


@pytest.mark.parametrize("arch,pool", ALL_CONFIGS)
def test_summary_invariant_under_pad_extension(arch, pool):
    """Padding a graph with extra absent nodes must not change the summary."""
    torch.manual_seed(8)
    rng = np.random.default_rng(8)
    cfg = EncoderConfig(architecture=arch, pooling=pool, summary_dim=6,
                        hidden_dim=16, num_heads=2)
    augment = "structural" if arch in ("deep_sets", "set_transformer") else "none"
    net = SummaryNet(cfg, augmented_width(2, 0, augment))
    g, _ = random_padded(rng, 6, 6)
    s_tight = summarize(net, pad_graph(g, 6), augment)
    s_loose = summarize(net, pad_graph(g, 11), augment)
    np.testing.assert_allclose(s_loose, s_tight, atol=1e-8)


def test_summary_batched_matches_single():
    torch.manual_seed(9)
    rng = np.random.default_rng(9)
    cfg = EncoderConfig(architecture="set_transformer", pooling="pma",
                        summary_dim=4, hidden_dim=16, num_heads=2)
    net = SummaryNet(cfg, 2)
    graphs = [random_padded(rng, n, 8)[1] for n in (3, 5, 8)]
    f = torch.stack([tensors(p.features) for p in graphs])
    a = torch.stack([tensors(p.adjacency) for p in graphs])
    m = torch.stack([tensors(p.mask) for p in graphs])
    net.eval()
    with torch.no_grad():
        batch_out = net(f, a, m).numpy()
    for i, pg in enumerate(graphs):
        np.testing.assert_allclose(summarize(net, pg), batch_out[i], atol=1e-10)


def test_summary_input_width_mismatch_raises():
    cfg = EncoderConfig(architecture="deep_sets", pooling="mean",
                        summary_dim=4, hidden_dim=16)
    net = SummaryNet(cfg, 3)
    with pytest.raises(ConfigError, match="width"):
        net(torch.zeros(1, 4, 2, dtype=DTYPE), None,
            torch.ones(1, 4, dtype=DTYPE))


def test_featureless_graph_uses_degrees():
    torch.manual_seed(10)
    rng = np.random.default_rng(10)
    cfg = EncoderConfig(architecture="gcn", pooling="mean", summary_dim=4,
                        hidden_dim=16)
    net = SummaryNet(cfg, 0)
    upper = np.triu(rng.random((5, 5)) < 0.5, k=1).astype(float)
    g = Graph(adjacency=upper + upper.T, features=np.zeros((5, 0)))
    s = summarize(net, pad_graph(g, 5))
    assert np.all(np.isfinite(s)) and s.shape == (4,)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(3, 10), seed=st.integers(0, 1000))
def test_deep_sets_structural_invariance_property(n, seed):
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    cfg = EncoderConfig(architecture="deep_sets", pooling="invariant",
                        summary_dim=4, hidden_dim=16)
    net = SummaryNet(cfg, augmented_width(2, n, "structural"))
    g, pg = random_padded(rng, n, n)
    perm = Permutation.random(n, rng)
    s0 = summarize(net, pg, "structural")
    s1 = summarize(net, permuted_padded(g, perm, n), "structural")
    np.testing.assert_allclose(s1, s0, atol=1e-8)
