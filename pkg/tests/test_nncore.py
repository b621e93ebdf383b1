"""Numeric core: layers, autodiff, optimizer, and checkpoint format."""

import math

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from graphabi.nncore import (DTYPE, MLP, ParameterStore, TrainStep, backward,
                             diff_array, dropout, gradient_check, layer_norm,
                             linear, load_checkpoint, mlp_forward,
                             optimizer_step, save_checkpoint, softmax_rows)


def test_diff_array_dtype_and_grad():
    t = diff_array([1.0, 2.0], requires_grad=True)
    assert t.dtype == DTYPE and t.requires_grad
    assert not diff_array([1.0]).requires_grad


# --- MLP -----------------------------------------------------------------------

def test_mlp_single_layer_is_affine():
    mlp = MLP([3, 2], activation="gelu")
    x = diff_array(np.random.default_rng(0).normal(size=(5, 3)))
    w = mlp.layers[0].weight.detach()
    b = mlp.layers[0].bias.detach()
    np.testing.assert_allclose(mlp(x).detach(), (x @ w.T + b), atol=1e-14)


def test_mlp_zero_init_last_outputs_zero():
    mlp = MLP([3, 8, 4], zero_init_last=True)
    x = diff_array(np.random.default_rng(0).normal(size=(6, 3)))
    assert torch.all(mlp(x) == 0)


def test_mlp_forward_hand_case():
    """Two layers with known weights and relu, computed by hand.

    x = [1, 2]; layer 1: w = [[1, 0], [0, -1]], b = [0, 1] -> [1, -1],
    relu -> [1, 0]; layer 2: w = [[2], [5]], b = [3] -> [5].
    """
    x = diff_array([[1.0, 2.0]])
    params = [(diff_array([[1.0, 0.0], [0.0, -1.0]]), diff_array([0.0, 1.0])),
              (diff_array([[2.0], [5.0]]), diff_array([3.0]))]
    out = mlp_forward(x, params, activation="relu")
    np.testing.assert_allclose(out.numpy(), [[5.0]])


def test_mlp_forward_shape_error_names_layer():
    params = [(diff_array(np.zeros((3, 2))), diff_array(np.zeros(2)))]
    with pytest.raises(ValueError, match="layer 0"):
        mlp_forward(diff_array(np.zeros((1, 4))), params)


# --- softmax / layer norm / dropout ---------------------------------------------

def test_softmax_rows_properties_and_jacobian():
    """Rows sum to 1; autodiff Jacobian matches diag(s) - s s^T analytically."""
    x = diff_array(np.random.default_rng(0).normal(size=4), requires_grad=True)
    s = softmax_rows(x)
    assert abs(s.sum().item() - 1.0) < 1e-12
    jac = torch.autograd.functional.jacobian(softmax_rows, x.detach())
    sd = s.detach()
    expected = torch.diag(sd) - torch.outer(sd, sd)
    np.testing.assert_allclose(jac.numpy(), expected.numpy(), atol=1e-12)


def test_softmax_shift_invariance():
    x = diff_array(np.random.default_rng(1).normal(size=(3, 5)))
    np.testing.assert_allclose(softmax_rows(x).numpy(),
                               softmax_rows(x + 7.0).numpy(), atol=1e-12)


def test_layer_norm_zero_mean_unit_variance():
    x = diff_array(np.random.default_rng(2).normal(size=(4, 16)) * 3 + 5)
    ones = diff_array(np.ones(16))
    zeros = diff_array(np.zeros(16))
    y = layer_norm(x, ones, zeros)
    np.testing.assert_allclose(y.mean(dim=-1).numpy(), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(dim=-1, unbiased=False).numpy(), 1.0,
                               atol=1e-4)


def test_dropout_identity_when_eval_or_zero():
    x = diff_array(np.random.default_rng(3).normal(size=(10, 10)))
    assert torch.equal(dropout(x, 0.5, training=False), x)
    assert torch.equal(dropout(x, 0.0, training=True), x)


def test_dropout_preserves_expectation():
    torch.manual_seed(0)
    x = torch.ones(200_000, dtype=DTYPE)
    y = dropout(x, 0.25, training=True)
    assert abs(y.mean().item() - 1.0) < 0.01


# --- autodiff -------------------------------------------------------------------

def test_backward_rejects_non_scalar():
    x = diff_array([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        backward(x * 2)


def test_backward_accumulates():
    x = diff_array([3.0], requires_grad=True)
    backward((x ** 2).sum())
    backward((x ** 2).sum())
    np.testing.assert_allclose(x.grad.numpy(), [12.0])  # 2 * (2 * 3)


def test_gradient_check_mlp():
    torch.manual_seed(0)
    mlp = MLP([3, 5, 2], activation="tanh")
    x = diff_array(np.random.default_rng(0).normal(size=(4, 3)))

    def loss():
        return (mlp(x) ** 2).sum()

    assert gradient_check(loss, mlp.parameters()) < 1e-6


def test_gradient_check_layer_norm_softmax():
    g = diff_array(np.random.default_rng(1).normal(size=6), requires_grad=True)
    b = diff_array(np.random.default_rng(2).normal(size=6), requires_grad=True)
    x = diff_array(np.random.default_rng(3).normal(size=(3, 6)))

    def loss():
        return softmax_rows(layer_norm(x, g, b)).square().sum()

    assert gradient_check(loss, [g, b]) < 1e-6


# --- optimizer -------------------------------------------------------------------

def test_trainstep_validation():
    with pytest.raises(ValueError):
        TrainStep(beta1=1.0)
    with pytest.raises(ValueError):
        TrainStep(eps=0.0)


def test_adam_single_step_oracle():
    """Hand-computed first update: m=0.1g, v=0.001g^2, bias-corrected.

    With g constant the first step is exactly -lr * g / (|g| + eps')
    where the bias corrections cancel to m_hat = g, v_hat = g^2.
    """
    p = diff_array([1.0, -2.0], requires_grad=True)
    store = ParameterStore()
    store.register("p", p)
    g = np.array([0.5, -3.0])
    p.grad = diff_array(g)
    cfg = TrainStep(lr=1e-3)
    optimizer_step(store, cfg)
    m_hat = 0.1 * g / (1 - 0.9)
    v_hat = 0.001 * g ** 2 / (1 - 0.999)
    expected = np.array([1.0, -2.0]) - 1e-3 * m_hat / (np.sqrt(v_hat) + 1e-8)
    np.testing.assert_allclose(p.detach().numpy(), expected, atol=1e-15)
    assert cfg.step == 1


def test_adam_two_steps_match_reference_implementation():
    """Independent numpy Adam re-implementation over 5 steps."""
    rng = np.random.default_rng(0)
    w0 = rng.normal(size=4)
    grads = [rng.normal(size=4) for _ in range(5)]

    p = diff_array(w0, requires_grad=True)
    store = ParameterStore()
    store.register("w", p)
    cfg = TrainStep(lr=0.01)
    for g in grads:
        p.grad = diff_array(g)
        optimizer_step(store, cfg)

    w, m, v = w0.copy(), np.zeros(4), np.zeros(4)
    for t, g in enumerate(grads, start=1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p.detach().numpy(), w, atol=1e-12)


def test_adam_converges_on_quadratic():
    p = diff_array([5.0], requires_grad=True)
    store = ParameterStore()
    store.register("p", p)
    cfg = TrainStep(lr=0.05)
    for _ in range(2000):
        store.zero_grad()
        backward(((p - 2.0) ** 2).sum())
        optimizer_step(store, cfg)
    assert abs(p.item() - 2.0) < 1e-4


def test_parameter_store_duplicate_and_gradless():
    p = diff_array([1.0], requires_grad=True)
    store = ParameterStore()
    store.register("a", p)
    with pytest.raises(ValueError):
        store.register("a", p)
    with pytest.raises(ValueError):
        store.register("b", diff_array([1.0]))


# --- checkpoints -----------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"w1": rng.normal(size=(3, 4)), "b1": rng.normal(size=4),
              "scalar": np.array(2.5)}
    path = tmp_path / "ckpt.bin"
    save_checkpoint(arrays, path)
    assert path.exists() and (tmp_path / "ckpt.bin.manifest").exists()
    back = load_checkpoint(path)
    assert set(back) == set(arrays)
    for name in arrays:
        np.testing.assert_array_equal(back[name], arrays[name])


def test_checkpoint_manifest_is_plain_text(tmp_path):
    save_checkpoint({"w": np.arange(6.0).reshape(2, 3)}, tmp_path / "c.bin")
    text = (tmp_path / "c.bin.manifest").read_text()
    assert text == "w\t2,3\t0\n"


def test_checkpoint_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "nope.bin")


def test_store_checkpoint_roundtrip_via_modules(tmp_path):
    torch.manual_seed(0)
    mlp = MLP([2, 4, 1])
    store = ParameterStore.from_modules({"mlp": mlp})
    before = store.state_arrays()
    save_checkpoint(before, tmp_path / "m.bin")
    with torch.no_grad():
        for p in mlp.parameters():
            p.add_(1.0)
    store.load_arrays(load_checkpoint(tmp_path / "m.bin"))
    after = store.state_arrays()
    for name in before:
        np.testing.assert_array_equal(before[name], after[name])


def test_load_arrays_shape_mismatch():
    p = diff_array(np.zeros((2, 2)), requires_grad=True)
    store = ParameterStore()
    store.register("p", p)
    with pytest.raises(ValueError, match="shape mismatch"):
        store.load_arrays({"p": np.zeros(3)})


@settings(max_examples=25, deadline=None,
          suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(dims=st.lists(st.integers(1, 5), min_size=1, max_size=4),
       seed=st.integers(0, 1000))
def test_checkpoint_roundtrip_property(dims, seed, tmp_path):
    rng = np.random.default_rng(seed)
    arrays = {f"a{i}": rng.normal(size=tuple(dims[: i + 1]))
              for i in range(len(dims))}
    path = tmp_path / f"c{seed}.bin"
    save_checkpoint(arrays, path)
    back = load_checkpoint(path)
    for name in arrays:
        np.testing.assert_array_equal(back[name], arrays[name])
