import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mganet import oracles
from mganet.config import ConfigError, MgaConfig, Order
from mganet.gradcheck import grad_check, weighted_sum
from mganet.mga import LDSA, FrameContext, LocalContext, MGAModule, RelativeSelfAttention
from mganet.tensor import Tensor, no_grad


def rand(*shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


# -- global stage ----------------------------------------------------------
def _attention(d=6, heads=2, max_len=10, seed=0):
    return RelativeSelfAttention(np.random.default_rng(seed), d, heads, max_len)


@settings(max_examples=20, deadline=None)
@given(t=st.integers(1, 10), seed=st.integers(0, 999))
def test_attention_rows_sum_to_one(t, seed):
    ra = _attention(seed=seed)
    ra.rel.data[:] = rand(*ra.rel.shape, seed=seed)
    weights, _ = ra.attention(ra.ln(Tensor(rand(2, t, 6, seed=seed + 1) * 10)))
    assert weights.shape == (2, 2, t, t)
    assert np.max(np.abs(weights.data.sum(axis=-1) - 1.0)) <= 1e-9


def test_zero_value_map_leaves_only_the_residual():
    ra = _attention()
    ra.wv.data[:] = 0.0
    x = rand(5, 6)
    assert np.array_equal(ra(Tensor(x)).data, x)


def test_identical_tokens_attend_uniformly():
    ra = _attention(d=4, heads=1)
    ra.rel.data[:] = 0.0
    x = np.tile(rand(1, 4), (7, 1))
    weights, _ = ra.attention(ra.ln(Tensor(x[None])))
    np.testing.assert_allclose(weights.data, 1.0 / 7, atol=1e-15)


def test_permutation_equivariance_without_positions_and_its_loss_with_them():
    ra = _attention()
    x = rand(6, 6, seed=3)
    perm = np.random.default_rng(4).permutation(6)
    ra.rel.data[:] = 0.0
    np.testing.assert_allclose(ra(Tensor(x[perm])).data, ra(Tensor(x)).data[perm], atol=1e-12)
    ra.rel.data[:] = rand(*ra.rel.shape, seed=5)
    assert not np.allclose(ra(Tensor(x[perm])).data, ra(Tensor(x)).data[perm], atol=1e-6)


def test_sequence_longer_than_the_table():
    with pytest.raises(ConfigError):
        _attention(max_len=4)(Tensor(rand(5, 6)))


def test_heads_must_divide_width():
    with pytest.raises(ConfigError):
        _attention(d=6, heads=4)


def test_attention_grad_check():
    ra = _attention(seed=2)
    ra.u.data[:] = rand(*ra.u.shape, seed=6)
    ra.v.data[:] = rand(*ra.v.shape, seed=7)
    x = Tensor(rand(2, 4, 6, seed=8))
    assert grad_check(lambda x, *_: weighted_sum(ra(x)), [x] + ra.parameters()) <= 1e-3


# -- local stage -----------------------------------------------------------
def test_ldsa_single_frame_window():
    layer = LDSA(np.random.default_rng(0), 4, 1)
    x = rand(6, 4)
    np.testing.assert_allclose(layer(Tensor(x)).data, x @ layer.W3.data @ layer.Wo.data, atol=1e-12)


def test_ldsa_hand_set_weights_against_loop():
    layer = LDSA(np.random.default_rng(0), 2, 3)
    layer.W1.data[:] = [[1.0, -0.5], [0.25, 2.0]]
    layer.W2.data[:] = [[0.3, -1.0, 0.5], [1.5, 0.2, -0.7]]
    layer.W3.data[:] = [[2.0, 0.0], [-1.0, 1.0]]
    layer.Wo.data[:] = [[0.5, 1.0], [1.0, -0.5]]
    x = np.array([[1.0, 2.0], [-1.0, 0.5], [0.0, -2.0], [3.0, 1.0]])
    expected = oracles.ldsa(x, layer.W1.data, layer.W2.data, layer.W3.data, layer.Wo.data)
    assert np.max(np.abs(layer(Tensor(x)).data - expected)) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(t=st.integers(1, 8), d=st.integers(1, 8), c=st.sampled_from([1, 3, 5]), seed=st.integers(0, 2**20))
def test_ldsa_matches_loop_oracle(t, d, c, seed):
    rng = np.random.default_rng(seed)
    layer = LDSA(rng, d, c)
    x = rng.standard_normal((t, d))
    with no_grad():
        fast = layer(Tensor(x)).data
    slow = oracles.ldsa(x, layer.W1.data, layer.W2.data, layer.W3.data, layer.Wo.data)
    assert np.max(np.abs(fast - slow)) <= 1e-9


def test_ldsa_weights_are_row_stochastic():
    layer = LDSA(np.random.default_rng(1), 5, 5)
    a = layer.weights(Tensor(rand(2, 7, 5) * 20)).data
    assert np.max(np.abs(a.sum(axis=-1) - 1.0)) <= 1e-9


def test_ldsa_context_must_be_odd():
    with pytest.raises(ConfigError):
        LDSA(np.random.default_rng(0), 4, 2)


def test_local_context_with_zero_ldsa_is_identity():
    lc = LocalContext(np.random.default_rng(0), 4, 3)
    lc.ldsa.Wo.data[:] = 0.0
    x = rand(5, 4)
    assert np.array_equal(lc(Tensor(x)).data, x)


@pytest.mark.parametrize("t", [1, 2, 9])
def test_local_context_preserves_shape(t):
    assert LocalContext(np.random.default_rng(0), 4, 3)(Tensor(rand(t, 4))).shape == (t, 4)


def test_local_context_grad_check():
    lc = LocalContext(np.random.default_rng(2), 6, 3)
    x = Tensor(rand(5, 6, seed=2))
    assert grad_check(lambda x, *_: weighted_sum(lc(x)), [x] + lc.parameters()) <= 1e-3


# -- frame stage -----------------------------------------------------------
def test_frame_context_with_silent_gru_is_linear_of_relu():
    fc = FrameContext(np.random.default_rng(0), 4, 3)
    for gru in (fc.fwd, fc.bwd):
        for p in gru.parameters():
            p.data[:] = 0.0
    fc.proj.w.data[:] = 0.0
    x = rand(5, 4)
    expected = np.maximum(x, 0.0) @ fc.out.w.data + fc.out.b.data
    np.testing.assert_allclose(fc(Tensor(x)).data, expected, atol=1e-12)


def test_bigru_reversal_symmetry():
    fc = FrameContext(np.random.default_rng(3), 4, 3)
    h = rand(1, 6, 4, seed=3)
    before = fc.bigru(Tensor(h)).data
    swapped = FrameContext(np.random.default_rng(3), 4, 3)
    swapped.fwd, swapped.bwd = fc.bwd, fc.fwd
    after = swapped.bigru(Tensor(h[:, ::-1].copy())).data
    # reversed in time, and the forward/backward halves trade places
    np.testing.assert_allclose(after[:, :, :3], before[:, ::-1, 3:], atol=1e-12)
    np.testing.assert_allclose(after[:, :, 3:], before[:, ::-1, :3], atol=1e-12)


def test_frame_context_grad_check():
    fc = FrameContext(np.random.default_rng(4), 6, 5)
    x = Tensor(rand(4, 6, seed=4))
    assert grad_check(lambda x, *_: weighted_sum(fc(x)), [x] + fc.parameters()) <= 1e-3


def test_frame_context_passes_the_token_through():
    fc = FrameContext(np.random.default_rng(5), 4, 3)
    x = rand(2, 5, 4)
    out = fc(Tensor(x), skip_first=True).data
    np.testing.assert_array_equal(out[:, 0], x[:, 0])
    np.testing.assert_allclose(out[:, 1:], fc(Tensor(x[:, 1:])).data, atol=1e-12)


# -- module ----------------------------------------------------------------
def test_at_least_one_stage():
    with pytest.raises(ConfigError):
        MgaConfig(d=8, heads=2, global_stage=False, local_stage=False, frame_stage=False)


@pytest.mark.parametrize("stage", ["global", "local", "frame"])
def test_single_stage_module_is_that_stage(stage):
    flags = {f"{s}_stage": s == stage for s in ("global", "local", "frame")}
    module = MGAModule(np.random.default_rng(0), MgaConfig(d=8, heads=2, gru_hidden=4, **flags))
    x = Tensor(rand(6, 8))
    only = {"global": module.global_ctx, "local": module.local_ctx, "frame": module.frame_ctx}[stage]
    assert [name for name, _ in module.stages()] == [stage]
    assert np.array_equal(module(x).data, only(x).data)


def test_stage_order():
    cf = MGAModule(np.random.default_rng(0), MgaConfig(d=8, heads=2, gru_hidden=4))
    fc = MGAModule(np.random.default_rng(0), MgaConfig(d=8, heads=2, gru_hidden=4, order=Order.FINE_COARSE))
    assert [n for n, _ in cf.stages()] == ["global", "local", "frame"]
    assert [n for n, _ in fc.stages()] == ["frame", "local", "global"]
    x = Tensor(rand(6, 8))
    assert not np.allclose(cf(x).data, fc(x).data)


def test_four_full_width_modules_preserve_shape():
    rng = np.random.default_rng(0)
    x = Tensor(rand(2, 9, 144))
    for _ in range(4):
        x = MGAModule(rng, MgaConfig())(x, has_token=True)
    assert x.shape == (2, 9, 144)
