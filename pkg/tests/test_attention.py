"""Additive attention: alignment scores, weights, contexts and the full model."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seq2seq_audio import attention as att
from seq2seq_audio import model
from seq2seq_audio.autoencoder import ModelSpec
from seq2seq_audio.numerics import autodiff as ad


def _spec(**kw):
    base = dict(cell="gru", enc_layers=2, dec_layers=2, units=4, enc_bidirectional=True,
                dec_bidirectional=False, n_mels=3, attention=True)
    base.update(kw)
    return ModelSpec(**base)


def _align(rng, l, n, m):
    return {"W_a": rng.normal(size=(l, n)), "U_a": rng.normal(size=(l, m)), "v_a": rng.normal(size=l)}


def test_scores_match_direct_loop():
    rng = np.random.default_rng(0)
    align = _align(rng, 5, 3, 6)
    s, H = rng.normal(size=3), rng.normal(size=(4, 6))
    got = att.alignment_scores(align, s, H).value
    want = [align["v_a"] @ np.tanh(align["W_a"] @ s + align["U_a"] @ h) for h in H]
    np.testing.assert_allclose(got, want, rtol=1e-13)


def test_uniform_scores_average_states():
    H = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    alpha = att.attention_weights(np.zeros(3)).value
    np.testing.assert_allclose(alpha, 1 / 3)
    np.testing.assert_allclose(att.attention_context(alpha, H).value, H.mean(axis=0))


def test_dominant_score_selects_state():
    H = np.array([[1.0, -2.0], [3.0, 4.0]])
    alpha = att.attention_weights(np.array([0.0, 1000.0])).value
    np.testing.assert_array_equal(att.attention_context(alpha, H).value, H[1])


def test_masked_positions_get_no_weight():
    alpha = att.attention_weights(np.array([[1.0, 2.0, 3.0]]), np.array([[True, True, False]])).value
    assert alpha[0, 2] == 0 and alpha[0].sum() == pytest.approx(1.0, abs=1e-15)


def test_bad_inputs():
    with pytest.raises(ValueError):
        att.attention_weights(np.zeros(0))
    with pytest.raises(ValueError):
        att.attention_weights(np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        att.attention_context(np.ones(2) / 2, np.ones((3, 2)))
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        att.alignment_scores(_align(rng, 2, 3, 4), np.zeros(5), np.zeros((2, 4)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 12), st.floats(0.01, 30.0))
def test_weight_and_context_invariants(seed, T, scale):
    rng = np.random.default_rng(seed)
    scores = rng.normal(0, scale, T)
    H = rng.normal(size=(T, 3))
    alpha = att.attention_weights(scores).value
    assert abs(alpha.sum() - 1) <= 1e-6
    assert np.all((alpha >= 0) & (alpha <= 1))
    c = att.attention_context(alpha, H).value
    assert np.all(c >= H.min(axis=0) - 1e-12) and np.all(c <= H.max(axis=0) + 1e-12)
    shifted = att.attention_weights(scores + rng.normal(0, 100)).value
    assert np.max(np.abs(shifted - alpha)) <= 1e-12


def test_feature_dims_at_full_size():
    spec = _spec(cell="lstm", units=512, n_mels=160)
    assert model.tap_dim(spec, "fc_enc") == 512 == model.tap_dim(spec, "state_dec")
    assert spec.align_dim == 512
    params = att.init_params(_spec(alignment_units=7), 0)
    assert params["att/W_a"].shape == (7, 4) and params["att/U_a"].shape == (7, 8)


def test_full_model_taps_and_trace():
    spec = _spec(cell="lstm")
    params = model.init_params(spec, 2)
    frames = np.random.default_rng(1).uniform(-1, 1, (2, 5, 3)).astype(np.float32)
    loss, out, fc = att.forward(params, spec, frames, [5, 4])
    assert out.reconstruction.shape == (2, 5, 3)
    assert out.trace.alphas.shape == (2, 5, 5)
    # the padded element never attends past its own length
    assert not out.trace.alphas[1, :, 4].any()
    np.testing.assert_allclose(out.trace.alphas.sum(-1), 1.0, atol=1e-6)
    feats = att.batch_features(params, spec, frames, [5, 4], "state_dec")
    assert feats.shape == (2, 4)
    np.testing.assert_array_equal(att.batch_features(params, spec, frames, [5, 4], "fc_enc"), fc.value)
    with pytest.raises(ValueError):
        att.batch_features(params, spec, frames, [5, 4], "context")


def test_per_instance_features_independent_of_batch():
    spec = _spec()
    params = model.init_params(spec, 3, dtype=np.float64)
    rng = np.random.default_rng(4)
    a, b = rng.uniform(-1, 1, (5, 3)), rng.uniform(-1, 1, (3, 3))
    batch = np.zeros((2, 5, 3))
    batch[0], batch[1, :3] = a, b
    both = att.batch_features(params, spec, batch, [5, 3], "state_dec")
    alone = att.batch_features(params, spec, b[None], [3], "state_dec")
    np.testing.assert_allclose(both[1], alone[0], rtol=1e-12)


def test_alignment_parameters_receive_gradient():
    spec = _spec()
    params = model.init_params(spec, 0, dtype=np.float64)
    frames = np.random.default_rng(0).uniform(-1, 1, (1, 4, 3))
    att.loss(params, spec, frames).backward()
    for name in ("att/W_a", "att/U_a", "att/v_a", "fc/W", "query/W_z"):
        assert np.abs(params[name].grad).max() > 0, name


def test_alphas_csv(tmp_path):
    path = att.write_alphas_csv(np.array([[0.25, 0.75], [1.0, 0.0]]), tmp_path / "a.csv")
    assert path.read_text().splitlines()[0] == "0.25,0.75"


def test_softmax_tensor_shift_invariance_at_scale():
    rng = np.random.default_rng(9)
    s = rng.normal(0, 50, (4, 7))
    a = ad.softmax(ad.Tensor(s)).value
    b = ad.softmax(ad.Tensor(s - 1e3)).value
    assert np.max(np.abs(a - b)) <= 1e-12
