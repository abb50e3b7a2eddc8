"""Sequence-to-sequence autoencoder with additive (Bahdanau) attention.

Decoding step ``i``:

1. an extra query RNN layer consumes the teacher-forced input frame; its
   state is the decoder state that queries the encoder,
2. alignment scores ``e_ij = v_a . tanh(W_a q_i + U_a h_j)`` over every
   top-layer encoder state ``h_j`` are softmax-normalised into ``alpha_ij``,
3. the context ``c_i = sum_j alpha_ij h_j`` conditions every stacked decoder
   layer (concatenated to GRU inputs, through ``C_*`` for LSTMs),
4. the shared tanh projection emits the reconstructed frame.

The encoder-side fully connected layer (``fc_enc``) initialises the query
layer, and the last decoder layer's final hidden state is the second feature
tap (``state_dec``).
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import autoencoder as ae
from .autoencoder import ConfigError, ModelSpec
from .cells import CellState, run_layer
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.params import ParamSet, dense, glorot_init, make_rng

TAPS = ("fc_enc", "state_dec")


class AttentionTrace(NamedTuple):
    alphas: np.ndarray          # (B, T_dec, T_enc)
    contexts: Tensor            # (B, T_dec, enc_state_dim)


class AttentionOutput(NamedTuple):
    reconstruction: Tensor
    trace: AttentionTrace
    dec_final_states: list[CellState]


def init_params(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> ParamSet:
    if not spec.attention:
        raise ConfigError("spec.attention is False")
    rng = make_rng(seed)
    params = ParamSet()
    ae.init_encoder(params, spec, rng, dtype)
    ae._init_cell(params, spec, "query", spec.n_mels, rng, dtype=dtype)
    for layer in range(spec.dec_layers):
        in_dim = spec.n_mels if layer == 0 else spec.units
        ae._init_cell(params, spec, f"dec/l{layer}/fwd", in_dim, rng, spec.enc_state_dim, dtype)
    l = spec.align_dim
    params.add("att/W_a", glorot_init((l, spec.units), rng, dtype))
    params.add("att/U_a", glorot_init((l, spec.enc_state_dim), rng, dtype))
    params.add("att/v_a", glorot_init((l,), rng, dtype))
    params.add("proj/W", glorot_init((spec.n_mels, spec.units), rng, dtype))
    params.add("proj/b", np.zeros(spec.n_mels, dtype))
    return params


# ---------------------------------------------------------------------------
# alignment model


def alignment_scores(align: dict, h_dec_prev, enc_states, enc_proj: Tensor | None = None) -> Tensor:
    """``e_j = v_a . tanh(W_a h_dec_prev + U_a h_j)`` for every encoder step ``j``.

    Shapes: ``h_dec_prev`` (B, n) and ``enc_states`` (B, T, 2n), or the same
    without the batch axis. ``enc_proj`` may carry a precomputed ``U_a h``.
    """
    h_dec_prev, enc_states = ad.as_tensor(h_dec_prev), ad.as_tensor(enc_states)
    single = h_dec_prev.value.ndim == 1
    if single:
        h_dec_prev, enc_states = h_dec_prev[None], enc_states[None]
    W_a, U_a, v_a = (ad.as_tensor(align[k]) for k in ("W_a", "U_a", "v_a"))
    if W_a.shape[1] != h_dec_prev.shape[-1] or U_a.shape[1] != enc_states.shape[-1]:
        raise ValueError(f"alignment shapes W_a{W_a.shape} U_a{U_a.shape} do not fit "
                         f"query {h_dec_prev.shape} / states {enc_states.shape}")
    if enc_proj is None:
        enc_proj = ad.linear(enc_states, U_a)
    hidden = ad.tanh(ad.add(ad.linear(h_dec_prev, W_a)[:, None, :], enc_proj))
    scores = ad.sum(ad.mul(hidden, v_a), axis=-1)
    return scores[0] if single else scores


def attention_weights(scores, mask: np.ndarray | None = None) -> Tensor:
    """Max-shifted softmax over the last axis; masked-out positions get zero weight."""
    scores = ad.as_tensor(scores)
    if scores.shape[-1] == 0:
        raise ValueError("attention over an empty sequence")
    if not np.all(np.isfinite(scores.value)):
        raise ValueError("non-finite alignment scores")
    return ad.softmax(scores, mask)


def attention_context(alpha, enc_states) -> Tensor:
    """Convex combination ``sum_j alpha_j h_j``."""
    alpha, enc_states = ad.as_tensor(alpha), ad.as_tensor(enc_states)
    single = alpha.value.ndim == 1
    if single:
        alpha, enc_states = alpha[None], enc_states[None]
    if alpha.shape[-1] != enc_states.shape[1]:
        raise ValueError(f"{alpha.shape[-1]} weights for {enc_states.shape[1]} encoder states")
    c = ad.weighted_sum(alpha, enc_states)
    return c[0] if single else c


# ---------------------------------------------------------------------------
# decoder


def attention_decode(params: ParamSet, spec: ModelSpec, enc_states, decoder_input,
                     enc_lengths=None, dec_lengths=None, query_init: Tensor | None = None) -> AttentionOutput:
    """Teacher-forced attention decoding over a padded batch."""
    if not spec.attention:
        raise ConfigError("spec.attention is False")
    xs, dec_lengths, single = ae._batch(decoder_input, dec_lengths)
    enc_states = ad.as_tensor(enc_states)
    if enc_states.value.ndim == 2:
        enc_states = enc_states[None]
    B, T_enc = enc_states.shape[:2]
    enc_lengths = np.full(B, T_enc) if enc_lengths is None else np.asarray(enc_lengths)
    if enc_states.shape[-1] != spec.enc_state_dim:
        raise ConfigError(f"encoder state dim {enc_states.shape[-1]} != {spec.enc_state_dim}")

    init = None
    if query_init is not None:
        c0 = ad.Tensor(np.zeros(query_init.shape, query_init.dtype)) if spec.cell == "lstm" else None
        init = CellState(query_init, c0)
    queries, _ = run_layer(spec.cell, params.scope("query"), xs, dec_lengths, init=init)

    align = params.scope("att")
    enc_proj = ad.linear(enc_states, align["U_a"])
    mask = np.arange(T_enc)[None, :] < enc_lengths[:, None]
    full = bool(mask.all())
    alphas, contexts = [], []
    for q in queries:
        alpha = attention_weights(alignment_scores(align, q, enc_states, enc_proj),
                                  None if full else mask)
        alphas.append(alpha.value)
        contexts.append(attention_context(alpha, enc_states))
    ctx = ad.stack(contexts, axis=1)

    finals = []
    for layer in range(spec.dec_layers):
        steps, final = run_layer(spec.cell, params.scope(f"dec/l{layer}/fwd"), xs, dec_lengths,
                                 context=ctx)
        xs = ad.stack(steps, axis=1)
        finals.append(final)
    recon = dense(params["proj/W"], params["proj/b"], xs, "tanh")
    trace = AttentionTrace(np.stack(alphas, axis=1), ctx)
    if single:
        recon = recon[0]
    return AttentionOutput(recon, trace, finals)


def forward(params: ParamSet, spec: ModelSpec, frames, lengths=None):
    """Full pass: returns (loss, AttentionOutput, fc_enc activations)."""
    xs, lengths, _ = ae._batch(frames, lengths)
    enc = ae.encode_sequence(params, spec, xs, lengths)
    fc = ae.context_from_final(params, enc.final_concat)
    dec_in, target = ae.prepare_decoder_batch(xs.value, lengths)
    out = attention_decode(params, spec, enc.top, dec_in, lengths, lengths, query_init=fc)
    return ae.masked_mse(out.reconstruction, target, lengths), out, fc


def loss(params: ParamSet, spec: ModelSpec, frames, lengths=None) -> Tensor:
    return forward(params, spec, frames, lengths)[0]


def batch_features(params: ParamSet, spec: ModelSpec, frames, lengths, tap: str) -> np.ndarray:
    if tap not in TAPS:
        raise ValueError(f"unknown attention tap {tap!r}; expected one of {TAPS}")
    _, out, fc = forward(params, spec, frames, lengths)
    return fc.value if tap == "fc_enc" else out.dec_final_states[-1].h.value


def tap_features(checkpoint, spectrogram, tap: str) -> np.ndarray:
    """Feature vector of one (T, n_mels) spectrogram from an attention checkpoint."""
    from .model import params_from_checkpoint

    spec, params = params_from_checkpoint(checkpoint)
    if not spec.attention:
        raise ConfigError("checkpoint is not an attention model")
    frames = np.asarray(getattr(spectrogram, "frames", spectrogram), dtype=np.float32)
    return batch_features(params, spec, frames[None], [frames.shape[0]], tap)[0]


def write_alphas_csv(alphas: np.ndarray, path) -> Path:
    """Dump one instance's (T_dec, T_enc) weight matrix, one decoder step per row."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(alphas):
            writer.writerow([repr(float(a)) for a in row])
    return path
