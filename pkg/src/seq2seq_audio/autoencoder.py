"""Recurrent sequence-to-sequence autoencoder without attention.

The encoder stack reads the spectrogram; its final hidden states, concatenated
over layers and directions, pass through a tanh fully connected layer whose
output is both the decoder's conditioning context and the learnt feature
vector. The decoder is teacher forced on the time-reversed spectrogram and a
shared tanh projection maps each decoder output back to ``n_mels``.

All model functions work on padded batches of shape (B, T, n_mels) with a
``lengths`` vector; 2-D (T, n_mels) inputs are treated as a batch of one.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .cells import CellState, init_gru, init_lstm, run_layer
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.params import ParamSet, dense, glorot_init, make_rng


class ConfigError(ValueError):
    """Raised for inconsistent model or data configurations."""


@dataclass(frozen=True)
class ModelSpec:
    cell: str = "gru"
    enc_layers: int = 2
    dec_layers: int = 2
    units: int = 256
    enc_bidirectional: bool = True
    dec_bidirectional: bool = False
    n_mels: int = 128
    attention: bool = False
    alignment_units: int | None = None

    def __post_init__(self):
        if self.cell not in ("gru", "lstm"):
            raise ConfigError(f"cell must be 'gru' or 'lstm', got {self.cell!r}")
        if self.enc_layers not in (1, 2) or self.dec_layers not in (1, 2):
            raise ConfigError("encoder and decoder layer counts must be 1 or 2")
        if self.units < 1 or self.n_mels < 1:
            raise ConfigError("units and n_mels must be positive")
        if self.attention and self.dec_bidirectional:
            raise ConfigError("the attention decoder is unidirectional")
        if self.alignment_units is not None and self.alignment_units < 1:
            raise ConfigError("alignment_units must be positive")

    @property
    def enc_dirs(self) -> int:
        return 2 if self.enc_bidirectional else 1

    @property
    def dec_dirs(self) -> int:
        return 2 if self.dec_bidirectional else 1

    @property
    def enc_state_dim(self) -> int:
        return self.enc_dirs * self.units

    @property
    def final_concat_dim(self) -> int:
        return self.enc_layers * self.enc_dirs * self.units

    @property
    def context_dim(self) -> int:
        # fixed at layers x 2 x units so both uni-bi and bi-uni give the same feature size
        return self.enc_layers * 2 * self.units

    @property
    def fc_dim(self) -> int:
        return self.units if self.attention else self.context_dim

    @property
    def align_dim(self) -> int:
        return self.alignment_units or self.units

    @property
    def feature_dim(self) -> int:
        return self.fc_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


class EncoderOutput(NamedTuple):
    layers: list[Tensor]        # per layer (B, T, dirs * units), directions concatenated per step
    final_concat: Tensor        # (B, layers * dirs * units)

    @property
    def top(self) -> Tensor:
        return self.layers[-1]


def _directions(bidirectional: bool) -> tuple[str, ...]:
    return ("fwd", "bwd") if bidirectional else ("fwd",)


def _batch(frames, lengths=None) -> tuple[Tensor, np.ndarray, bool]:
    frames = ad.as_tensor(frames)
    single = frames.value.ndim == 2
    if single:
        frames = frames[None]
    B, T = frames.shape[:2]
    if T < 1:
        raise ConfigError("empty sequence")
    lengths = np.full(B, T) if lengths is None else np.asarray(lengths)
    if lengths.shape != (B,) or lengths.min() < 1 or lengths.max() > T:
        raise ConfigError(f"lengths {lengths} inconsistent with batch of shape {frames.shape}")
    return frames, lengths, single


# ---------------------------------------------------------------------------
# parameters


def _init_cell(params, spec, prefix, input_dim, rng, context_dim=0, dtype=np.float32):
    if spec.cell == "gru":
        init_gru(params, prefix, input_dim + context_dim, spec.units, rng, dtype)
    else:
        init_lstm(params, prefix, input_dim, spec.units, rng, context_dim, dtype)


def init_encoder(params: ParamSet, spec: ModelSpec, rng, dtype=np.float32) -> None:
    for layer in range(spec.enc_layers):
        in_dim = spec.n_mels if layer == 0 else spec.enc_state_dim
        for d in _directions(spec.enc_bidirectional):
            _init_cell(params, spec, f"enc/l{layer}/{d}", in_dim, rng, dtype=dtype)
    params.add("fc/W", glorot_init((spec.fc_dim, spec.final_concat_dim), rng, dtype))
    params.add("fc/b", np.zeros(spec.fc_dim, dtype))


def init_params(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> ParamSet:
    """Glorot-initialised parameters for a non-attention model."""
    if spec.attention:
        raise ConfigError("use attention.init_params for attention models")
    rng = make_rng(seed)
    params = ParamSet()
    init_encoder(params, spec, rng, dtype)
    for layer in range(spec.dec_layers):
        in_dim = spec.n_mels if layer == 0 else spec.dec_dirs * spec.units
        for d in _directions(spec.dec_bidirectional):
            _init_cell(params, spec, f"dec/l{layer}/{d}", in_dim, rng, spec.context_dim, dtype)
    params.add("proj/W", glorot_init((spec.n_mels, spec.dec_dirs * spec.units), rng, dtype))
    params.add("proj/b", np.zeros(spec.n_mels, dtype))
    return params


# ---------------------------------------------------------------------------
# encoder


def encode_sequence(params: ParamSet, spec: ModelSpec, frames, lengths=None) -> EncoderOutput:
    """Run the encoder stack from zero initial states."""
    xs, lengths, _ = _batch(frames, lengths)
    if xs.shape[-1] != spec.n_mels:
        raise ConfigError(f"spectrogram has {xs.shape[-1]} mel bands, model expects {spec.n_mels}")
    layers, finals = [], []
    for layer in range(spec.enc_layers):
        outs = []
        for d in _directions(spec.enc_bidirectional):
            steps, final = run_layer(spec.cell, params.scope(f"enc/l{layer}/{d}"), xs, lengths,
                                     reverse=(d == "bwd"))
            outs.append(ad.stack(steps, axis=1))
            finals.append(final.h)
        xs = outs[0] if len(outs) == 1 else ad.concat(outs, axis=-1)
        layers.append(xs)
    return EncoderOutput(layers, ad.concat(finals, axis=-1))


def context_from_final(params: ParamSet, final_concat) -> Tensor:
    """tanh fully connected layer on the concatenated final encoder states."""
    return dense(params["fc/W"], params["fc/b"], final_concat, "tanh")


# ---------------------------------------------------------------------------
# decoder


def prepare_decoder_io(frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Teacher-forcing pair for one (T, n_mels) spectrogram.

    The target is the time-reversed input; the decoder input is the target
    delayed by one step with a zero frame in front.
    """
    frames = np.asarray(frames)
    target = frames[::-1].copy()
    dec_in = np.zeros_like(target)
    dec_in[1:] = target[:-1]
    return dec_in, target


def prepare_decoder_batch(frames: np.ndarray, lengths) -> tuple[np.ndarray, np.ndarray]:
    """Per-element :func:`prepare_decoder_io` on the valid part of a padded batch."""
    frames = np.asarray(frames)
    dec_in = np.zeros_like(frames)
    target = np.zeros_like(frames)
    for b, n in enumerate(np.asarray(lengths)):
        dec_in[b, :n], target[b, :n] = prepare_decoder_io(frames[b, :n])
    return dec_in, target


def decoder_initial_states(spec: ModelSpec, context: Tensor) -> dict[tuple[int, str], CellState]:
    """Split the context into ``units``-sized chunks, one per (layer, direction) slot."""
    chunks = ad.split(context, [spec.units] * (spec.context_dim // spec.units), axis=-1)
    states = {}
    for layer in range(spec.dec_layers):
        for k, d in enumerate(_directions(spec.dec_bidirectional)):
            h = chunks[(2 * layer + k) % len(chunks)]
            c = ad.Tensor(np.zeros(h.shape, h.dtype)) if spec.cell == "lstm" else None
            states[layer, d] = CellState(h, c)
    return states


def decode_and_project(params: ParamSet, spec: ModelSpec, context, decoder_input,
                       lengths=None) -> Tensor:
    """Teacher-forced decoder plus shared tanh output projection."""
    xs, lengths, single = _batch(decoder_input, lengths)
    context = ad.as_tensor(context)
    if context.value.ndim == 1:
        context = context[None]
    if context.shape[-1] != spec.context_dim:
        raise ConfigError(f"context dim {context.shape[-1]} != {spec.context_dim}")
    init = decoder_initial_states(spec, context)
    for layer in range(spec.dec_layers):
        outs = []
        for d in _directions(spec.dec_bidirectional):
            steps, _ = run_layer(spec.cell, params.scope(f"dec/l{layer}/{d}"), xs, lengths,
                                 reverse=(d == "bwd"), init=init[layer, d], context=context)
            outs.append(ad.stack(steps, axis=1))
        xs = outs[0] if len(outs) == 1 else ad.concat(outs, axis=-1)
    recon = dense(params["proj/W"], params["proj/b"], xs, "tanh")
    return recon[0] if single else recon


# ---------------------------------------------------------------------------
# loss


def reconstruction_mse(reconstruction, target, valid_length: int | None = None) -> Tensor:
    """Mean squared error over the first ``valid_length`` frames of one sequence."""
    reconstruction = ad.as_tensor(reconstruction)
    target = np.asarray(target)
    T = target.shape[0]
    n = T if valid_length is None else int(valid_length)
    if not 1 <= n <= T:
        raise ValueError(f"valid_length {valid_length} outside [1, {T}]")
    return masked_mse(reconstruction[None], target[None], np.array([n]))


def masked_mse(reconstruction: Tensor, target: np.ndarray, lengths) -> Tensor:
    """Mean over the batch of each element's MSE on its valid frames."""
    B, T, n_mels = target.shape
    lengths = np.asarray(lengths)
    dtype = reconstruction.dtype
    weights = (np.arange(T)[None, :] < lengths[:, None]) / (lengths[:, None] * n_mels * B)
    weights = np.broadcast_to(weights[:, :, None], target.shape).astype(dtype)
    diff = ad.sub(reconstruction, target.astype(dtype))
    return ad.sum(ad.mul(ad.square(diff), weights))


def forward(params: ParamSet, spec: ModelSpec, frames, lengths=None):
    """Full pass: returns (loss, reconstruction, target, context)."""
    xs, lengths, _ = _batch(frames, lengths)
    enc = encode_sequence(params, spec, xs, lengths)
    context = context_from_final(params, enc.final_concat)
    dec_in, target = prepare_decoder_batch(xs.value, lengths)
    recon = decode_and_project(params, spec, context, dec_in, lengths)
    return masked_mse(recon, target, lengths), recon, target, context


def loss(params: ParamSet, spec: ModelSpec, frames, lengths=None) -> Tensor:
    return forward(params, spec, frames, lengths)[0]
