"""Dispatch between the two autoencoder families."""

from __future__ import annotations

import numpy as np

from . import attention, autoencoder
from .autoencoder import ConfigError, ModelSpec
from .numerics import Checkpoint, ParamSet

TAPS = ("context", "fc_enc", "state_dec")


def init_params(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> ParamSet:
    mod = attention if spec.attention else autoencoder
    return mod.init_params(spec, seed, dtype)


def loss(params: ParamSet, spec: ModelSpec, frames, lengths=None):
    mod = attention if spec.attention else autoencoder
    return mod.loss(params, spec, frames, lengths)


def default_tap(spec: ModelSpec) -> str:
    return "state_dec" if spec.attention else "context"


def check_tap(spec: ModelSpec, tap: str) -> None:
    allowed = attention.TAPS if spec.attention else ("context",)
    if tap not in allowed:
        kind = "attention" if spec.attention else "non-attention"
        raise ConfigError(f"tap {tap!r} not available for a {kind} model; choose from {allowed}")


def tap_dim(spec: ModelSpec, tap: str) -> int:
    check_tap(spec, tap)
    return spec.units if spec.attention else spec.context_dim


def batch_features(params: ParamSet, spec: ModelSpec, frames, lengths, tap: str) -> np.ndarray:
    check_tap(spec, tap)
    if spec.attention:
        return attention.batch_features(params, spec, frames, lengths, tap)
    _, _, _, context = autoencoder.forward(params, spec, frames, lengths)
    return context.value


def params_from_checkpoint(checkpoint: Checkpoint) -> tuple[ModelSpec, ParamSet]:
    spec = ModelSpec.from_dict(checkpoint.spec)
    expected = init_params(spec, 0)
    if set(expected.names()) != set(checkpoint.params):
        raise ConfigError("checkpoint parameters do not match its architecture")
    params = ParamSet({k: checkpoint.params[k] for k in expected.names()}, dtype=np.float32)
    for k in expected.names():
        if params[k].shape != expected[k].shape:
            raise ConfigError(f"parameter {k!r} has shape {params[k].shape}, expected {expected[k].shape}")
    return spec, params
