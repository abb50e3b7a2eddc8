"""Adam with bias correction and global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamSet


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float | None = 2.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads, norm
    scale = max_norm / norm
    return {k: g * np.asarray(scale, dtype=g.dtype) for k, g in grads.items()}, norm


def adam_step(state: AdamState, params: ParamSet, grads: dict[str, np.ndarray] | None = None) -> float:
    """Apply one Adam update in place and return the pre-clip gradient norm.

    ``grads`` defaults to the ``.grad`` slots of ``params``. Raises
    :class:`TrainingDiverged` on any non-finite gradient.
    """
    if grads is None:
        grads = params.grads()
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient for {name!r} at step {state.step + 1}")
    if state.clip_norm is not None:
        grads, norm = clip_by_global_norm(grads, state.clip_norm)
    else:
        norm = global_norm(grads)

    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        v = state.v[name]
        dt = p.value.dtype
        m *= dt.type(state.beta1)
        m += dt.type(1.0 - state.beta1) * g
        v *= dt.type(state.beta2)
        v += dt.type(1.0 - state.beta2) * (g * g)
        m_hat = m / dt.type(c1)
        v_hat = v / dt.type(c2)
        p.value = p.value - dt.type(state.lr) * m_hat / (np.sqrt(v_hat) + dt.type(state.epsilon))
    return norm
