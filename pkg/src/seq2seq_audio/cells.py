"""Recurrent cells: GRU, peephole LSTM and the context-conditioned LSTM.

Each cell is split into an input projection (``W x + b``, plus ``C c`` for
the context LSTM) and a recurrent update. The step functions compose the two;
:func:`run_layer` hoists the input projection out of the time loop so a whole
sequence is projected with one matrix product per gate.

Context-LSTM gates, with ``c`` the context vector and ``s`` the cell state::

    z_t = tanh(W_z x_t + R_z h_{t-1} + C_z c + b_z)
    i_t = sigmoid(W_i x_t + R_i h_{t-1} + C_i c + p_i * s_{t-1} + b_i)
    f_t = sigmoid(W_f x_t + R_f h_{t-1} + C_f c + p_f * s_{t-1} + b_f)
    s_t = f_t * s_{t-1} + i_t * z_t
    o_t = sigmoid(W_o x_t + R_o h_{t-1} + C_o c + p_o * s_t + b_o)
    h_t = o_t * tanh(s_t)

The output-gate peephole reads the updated cell state ``s_t``.
"""

from __future__ import annotations

from typing import Mapping, NamedTuple

import numpy as np

from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.params import ParamSet, glorot_init

GRU_GATES = ("z", "r", "h")
LSTM_GATES = ("z", "i", "f", "o")


class CellState(NamedTuple):
    h: Tensor
    c: Tensor | None = None


def _t(x) -> Tensor:
    return ad.as_tensor(x)


def _check_input(p: Mapping, x: Tensor, gate: str = "z") -> None:
    W = p[f"W_{gate}"]
    if W.shape[1] != x.shape[-1]:
        raise ValueError(f"input dim {x.shape[-1]} does not match W_{gate} {W.shape}")


# ---------------------------------------------------------------------------
# parameter construction


def init_gru(params: ParamSet, prefix: str, input_dim: int, units: int,
             rng: np.random.Generator, dtype=np.float32) -> None:
    for g in GRU_GATES:
        params.add(f"{prefix}/W_{g}", glorot_init((units, input_dim), rng, dtype))
        params.add(f"{prefix}/R_{g}", glorot_init((units, units), rng, dtype))
        params.add(f"{prefix}/b_{g}", np.zeros(units, dtype))


def init_lstm(params: ParamSet, prefix: str, input_dim: int, units: int,
              rng: np.random.Generator, context_dim: int = 0, dtype=np.float32) -> None:
    for g in LSTM_GATES:
        params.add(f"{prefix}/W_{g}", glorot_init((units, input_dim), rng, dtype))
        params.add(f"{prefix}/R_{g}", glorot_init((units, units), rng, dtype))
        if context_dim:
            params.add(f"{prefix}/C_{g}", glorot_init((units, context_dim), rng, dtype))
    for g in ("i", "f", "o"):
        params.add(f"{prefix}/p_{g}", np.zeros(units, dtype))
    for g in LSTM_GATES:
        params.add(f"{prefix}/b_{g}", np.full(units, 1.0 if g == "f" else 0.0, dtype))


# ---------------------------------------------------------------------------
# GRU


def gru_input_projection(p: Mapping, x) -> dict[str, Tensor]:
    x = _t(x)
    _check_input(p, x)
    return {g: ad.add(ad.linear(x, p[f"W_{g}"]), p[f"b_{g}"]) for g in GRU_GATES}


def gru_recurrent(p: Mapping, proj: Mapping[str, Tensor], h_prev) -> Tensor:
    h_prev = _t(h_prev)
    z = ad.sigmoid(ad.add(proj["z"], ad.linear(h_prev, p["R_z"])))
    r = ad.sigmoid(ad.add(proj["r"], ad.linear(h_prev, p["R_r"])))
    cand = ad.tanh(ad.add(proj["h"], ad.linear(ad.mul(r, h_prev), p["R_h"])))
    # (1 - z) * h_prev + z * cand
    return ad.add(h_prev, ad.mul(z, ad.sub(cand, h_prev)))


def gru_step(p: Mapping, x_t, h_prev) -> Tensor:
    """One GRU step with the reset gate applied before the candidate's recurrent product."""
    return gru_recurrent(p, gru_input_projection(p, x_t), h_prev)


# ---------------------------------------------------------------------------
# LSTM family


def lstm_input_projection(p: Mapping, x, context=None) -> dict[str, Tensor]:
    x = _t(x)
    _check_input(p, x)
    proj = {g: ad.add(ad.linear(x, p[f"W_{g}"]), p[f"b_{g}"]) for g in LSTM_GATES}
    if context is not None:
        context = _t(context)
        if p["C_z"].shape[1] != context.shape[-1]:
            raise ValueError(f"context dim {context.shape[-1]} does not match C_z {p['C_z'].shape}")
        for g in LSTM_GATES:
            cc = ad.linear(context, p[f"C_{g}"])
            if cc.value.ndim < proj[g].value.ndim:
                cc = cc[:, None, :]
            proj[g] = ad.add(proj[g], cc)
    return proj


def lstm_recurrent(p: Mapping, proj: Mapping[str, Tensor], state: CellState) -> CellState:
    h_prev, c_prev = _t(state.h), _t(state.c)
    z = ad.tanh(ad.add(proj["z"], ad.linear(h_prev, p["R_z"])))
    i = ad.sigmoid(ad.add(ad.add(proj["i"], ad.linear(h_prev, p["R_i"])), ad.mul(p["p_i"], c_prev)))
    f = ad.sigmoid(ad.add(ad.add(proj["f"], ad.linear(h_prev, p["R_f"])), ad.mul(p["p_f"], c_prev)))
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, z))
    o = ad.sigmoid(ad.add(ad.add(proj["o"], ad.linear(h_prev, p["R_o"])), ad.mul(p["p_o"], c)))
    return CellState(ad.mul(o, ad.tanh(c)), c)


def lstm_step(p: Mapping, x_t, state: CellState) -> CellState:
    """Peephole LSTM step (the context LSTM with every context term removed)."""
    return lstm_recurrent(p, lstm_input_projection(p, x_t), state)


def context_lstm_step(p: Mapping, x_t, state: CellState, context) -> CellState:
    """LSTM step whose four gates also read a context vector through ``C_*``."""
    return lstm_recurrent(p, lstm_input_projection(p, x_t, context), state)


# ---------------------------------------------------------------------------
# sequences


def zero_state(cell: str, batch: int, units: int, dtype) -> CellState:
    h = ad.Tensor(np.zeros((batch, units), dtype))
    return CellState(h, ad.Tensor(np.zeros((batch, units), dtype)) if cell == "lstm" else None)


def run_layer(cell: str, p: Mapping, xs: Tensor, lengths: np.ndarray, *,
              reverse: bool = False, init: CellState | None = None,
              context: Tensor | None = None) -> tuple[list[Tensor], CellState]:
    """Run one recurrent direction over a padded batch.

    ``xs`` is (B, T, in). Steps at ``t >= lengths[b]`` leave the state of
    element ``b`` untouched, so a forward pass ends on each element's true
    last frame and a reverse pass starts from it. ``context`` is (B, ctx)
    for a fixed context or (B, T, ctx) for one per step; GRUs receive it
    concatenated to their input, LSTMs through the ``C_*`` gate terms.

    Returns per-step hidden outputs in time order and the final state.
    """
    B, T = xs.shape[0], xs.shape[1]
    units = p["R_z"].shape[0]
    lengths = np.asarray(lengths)
    if init is None:
        init = zero_state(cell, B, units, xs.dtype)

    if cell == "gru":
        if context is not None:
            ctx = context if context.value.ndim == 3 else ad.broadcast_to(
                context[:, None, :], (B, T, context.shape[-1]))
            xs = ad.concat([xs, ctx], axis=-1)
        proj = gru_input_projection(p, xs)
    elif cell == "lstm":
        proj = lstm_input_projection(p, xs, context)
    else:
        raise ValueError(f"unknown cell type {cell!r}")

    full = bool(np.all(lengths >= T))
    state = init
    outputs: list[Tensor | None] = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        proj_t = {g: v[:, t, :] for g, v in proj.items()}
        if cell == "gru":
            new = CellState(gru_recurrent(p, proj_t, state.h))
        else:
            new = lstm_recurrent(p, proj_t, state)
        if not full:
            valid = (t < lengths)[:, None]
            new = CellState(ad.where(valid, new.h, state.h),
                            None if new.c is None else ad.where(valid, new.c, state.c))
        state = new
        outputs[t] = state.h
    return outputs, state
