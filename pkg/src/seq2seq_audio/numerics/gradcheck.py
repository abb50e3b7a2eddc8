"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Tensor
from .params import ParamSet


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(loss_fn: Callable[[ParamSet], Tensor], params: ParamSet,
                     perturbation: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences ``(f(p+h) - f(p-h)) / 2h``, one element at a time."""
    out = {}
    for name, t in params.items():
        g = np.zeros_like(t.value, dtype=np.float64)
        flat = t.value.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + perturbation
            fp = float(loss_fn(params).value)
            flat[k] = orig - perturbation
            fm = float(loss_fn(params).value)
            flat[k] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"non-finite loss while perturbing {name}[{k}]")
            g.reshape(-1)[k] = (fp - fm) / (2 * perturbation)
        out[name] = g
    return out


def analytic_gradient(loss_fn: Callable[[ParamSet], Tensor], params: ParamSet) -> dict[str, np.ndarray]:
    params.zero_grad()
    loss = loss_fn(params)
    if not np.isfinite(loss.value):
        raise FloatingPointError("non-finite loss")
    if loss.requires_grad:
        loss.backward()
    grads = params.grads()
    params.zero_grad()
    return grads


def grad_check(loss_fn: Callable[[ParamSet], Tensor], params: ParamSet,
               perturbation: float = 1e-5, return_details: bool = False):
    """Maximum elementwise relative error between backprop and central differences.

    ``params`` should hold 64-bit arrays; they are perturbed in place and
    restored afterwards.
    """
    analytic = analytic_gradient(loss_fn, params)
    numeric = numeric_gradient(loss_fn, params, perturbation)
    errors = {k: relative_error(analytic[k], numeric[k]) for k in analytic}
    worst = max((float(e.max()) for e in errors.values() if e.size), default=0.0)
    if return_details:
        return worst, {"analytic": analytic, "numeric": numeric, "errors": errors}
    return worst
