"""Named parameter containers, initialisation and dense layers."""

from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator backed by Philox-4x64 (counter-based, Random123 constants).

    The integer seed goes through numpy's ``SeedSequence`` hashing, so the
    stream is identical across runs and platforms for a given seed.
    """
    return np.random.Generator(np.random.Philox(int(seed)))


def glorot_init(shape, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Glorot-uniform tensor; a vector uses its length as both fans."""
    shape = tuple(int(n) for n in shape)
    if not shape or any(n < 1 for n in shape):
        raise ValueError(f"glorot_init needs positive dimensions, got {shape}")
    fan_out = shape[0]
    fan_in = shape[1] if len(shape) > 1 else shape[0]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class ParamSet:
    """Ordered mapping of parameter names to trainable tensors.

    Names follow ``"<block>/<layer>/<direction>/<symbol>"``; :meth:`scope`
    returns the symbols under one prefix as a plain dict.
    """

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None, dtype=None):
        self._tensors: dict[str, Tensor] = {}
        for name, value in (arrays or {}).items():
            self.add(name, value, dtype=dtype)

    def add(self, name: str, value, dtype=None) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=dtype if dtype is not None else np.asarray(value).dtype)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"parameter {name!r} has non-finite values")
        t = Tensor(arr, requires_grad=True)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def names(self) -> list[str]:
        return list(self._tensors)

    def scope(self, prefix: str) -> dict[str, Tensor]:
        prefix = prefix.rstrip("/") + "/"
        return {k[len(prefix):]: t for k, t in self._tensors.items()
                if k.startswith(prefix) and "/" not in k[len(prefix):]}

    def set_value(self, name: str, value) -> None:
        t = self._tensors[name]
        value = np.asarray(value, dtype=t.value.dtype)
        if value.shape != t.value.shape:
            raise ValueError(f"shape of {name!r} is fixed at {t.value.shape}, got {value.shape}")
        t.value = value.copy()

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.value for k, t in self._tensors.items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.value))
                for k, t in self._tensors.items()}

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def astype(self, dtype) -> "ParamSet":
        return ParamSet({k: t.value for k, t in self._tensors.items()}, dtype=dtype)

    def copy(self) -> "ParamSet":
        return ParamSet({k: t.value for k, t in self._tensors.items()})

    def num_values(self) -> int:
        return int(sum(t.value.size for t in self._tensors.values()))


_ACTIVATIONS = {"tanh": ad.tanh, "sigmoid": ad.sigmoid, "identity": ad.identity}


def dense(W, b, x, activation: str = "tanh") -> Tensor:
    """``activation(W x + b)`` applied along the last axis of ``x``."""
    try:
        act = _ACTIVATIONS[activation]
    except KeyError:
        raise ValueError(f"unknown activation {activation!r}") from None
    W, b, x = ad.as_tensor(W), ad.as_tensor(b), ad.as_tensor(x)
    if W.shape[1] != x.shape[-1] or b.shape != (W.shape[0],):
        raise ValueError(f"dense shapes do not match: W{W.shape}, b{b.shape}, x{x.shape}")
    return act(ad.add(ad.linear(x, W), b))
