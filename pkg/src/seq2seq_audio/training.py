"""Mini-batch Adam training of the autoencoders with scheduled checkpoints."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import model
from .autoencoder import ConfigError, ModelSpec
from .numerics import AdamState, Checkpoint, ParamSet, TrainingDiverged, adam_step, make_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    max_epochs: int = 40
    checkpoint_epochs: tuple[int, ...] = (20, 25, 30, 35, 40)
    lr: float = 1e-4
    seed: int = 0
    clip_norm: float | None = 2.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be at least 1")
        bad = [e for e in self.checkpoint_epochs if not 1 <= e <= self.max_epochs]
        if bad:
            raise ConfigError(f"checkpoint epochs {bad} outside [1, {self.max_epochs}]")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")


class Batch(NamedTuple):
    frames: np.ndarray      # (B, T_max, n_mels), zero padded
    lengths: np.ndarray     # (B,)


def _frames(item) -> np.ndarray:
    return np.asarray(getattr(item, "frames", item), dtype=np.float32)


def pad_batch(spectrograms: Sequence) -> Batch:
    """Zero-pad spectrograms (or raw (T, n_mels) arrays) to the longest one."""
    if len(spectrograms) == 0:
        raise ValueError("cannot batch an empty list")
    arrays = [_frames(s) for s in spectrograms]
    n_mels = {a.shape[1] for a in arrays}
    if len(n_mels) != 1:
        raise ConfigError(f"mixed mel band counts in one batch: {sorted(n_mels)}")
    lengths = np.array([a.shape[0] for a in arrays])
    out = np.zeros((len(arrays), lengths.max(), n_mels.pop()), dtype=np.float32)
    for i, a in enumerate(arrays):
        out[i, :a.shape[0]] = a
    return Batch(out, lengths)


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Shuffle for one epoch, seeded by ``seed XOR epoch``."""
    return make_rng(int(seed) ^ int(epoch)).permutation(n)


def write_loss_log(rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "loss"])
        for epoch, step, value in rows:
            writer.writerow([epoch, step, repr(value)])
    return path


def checkpoint_path(out_dir, epoch: int) -> Path:
    return Path(out_dir) / f"ckpt_e{epoch}.s2sc"


def make_checkpoint(spec: ModelSpec, params: ParamSet, opt: AdamState, epoch: int,
                    config: TrainConfig) -> Checkpoint:
    return Checkpoint(
        spec=spec.to_dict(),
        params={k: v.copy() for k, v in params.arrays().items()},
        epoch=epoch,
        seed=config.seed,
        state={"adam_step": opt.step, "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2,
               "epsilon": opt.epsilon, "clip_norm": opt.clip_norm, "batch_size": config.batch_size},
        opt_m={k: v.copy() for k, v in opt.m.items()},
        opt_v={k: v.copy() for k, v in opt.v.items()},
    )


def train_autoencoder(spec: ModelSpec, spectrograms: Sequence, config: TrainConfig = TrainConfig(), *,
                      out_dir=None, resume: Checkpoint | None = None,
                      on_epoch: Callable[[int, float], None] | None = None) -> list[Checkpoint]:
    """Train on all given spectrograms and return the scheduled checkpoints.

    Training is a pure function of ``(spec, spectrograms order, config)``.
    With ``resume`` the run continues after the checkpoint's epoch using its
    parameters and optimizer moments. When ``out_dir`` is set, checkpoints
    are written as ``ckpt_e{epoch}.s2sc`` next to a ``loss.csv`` log.
    """
    data = [_frames(s) for s in spectrograms]
    if not data:
        raise ValueError("training set is empty")
    if {a.shape[1] for a in data} != {spec.n_mels}:
        raise ConfigError(f"spectrograms do not all have {spec.n_mels} mel bands")

    opt = AdamState(lr=config.lr, clip_norm=config.clip_norm)
    if resume is None:
        params = model.init_params(spec, config.seed)
        start = 0
    else:
        if ModelSpec.from_dict(resume.spec) != spec:
            raise ConfigError("resume checkpoint has a different architecture")
        _, params = model.params_from_checkpoint(resume)
        opt.step = int(resume.state.get("adam_step", 0))
        opt.m = {k: v.copy() for k, v in resume.opt_m.items()}
        opt.v = {k: v.copy() for k, v in resume.opt_v.items()}
        start = resume.epoch

    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)

    rows: list[tuple[int, int, float]] = []
    checkpoints: list[Checkpoint] = []
    n = len(data)
    for epoch in range(start + 1, config.max_epochs + 1):
        order = epoch_order(n, config.seed, epoch)
        losses = []
        for lo in range(0, n, config.batch_size):
            batch = pad_batch([data[i] for i in order[lo:lo + config.batch_size]])
            params.zero_grad()
            value = model.loss(params, spec, batch.frames, batch.lengths)
            current = float(value.value)
            if not np.isfinite(current):
                raise TrainingDiverged(f"loss became {current} at epoch {epoch}, step {opt.step + 1}")
            value.backward()
            adam_step(opt, params)
            rows.append((epoch, opt.step, current))
            losses.append(current)
        mean_loss = float(np.mean(losses))
        log.info("epoch %d: mean loss %.6g", epoch, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
        if epoch in config.checkpoint_epochs:
            ckpt = make_checkpoint(spec, params, opt, epoch, config)
            checkpoints.append(ckpt)
            if out_dir is not None:
                ckpt.save(checkpoint_path(out_dir, epoch))
    if out_dir is not None:
        write_loss_log(rows, Path(out_dir) / "loss.csv")
    params.zero_grad()
    return checkpoints
