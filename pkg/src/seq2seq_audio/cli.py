"""Command-line pipeline: synth -> spectrograms -> train -> extract -> fuse -> model.

Option precedence is command-line flag, then ``--config`` JSON file, then the
built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dsp
from .autoencoder import ConfigError, ModelSpec
from .dsp import SpectrogramConfig
from .features import FeatureTable, extract_features, fuse_tables, read_feature_csv, write_feature_csv
from .manifest import ManifestError, labels_for, read_manifest, resolve_wav
from .modeling import DEFAULT_C_GRID, DEFAULT_EPSILON, EvalReport, evaluate_feature_set
from .numerics import Checkpoint, CheckpointFormatError, TrainingDiverged
from .synth import gen_synthetic_dataset
from .training import TrainConfig, train_autoencoder

log = logging.getLogger("seq2seq_audio")

EXIT_ERROR = 1
EXIT_MISSING_FILE = 3
EXIT_MALFORMED = 4
EXIT_INCOMPATIBLE = 5
EXIT_DIVERGED = 6
EXIT_BAD_AUDIO = 7


# ---------------------------------------------------------------------------
# argument types


def parse_clip(text: str) -> float | None:
    if text.lower() == "none":
        return None
    value = float(text)
    if value not in dsp.CLIP_THRESHOLDS:
        raise argparse.ArgumentTypeError(f"clip threshold must be none or one of {dsp.CLIP_THRESHOLDS}")
    return value


def parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def parse_c_grid(text) -> tuple[float, ...]:
    """``1e-5..1`` expands to every power of ten in range; ``a,b,c`` is taken as is."""
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        if ".." in text:
            lo, hi = (float(v) for v in text.split(".."))
            a, b = math.log10(lo), math.log10(hi)
            if a != round(a) or b != round(b) or a > b:
                raise ValueError
            return tuple(10.0 ** k for k in range(int(round(a)), int(round(b)) + 1))
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad C grid {text!r}; use e.g. 1e-5..1 or 0.01,0.1") from None


DEFAULT_CHECKPOINTS = (20, 25, 30, 35, 40)


def default_checkpoints(epochs: int) -> tuple[int, ...]:
    """The standard schedule cut to ``epochs``, always ending with the final epoch."""
    kept = tuple(e for e in DEFAULT_CHECKPOINTS if e < epochs)
    return kept + (epochs,)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


# ---------------------------------------------------------------------------
# subcommands


def _spectrogram_job(args):
    path, iid, cfg, out = args
    spec = dsp.spectrogram_from_wav(path, iid, cfg)
    dsp.save_spectrogram(spec, out)
    return iid, spec.n_frames


def cmd_synth(args) -> int:
    rows = gen_synthetic_dataset(args.n, args.seed, args.out)
    info = json.loads((Path(args.out) / "synth_info.json").read_text())
    print(f"wrote {len(rows)} instances to {args.out} (rho(label, f0) = {info['rho_label_f0']:.3f})")
    return 0


def cmd_spectrograms(args) -> int:
    rows = read_manifest(args.manifest)
    cfg = SpectrogramConfig(args.window, args.overlap, args.mel_bands, args.clip_db)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for r in rows:
        wav = resolve_wav(r, args.manifest)
        if not wav.exists():
            raise FileNotFoundError(f"audio file not found: {wav}")
        jobs.append((wav, r.instance_id, cfg, out / f"{r.instance_id}.mels"))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            done = list(pool.map(_spectrogram_job, jobs))
    else:
        done = [_spectrogram_job(j) for j in jobs]
    print(f"wrote {len(done)} spectrograms to {out}")
    return 0


def load_spectrograms(rows, directory) -> list[dsp.Spectrogram]:
    directory = Path(directory)
    out = []
    for r in rows:
        path = directory / f"{r.instance_id}.mels"
        if not path.exists():
            raise FileNotFoundError(f"spectrogram not found: {path}")
        out.append(dsp.load_spectrogram(path))
    return out


def cmd_train(args) -> int:
    rows = read_manifest(args.manifest)
    if args.partitions:
        rows = [r for r in rows if r.partition in args.partitions]
    spectrograms = load_spectrograms(rows, args.spectrograms)
    if not spectrograms:
        raise ConfigError("no spectrograms selected for training")
    n_mels = spectrograms[0].frames.shape[1]
    spec = ModelSpec(cell=args.cell, enc_layers=args.layers, dec_layers=args.layers, units=args.units,
                     enc_bidirectional=args.bidirectional_encoder,
                     dec_bidirectional=args.bidirectional_decoder, n_mels=n_mels,
                     attention=args.attention, alignment_units=args.alignment_units)
    checkpoints = args.checkpoint_at
    if checkpoints is None:
        checkpoints = default_checkpoints(args.epochs)
    config = TrainConfig(batch_size=args.batch_size, max_epochs=args.epochs,
                         checkpoint_epochs=tuple(checkpoints), lr=args.lr, seed=args.seed)
    resume = Checkpoint.load(args.resume) if args.resume else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=1, sort_keys=True))
    saved = train_autoencoder(spec, spectrograms, config, out_dir=out, resume=resume)
    print(f"trained on {len(spectrograms)} spectrograms; wrote {len(saved)} checkpoints to {out}")
    return 0


def cmd_extract(args) -> int:
    rows = read_manifest(args.manifest)
    ckpt = Checkpoint.load(args.checkpoint)
    spectrograms = load_spectrograms(rows, args.spectrograms)
    table = extract_features(ckpt, spectrograms, args.tap, source=Path(args.checkpoint).name, jobs=args.jobs)
    write_feature_csv(table, args.out)
    print(f"wrote {len(table)} x {table.dim} features to {args.out}")
    return 0


def cmd_fuse(args) -> int:
    tables = [read_feature_csv(p) for p in args.inputs]
    fused = fuse_tables(tables)
    write_feature_csv(fused, args.out)
    print(f"fused {len(tables)} tables -> {fused.dim} dims in {args.out}")
    return 0


def _split(table: FeatureTable, rows, partition):
    labels = labels_for(rows, partition)
    ids = list(labels)
    if not ids:
        raise ManifestError(f"manifest has no {partition} instances")
    return table.rows(ids), np.array([labels[i] for i in ids])


def cmd_model(args) -> int:
    rows = read_manifest(args.manifest)
    report = EvalReport()
    for path in args.features:
        table = read_feature_csv(path)
        name = Path(path).stem
        splits = [_split(table, rows, p) for p in ("train", "devel", "test")]
        evaluate_feature_set(name, *splits[0], *splits[1], *splits[2], grid=args.c_grid,
                             epsilon=args.epsilon, report=report)
        C, rd, rt = report.best(name)
        print(f"{name}: dim {table.dim}, C = {C:g}, rho_devel = {rd:.3f}, rho_test = {rt:.3f}")
    report.to_csv(args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seq2seq-audio", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with option defaults")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic labelled tone corpus")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True)

    p = add("spectrograms", cmd_spectrograms, "extract clipped, normalised log-Mel spectrograms")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=float, default=0.04, help="window width in seconds")
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--mel-bands", type=_positive_int, default=128)
    p.add_argument("--clip-db", type=parse_clip, default=None, help="none|-40|-50|-60|-70")
    p.add_argument("--jobs", type=_positive_int, default=1)

    p = add("train", cmd_train, "train an autoencoder and write scheduled checkpoints")
    p.add_argument("--manifest", required=True)
    p.add_argument("--spectrograms", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--partitions", type=lambda s: tuple(s.split(",")), default=None,
                   help="comma-separated partitions to train on (default: all)")
    p.add_argument("--cell", choices=("gru", "lstm"), default="gru")
    p.add_argument("--units", type=_positive_int, default=256)
    p.add_argument("--layers", type=int, choices=(1, 2), default=2)
    p.add_argument("--bidirectional-encoder", action="store_true")
    p.add_argument("--bidirectional-decoder", action="store_true")
    p.add_argument("--attention", action="store_true")
    p.add_argument("--alignment-units", type=_positive_int, default=None)
    p.add_argument("--batch-size", type=_positive_int, default=256)
    p.add_argument("--epochs", type=_positive_int, default=40)
    p.add_argument("--checkpoint-at", type=parse_int_list, default=None,
                   help="comma-separated epochs (default: 20,25,30,35,40 up to --epochs)")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--resume", help="checkpoint to continue from")

    p = add("extract", cmd_extract, "extract features from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--spectrograms", required=True)
    p.add_argument("--tap", choices=("context", "fc_enc", "state_dec"), default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=_positive_int, default=1)

    p = add("fuse", cmd_fuse, "concatenate feature tables (early fusion)")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)

    p = add("model", cmd_model, "SVR complexity search on devel, report rho")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--c-grid", type=parse_c_grid, default=DEFAULT_C_GRID)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--out", required=True)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise FileNotFoundError(f"config file not found: {cfg_path}")
        overrides = json.loads(cfg_path.read_text())
        if not isinstance(overrides, dict):
            raise ConfigError("config file must hold a JSON object")
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = set(k.replace("-", "_") for k in overrides) - known
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        converted = {}
        for action in subparser._actions:
            for key in (action.dest, action.dest.replace("_", "-")):
                if key in overrides:
                    value = overrides[key]
                    if action.type is not None and isinstance(value, str):
                        value = action.type(value)
                    converted[action.dest] = value
        subparser.set_defaults(**converted)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (ConfigError, ValueError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (ManifestError, CheckpointFormatError, dsp.ContainerFormatError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except ConfigError as exc:
        print(f"error: incompatible configuration: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (dsp.InvalidInputError, dsp.TooShortError) as exc:
        print(f"error: bad audio: {exc}", file=sys.stderr)
        return EXIT_BAD_AUDIO
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
