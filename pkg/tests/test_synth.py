"""Synthetic corpus and manifest handling."""

import json

import numpy as np
import pytest

from seq2seq_audio import dsp
from seq2seq_audio.manifest import (
    ManifestError,
    ManifestRow,
    labels_for,
    read_manifest,
    resolve_wav,
    write_manifest,
)
from seq2seq_audio.synth import gen_synthetic_dataset


def test_synth_corpus(tmp_path):
    rows = gen_synthetic_dataset(40, 3, tmp_path)
    assert len(rows) == 40
    assert {r.partition for r in rows} == {"train", "devel", "test"}
    assert sum(r.partition == "train" for r in rows) == 16
    assert all(1.0 <= r.label <= 9.0 for r in rows)
    assert read_manifest(tmp_path / "manifest.csv") == rows
    info = json.loads((tmp_path / "synth_info.json").read_text())
    assert info["rho_label_f0"] > 0.95
    x, rate = dsp.read_wav(resolve_wav(rows[0], tmp_path / "manifest.csv"))
    assert rate == 16000 and x.size == 16000 and np.abs(x).max() <= 1


def test_synth_is_deterministic(tmp_path):
    gen_synthetic_dataset(12, 9, tmp_path / "a")
    gen_synthetic_dataset(12, 9, tmp_path / "b")
    for name in ("manifest.csv", "synth_info.json", "wav/synth_0005.wav"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    with pytest.raises(ValueError):
        gen_synthetic_dataset(5, 0, tmp_path / "c")


def test_manifest_round_trip_and_labels(tmp_path):
    rows = [ManifestRow("a", "a.wav", "train", 2.5), ManifestRow("b", "/abs/b.wav", "test", None)]
    path = write_manifest(rows, tmp_path / "m.csv")
    assert read_manifest(path) == rows
    assert labels_for(rows, "train") == {"a": 2.5}
    with pytest.raises(ManifestError):
        labels_for(rows, "test")
    assert str(resolve_wav(rows[1], path)) == "/abs/b.wav"
    assert resolve_wav(rows[0], path) == tmp_path / "a.wav"


@pytest.mark.parametrize("body", [
    "instance_id,wav_path\na,a.wav\n",
    "instance_id,wav_path,partition,label\na,a.wav,dev,3\n",
    "instance_id,wav_path,partition,label\na,a.wav,train,ten\n",
    "instance_id,wav_path,partition,label\na,a.wav,train,12\n",
    "instance_id,wav_path,partition,label\na,a.wav,train,3\na,b.wav,test,4\n",
])
def test_malformed_manifests(tmp_path, body):
    path = tmp_path / "m.csv"
    path.write_text(body)
    with pytest.raises(ManifestError):
        read_manifest(path)


def test_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_manifest(tmp_path / "nope.csv")
