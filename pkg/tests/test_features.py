"""Feature extraction, fusion and CSV storage."""

import numpy as np
import pytest

from seq2seq_audio import features as ft
from seq2seq_audio import model
from seq2seq_audio.autoencoder import ConfigError, ModelSpec
from seq2seq_audio.dsp import Spectrogram, SpectrogramConfig
from seq2seq_audio.features import FeatureTable, Segment
from seq2seq_audio.numerics import AdamState
from seq2seq_audio.training import TrainConfig, make_checkpoint


def _checkpoint(attention=False, n_mels=3):
    spec = ModelSpec("gru", 1, 1, 4, True, False, n_mels, attention=attention)
    return make_checkpoint(spec, model.init_params(spec, 0), AdamState(), 1,
                           TrainConfig(max_epochs=1, checkpoint_epochs=(1,)))


def _spectrograms(n=4, n_mels=3):
    rng = np.random.default_rng(0)
    cfg = SpectrogramConfig(0.04, 0.5, n_mels)
    return [Spectrogram(f"i{k}", rng.uniform(-1, 1, (k + 2, n_mels)).astype(np.float32), cfg)
            for k in range(n)]


def test_extract_dims_and_order():
    specs = _spectrograms()
    table = ft.extract_features(_checkpoint(), specs)
    assert table.instance_ids == ["i0", "i1", "i2", "i3"]
    assert table.dim == 8 and table.vectors.dtype == np.float32
    att = ft.extract_features(_checkpoint(attention=True), specs, "fc_enc")
    assert att.dim == 4 and att.provenance[0].tap == "fc_enc"


def test_row_depends_only_on_its_instance():
    specs = _spectrograms()
    ckpt = _checkpoint()
    full = ft.extract_features(ckpt, specs)
    one = ft.extract_features(ckpt, specs[2:3])
    np.testing.assert_array_equal(full.vectors[2], one.vectors[0])


def test_parallel_extraction_matches_serial():
    specs = _spectrograms(5)
    ckpt = _checkpoint(attention=True)
    np.testing.assert_array_equal(ft.extract_features(ckpt, specs, jobs=2).vectors,
                                  ft.extract_features(ckpt, specs).vectors)


def test_extract_rejects_mismatch():
    with pytest.raises(ConfigError):
        ft.extract_features(_checkpoint(n_mels=4), _spectrograms())
    with pytest.raises(ConfigError):
        ft.extract_features(_checkpoint(), _spectrograms(), "state_dec")


def _table(ids, dim, value, source="s"):
    return FeatureTable(ids, np.full((len(ids), dim), value), [Segment(source, "context", {}, 0, dim)])


def test_fusion_concatenates_in_order():
    ids = ["a", "b"]
    fused = ft.fuse_tables([_table(ids, 2, 1.0, "x"), _table(ids, 3, 2.0, "y")])
    assert fused.dim == 5
    np.testing.assert_array_equal(fused.vectors[0], [1, 1, 2, 2, 2])
    assert [(s.source, s.start, s.stop) for s in fused.provenance] == [("x", 0, 2), ("y", 2, 5)]
    with pytest.raises(ValueError):
        ft.fuse_tables([_table(ids, 2, 1.0), _table(["b", "a"], 2, 1.0)])
    with pytest.raises(ValueError):
        ft.fuse_tables([])


def test_clip_variants_fuse_in_ascending_threshold_order():
    ids = ["a"]
    fused = ft.fuse_clip_variants({-40.0: _table(ids, 1, 4.0), -70.0: _table(ids, 1, 1.0),
                                   -50.0: _table(ids, 1, 3.0), -60.0: _table(ids, 1, 2.0)})
    np.testing.assert_array_equal(fused.vectors[0], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        ft.fuse_clip_variants({-30.0: _table(ids, 1, 0.0)})


def test_table_validation_and_row_lookup():
    with pytest.raises(ValueError):
        FeatureTable(["a", "a"], np.zeros((2, 1)))
    with pytest.raises(ValueError):
        FeatureTable(["a"], np.zeros((1, 3)), [Segment("s", "t", {}, 0, 2)])
    t = FeatureTable(["a", "b"], np.array([[1.0], [2.0]]))
    np.testing.assert_array_equal(t.rows(["b", "a"]), [[2.0], [1.0]])
    with pytest.raises(KeyError):
        t.rows(["c"])


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(3)
    t = FeatureTable(["x", "y", "z"], rng.normal(size=(3, 4)).astype(np.float32),
                     [Segment("ck", "context", {"n_mels": 3}, 0, 4)])
    path = ft.write_feature_csv(t, tmp_path / "f.csv")
    back = ft.read_feature_csv(path)
    assert back.instance_ids == t.instance_ids and back.provenance == t.provenance
    np.testing.assert_array_equal(back.vectors, t.vectors)
    assert path.read_text().splitlines()[0] == "instance_id,f0,f1,f2,f3"
    with pytest.raises(FileNotFoundError):
        ft.read_feature_csv(tmp_path / "missing.csv")
