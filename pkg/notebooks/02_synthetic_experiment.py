# %% [markdown]
# # A small end-to-end experiment
#
# Synthetic tones carry a label that rises with their pitch. If the
# autoencoder keeps pitch information, a linear SVR on its features should
# rank the held-out tones well. This is a reduced version of the acceptance
# run (fewer instances, units and epochs) that finishes in under a minute.

# %%
import tempfile
from pathlib import Path

import numpy as np

from seq2seq_audio import ModelSpec, SpectrogramConfig, TrainConfig, extract_features, train_autoencoder
from seq2seq_audio.dsp import spectrogram_from_wav
from seq2seq_audio.manifest import labels_for
from seq2seq_audio.modeling import evaluate_feature_set
from seq2seq_audio.synth import gen_synthetic_dataset

root = Path(tempfile.mkdtemp())
rows = gen_synthetic_dataset(60, seed=3, out_dir=root)
print(len(rows), "instances;", {p: sum(r.partition == p for r in rows) for p in ("train", "devel", "test")})

# %% [markdown]
# ## Spectrograms and training
#
# The autoencoder trains on every partition, since reconstruction uses no
# labels. Checkpoints are pure functions of the seed and data order.

# %%
cfg = SpectrogramConfig(0.04, 0.5, 40, -60.0)
spectrograms = [spectrogram_from_wav(root / r.wav_path, r.instance_id, cfg) for r in rows]
spec = ModelSpec("gru", 1, 1, 16, True, False, n_mels=40, attention=True)
losses = []
checkpoints = train_autoencoder(spec, spectrograms,
                                TrainConfig(batch_size=16, max_epochs=8, checkpoint_epochs=(8,), lr=1e-3, seed=0),
                                on_epoch=lambda epoch, loss: losses.append(loss))
print("mean loss per epoch:", np.round(losses, 4))

# %% [markdown]
# ## Features and the complexity search
#
# C is chosen on the development partition; the test score is read off at
# that C.

# %%
table = extract_features(checkpoints[-1], spectrograms, "state_dec")
splits = []
for part in ("train", "devel", "test"):
    labels = labels_for(rows, part)
    splits += [table.rows(list(labels)), np.array(list(labels.values()))]
report = evaluate_feature_set("state_dec", *splits)
C, rho_devel, rho_test = report.best("state_dec")
print(f"C = {C:g}: rho_devel = {rho_devel:.3f}, rho_test = {rho_test:.3f}")
