# %% [markdown]
# # From waveform to features
#
# This notebook walks one synthetic tone through the front end and both
# autoencoder families. Everything runs on a laptop CPU in a few seconds.

# %%
import numpy as np

from seq2seq_audio import attention, autoencoder, model
from seq2seq_audio.autoencoder import ModelSpec
from seq2seq_audio.dsp import CLIP_THRESHOLDS, SpectrogramConfig, compute_spectrogram
from seq2seq_audio.numerics import make_rng
from seq2seq_audio.synth import tone

rng = make_rng(0)
x = tone(220.0, rng)
print(x.shape, x.dtype)

# %% [markdown]
# ## Spectrograms at every clip threshold
#
# A 40 ms Hamming window with 50 % overlap gives 49 frames per second.
# Values below the clip threshold are raised to it before scaling to
# [-1, 1], so stronger clipping flattens more of the background.

# %%
for clip in (None, *CLIP_THRESHOLDS):
    spec = compute_spectrogram("tone", x, 16000, SpectrogramConfig(0.04, 0.5, 64, clip))
    floor = np.mean(spec.frames == -1.0)
    print(f"clip {clip!s:>6}: shape {spec.frames.shape}, share of bins at -1: {floor:.2f}")

# %% [markdown]
# ## Teacher forcing
#
# The decoder reconstructs the sequence in reverse. Its input at step t is
# the target at step t - 1, with a zero frame at the start.

# %%
frames = np.arange(1.0, 5.0)[:, None]
dec_in, target = autoencoder.prepare_decoder_io(frames)
print("target       ", target[:, 0])
print("decoder input", dec_in[:, 0])

# %% [markdown]
# ## Feature sizes
#
# The non-attention context concatenates the final hidden and cell states of
# every encoder layer. The attention model exposes vectors of the unit size.

# %%
plain = ModelSpec("lstm", 2, 2, 256, True, False, n_mels=128)
att = ModelSpec("lstm", 2, 2, 512, True, False, n_mels=128, attention=True)
print("non-attention context:", plain.context_dim)
print("attention state_dec:  ", model.tap_dim(att, "state_dec"))

# %% [markdown]
# ## Attention weights of an untrained model
#
# Each decoder step spreads one unit of weight over the encoder frames.

# %%
small = ModelSpec("gru", 1, 1, 8, True, False, n_mels=16, attention=True)
params = model.init_params(small, 0)
spec = compute_spectrogram("tone", x[:4000], 16000, SpectrogramConfig(0.04, 0.5, 16, -60.0))
_, out, _ = attention.forward(params, small, spec.frames[None], [spec.n_frames])
alphas = out.trace.alphas[0]
print(alphas.shape, alphas.sum(axis=1).round(6))
