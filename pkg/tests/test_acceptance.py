"""Acceptance suite: one test per criterion, each reporting PASS or FAIL.

Run ``pytest tests/test_acceptance.py -v`` and read the summary section
at the end; every criterion is checked at its stated tolerance.
"""

import itertools
import time

import numpy as np
import pytest

from conftest import record
from oracles import brute_force_ranks, brute_force_spearman, objective_gap, standardize, svr_qp
from seq2seq_audio import attention as att
from seq2seq_audio import autoencoder as ae
from seq2seq_audio import cells, cli, features, model, modeling
from seq2seq_audio.autoencoder import ModelSpec
from seq2seq_audio.dsp import Spectrogram, SpectrogramConfig, compute_spectrogram
from seq2seq_audio.modeling import EvalReport, primal_objective, spearman_rho, svr_fit
from seq2seq_audio.numerics import AdamState, ParamSet, adam_step, grad_check, make_rng
from seq2seq_audio.numerics import autodiff as ad
from seq2seq_audio.numerics.gradcheck import analytic_gradient
from seq2seq_audio.synth import tone
from seq2seq_audio.training import TrainConfig, make_checkpoint

# ---------------------------------------------------------------------------
# 1. gradient suite


def _step_case(kind, seed, units=3, n_in=2, batch=2, ctx_dim=2):
    """One cell step with every parameter, input and state drawn from N(0, 1)."""
    rng = np.random.default_rng(seed)
    ps = ParamSet()
    if kind == "gru":
        cells.init_gru(ps, "c", n_in, units, rng, dtype=np.float64)
    else:
        cells.init_lstm(ps, "c", n_in, units, rng, context_dim=ctx_dim if kind == "context" else 0,
                        dtype=np.float64)
    for name, t in list(ps.items()):
        ps.set_value(name, rng.normal(0, 1, t.value.shape))
    ps.add("x", rng.normal(0, 1, (batch, n_in)), np.float64)
    ps.add("h0", rng.normal(0, 1, (batch, units)), np.float64)
    if kind != "gru":
        ps.add("c0", rng.normal(0, 1, (batch, units)), np.float64)
    if kind == "context":
        ps.add("ctx", rng.normal(0, 1, (batch, ctx_dim)), np.float64)
    # a random projection makes every output element matter
    wh, wc = rng.normal(0, 1, (batch, units)), rng.normal(0, 1, (batch, units))

    def loss(ps):
        p = ps.scope("c")
        if kind == "gru":
            return ad.sum(ad.mul(cells.gru_step(p, ps["x"], ps["h0"]), wh))
        state = cells.CellState(ps["h0"], ps["c0"])
        if kind == "lstm":
            state = cells.lstm_step(p, ps["x"], state)
        else:
            state = cells.context_lstm_step(p, ps["x"], state, ps["ctx"])
        return ad.add(ad.sum(ad.mul(state.h, wh)), ad.sum(ad.mul(state.c, wc)))

    return loss, ps


def _model_case(attention, cell, seed):
    """Full loss of a 2-layer model with units 2, T 3 and 3 mel bands on a padded batch of 2."""
    spec = ModelSpec(cell=cell, enc_layers=2, dec_layers=2, units=2, enc_bidirectional=True,
                     dec_bidirectional=False, n_mels=3, attention=attention)
    ps = model.init_params(spec, 0, dtype=np.float64)
    rng = np.random.default_rng(seed)
    for name, t in list(ps.items()):
        # alignment, query and output layers get a wider spread so tanh scores are not flat
        scale = 2.0 if any(k in name for k in ("att/", "query", "fc")) else 1.0
        ps.set_value(name, rng.normal(0, scale, t.value.shape))
    frames, lengths = rng.uniform(-1, 1, (2, 3, 3)), np.array([3, 2])
    return (lambda ps: model.loss(ps, spec, frames, lengths)), ps


def _conditioned(loss_fn, ps, floor=1e-7):
    """True when no analytic gradient element is so small that relative error is meaningless."""
    grads = analytic_gradient(loss_fn, ps)
    return min(float(np.abs(g).min()) for g in grads.values()) >= floor


def _first_conditioned(make, count=2, limit=40):
    found = []
    for seed in range(limit):
        loss_fn, ps = make(seed)
        if _conditioned(loss_fn, ps):
            found.append((seed, loss_fn, ps))
            if len(found) == count:
                break
    return found


def test_criterion_01_gradient_suite():
    cases = {
        "gru step": lambda s: _step_case("gru", s),
        "peephole lstm step": lambda s: _step_case("lstm", s),
        "context lstm step": lambda s: _step_case("context", s),
        "non-attention loss (gru)": lambda s: _model_case(False, "gru", s),
        "non-attention loss (lstm)": lambda s: _model_case(False, "lstm", s),
        "attention loss (gru)": lambda s: _model_case(True, "gru", s),
        "attention loss (lstm)": lambda s: _model_case(True, "lstm", s),
    }
    start = time.perf_counter()
    worst, missing = 0.0, []
    for name, make in cases.items():
        found = _first_conditioned(make)
        if len(found) < 2:
            missing.append(name)
        for seed, loss_fn, ps in found:
            if name.startswith("attention"):
                assert {"att/v_a", "att/W_a", "att/U_a"} <= set(ps.names())
            worst = max(worst, grad_check(loss_fn, ps))
    elapsed = time.perf_counter() - start
    ok = not missing and worst < 1e-4 and elapsed < 60
    detail = f"max rel err {worst:.2e} over {len(cases)} cases x 2 seeds, {elapsed:.1f} s"
    if missing:
        detail += f", no conditioned seed for {missing}"
    assert record(1, "gradient suite", ok, detail)


# ---------------------------------------------------------------------------
# 2. zero-context reduction


def test_criterion_02_zero_context_reduction():
    mismatches = 0
    for k in range(1000):
        rng = np.random.default_rng(k)
        units, n_in, ctx_dim, batch = (int(v) for v in rng.integers(1, 9, 4))
        ps = ParamSet()
        cells.init_lstm(ps, "c", n_in, units, rng, context_dim=ctx_dim, dtype=np.float64)
        for name, t in list(ps.items()):
            ps.set_value(name, rng.normal(0, rng.uniform(0.1, 3), t.value.shape))
        p = ps.scope("c")
        x = rng.normal(size=(batch, n_in))
        state = cells.CellState(ad.Tensor(rng.normal(size=(batch, units))), ad.Tensor(rng.normal(size=(batch, units))))
        a = cells.context_lstm_step(p, x, state, np.zeros((batch, ctx_dim)))
        b = cells.lstm_step(p, x, state)
        if not (np.array_equal(a.h.value, b.h.value) and np.array_equal(a.c.value, b.c.value)):
            mismatches += 1
    assert record(2, "zero-context reduction", mismatches == 0, f"{mismatches} of 1000 differ bitwise")


# ---------------------------------------------------------------------------
# 3. attention invariants


def test_criterion_03_attention_invariants():
    rng = np.random.default_rng(3)
    worst_sum = worst_shift = 0.0
    bad_range = bad_hull = 0
    for _ in range(10_000):
        T, n, m, l = (int(v) for v in rng.integers(1, 9, 4))
        scale = 10.0 ** rng.uniform(-2, 1.5)
        align = {"W_a": rng.normal(0, scale, (l, n)), "U_a": rng.normal(0, scale, (l, m)),
                 "v_a": rng.normal(0, scale, l)}
        s, H = rng.normal(size=n), rng.normal(size=(T, m))
        scores = att.alignment_scores(align, s, H).value
        alpha = att.attention_weights(scores).value
        ctx = att.attention_context(alpha, H).value
        worst_sum = max(worst_sum, abs(alpha.sum() - 1.0))
        bad_range += int(np.any(alpha < 0) or np.any(alpha > 1))
        bad_hull += int(np.any(ctx < H.min(axis=0) - 1e-12) or np.any(ctx > H.max(axis=0) + 1e-12))
        shifted = att.attention_weights(scores + rng.normal(0, 100)).value
        worst_shift = max(worst_shift, float(np.max(np.abs(shifted - alpha))))
    ok = worst_sum <= 1e-6 and bad_range == 0 and bad_hull == 0 and worst_shift <= 1e-12
    detail = (f"max |sum-1| {worst_sum:.1e}, range violations {bad_range}, hull violations {bad_hull}, "
              f"max shift diff {worst_shift:.1e}")
    assert record(3, "attention invariants over 10^4 cases", ok, detail)


# ---------------------------------------------------------------------------
# 4. structural dimensions


def _extract(spec, clip):
    ckpt = make_checkpoint(spec, model.init_params(spec, 0), AdamState(), 1,
                           TrainConfig(max_epochs=1, checkpoint_epochs=(1,)))
    rng = np.random.default_rng(0)
    cfg = SpectrogramConfig(0.04, 0.5, spec.n_mels, clip)
    spectrograms = [Spectrogram(f"i{k}", rng.uniform(-1, 1, (3, spec.n_mels)).astype(np.float32), cfg)
                    for k in range(2)]
    return features.extract_features(ckpt, spectrograms)


def test_criterion_04_structural_dims():
    attention_spec = ModelSpec("lstm", 2, 2, 512, True, False, n_mels=128, attention=True)
    plain_spec = ModelSpec("lstm", 2, 2, 256, False, True, n_mels=128)
    att_table = _extract(attention_spec, None)
    clip_tables = {c: _extract(plain_spec, c) for c in (-70.0, -60.0, -50.0, -40.0)}
    clip_fused = features.fuse_clip_variants(clip_tables)
    early = features.fuse_tables([clip_fused, att_table])
    dims = (att_table.dim, clip_tables[-40.0].dim, clip_fused.dim, early.dim)
    ok = dims == (512, 1024, 4096, 4608) and model.tap_dim(attention_spec, "state_dec") == 512
    assert record(4, "structural dims", ok, "attention, non-attention, clip-fused, early-fused = "
                  + "/".join(map(str, dims)))


# ---------------------------------------------------------------------------
# 5. overfit smoke test

OVERFIT_SPECS = {
    "non-attention": ModelSpec("gru", 1, 1, 32, False, False, n_mels=16),
    "attention": ModelSpec("gru", 1, 1, 32, False, False, n_mels=16, attention=True),
}


def _overfit_instance(seed):
    """A 20-frame, 16-band spectrogram of a synthetic tone, clipped at -40 dB."""
    rng = make_rng(seed)
    x = tone(rng.uniform(120, 400), rng, duration_s=6720 / 16000)
    return compute_spectrogram("x", x, 16000, SpectrogramConfig(0.04, 0.5, 16, -40.0)).frames


@pytest.mark.parametrize("arch", list(OVERFIT_SPECS))
def test_criterion_05_overfit(arch):
    spec = OVERFIT_SPECS[arch]
    start = time.perf_counter()
    steps = []
    for seed in range(5):
        frames = _overfit_instance(seed)[None]
        params = model.init_params(spec, seed)
        opt = AdamState(lr=1e-3)
        hit = None
        for updates in range(501):
            params.zero_grad()
            loss = model.loss(params, spec, frames)
            if float(loss.value) < 1e-3:
                hit = updates
                break
            if updates == 500:
                break
            loss.backward()
            adam_step(opt, params)
        steps.append(hit)
    elapsed = time.perf_counter() - start
    ok = all(s is not None for s in steps) and elapsed < 120
    label = "5a" if arch == "non-attention" else "5b"
    assert record(label, f"overfit smoke ({arch})", ok,
                  f"Adam steps to MSE < 1e-3 per seed {steps}, {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# 6. teacher forcing


def test_criterion_06_teacher_forcing():
    """Frame t is the token (t + 1, -(t + 1)), so any misplaced or reused frame is visible."""
    checked = failures = 0
    for T in range(1, 7):
        frames = np.array([[t + 1, -(t + 1)] for t in range(T)], dtype=float)
        dec_in, target = ae.prepare_decoder_io(frames)
        want_target = frames[::-1]
        want_in = np.vstack([np.zeros((1, 2)), want_target[:-1]])
        ok = np.array_equal(target, want_target) and np.array_equal(dec_in, want_in)
        checked, failures = checked + 1, failures + (not ok)
        # every padded batch whose lengths are at most T
        for lengths in itertools.product(range(1, T + 1), repeat=2):
            batch = np.zeros((2, T, 2))
            for b, n in enumerate(lengths):
                batch[b, :n] = frames[:n]
            dec_b, tgt_b = ae.prepare_decoder_batch(batch, lengths)
            for b, n in enumerate(lengths):
                d1, t1 = ae.prepare_decoder_io(frames[:n])
                ok = (np.array_equal(dec_b[b, :n], d1) and np.array_equal(tgt_b[b, :n], t1)
                      and not dec_b[b, n:].any() and not tgt_b[b, n:].any())
                checked, failures = checked + 1, failures + (not ok)
    assert record(6, "teacher-forcing contract for T <= 6", failures == 0,
                  f"{checked} sequences checked, {failures} failures")


# ---------------------------------------------------------------------------
# 7. Spearman exactness


def test_criterion_07_spearman():
    x = np.arange(1.0, 11.0)
    identity = spearman_rho(x, x)
    reversal = spearman_rho(x, x[::-1])
    hand = spearman_rho([1, 2, 3, 4], [2, 1, 4, 3])
    rng = np.random.default_rng(7)
    worst, done = 0.0, 0
    while done < 1000:
        n = int(rng.integers(3, 16))
        a, b = rng.integers(0, 4, n), rng.integers(0, 4, n)
        if len(set(a)) < 2 or len(set(b)) < 2:
            continue
        worst = max(worst, float(np.max(np.abs(modeling.average_ranks(a) - brute_force_ranks(a)))))
        worst = max(worst, abs(spearman_rho(a, b) - brute_force_spearman(a, b)))
        done += 1
    ok = identity == 1.0 and reversal == -1.0 and abs(hand - 0.6) <= 1e-12 and worst <= 1e-12
    assert record(7, "Spearman exactness", ok, f"identity {identity}, reversal {reversal}, 4-point {hand:.15f}, "
                  f"max diff vs brute force on 1000 tied pairs {worst:.1e}")


# ---------------------------------------------------------------------------
# 8. SVR against a QP oracle


def test_criterion_08_svr_oracle():
    worst_obj = worst_pred = 0.0
    for k in range(100):
        rng = np.random.default_rng(800 + k)
        N, D = int(rng.integers(2, 7)), int(rng.integers(1, 3))
        X, y = rng.normal(size=(N, D)), rng.uniform(1, 9, N)
        C = float(10.0 ** rng.integers(-5, 1))
        fit = svr_fit(X, y, C)
        (Xs,) = standardize(X)
        obj, w, (lo, hi) = svr_qp(Xs, y, C, modeling.DEFAULT_EPSILON)
        mine = primal_objective(fit.w, fit.b, Xs, y, C, modeling.DEFAULT_EPSILON)
        worst_obj = max(worst_obj, objective_gap(mine, obj, y, C, modeling.DEFAULT_EPSILON))
        # the oracle's bias is the centre of its optimal interval, the same canonical choice
        worst_pred = max(worst_pred, float(np.max(np.abs(fit.predict(X) - (Xs @ w + 0.5 * (lo + hi))))))
    ok = worst_obj <= 1e-6 and worst_pred <= 1e-3
    assert record(8, "SVR matches QP oracle on 100 problems", ok,
                  f"max rel objective gap {worst_obj:.1e}, max prediction diff {worst_pred:.1e}")


# ---------------------------------------------------------------------------
# 9 and 10. end-to-end synthetic experiment and determinism


def _pipeline(root):
    run = lambda *args: cli.main([str(a) for a in args])  # noqa: E731
    data, mels, ckpts = root / "data", root / "mels", root / "run"
    manifest = data / "manifest.csv"
    codes = [
        run("synth", "--n", 200, "--seed", 7, "--out", data),
        run("spectrograms", "--manifest", manifest, "--out", mels, "--mel-bands", 160, "--window", 0.04),
        run("train", "--manifest", manifest, "--spectrograms", mels, "--out", ckpts, "--attention",
            "--cell", "lstm", "--layers", 2, "--bidirectional-encoder", "--units", 64, "--epochs", 40,
            "--batch-size", 32, "--seed", 1),
        run("extract", "--checkpoint", ckpts / "ckpt_e40.s2sc", "--manifest", manifest,
            "--spectrograms", mels, "--tap", "state_dec", "--out", root / "state_dec.csv"),
        run("model", "--features", root / "state_dec.csv", "--manifest", manifest, "--out", root / "report.csv"),
    ]
    return codes


@pytest.fixture(scope="module")
def end_to_end(tmp_path_factory):
    runs = []
    for name in ("first", "second"):
        root = tmp_path_factory.mktemp(name)
        start = time.perf_counter()
        codes = _pipeline(root)
        runs.append((root, codes, time.perf_counter() - start))
    return runs


def test_criterion_09_end_to_end(end_to_end):
    root, codes, elapsed = end_to_end[0]
    if any(codes):
        assert record(9, "end-to-end synthetic experiment", False, f"exit codes {codes}")
    report = EvalReport.from_csv(root / "report.csv")
    C, rho_devel, rho_test = report.best("state_dec")
    ok = rho_test >= 0.8 and elapsed < 600
    assert record(9, "end-to-end synthetic experiment", ok,
                  f"test rho {rho_test:.4f} at C={C:g} (devel {rho_devel:.4f}), {elapsed:.0f} s")


def test_criterion_10_determinism(end_to_end):
    (a, codes_a, _), (b, codes_b, _) = end_to_end
    if any(codes_a) or any(codes_b):
        assert record(10, "determinism", False, f"exit codes {codes_a} and {codes_b}")
    same = {name: (a / name).read_bytes() == (b / name).read_bytes()
            for name in ("state_dec.csv", "state_dec.csv.json", "report.csv")}
    same_report = EvalReport.from_csv(a / "report.csv") == EvalReport.from_csv(b / "report.csv")
    ok = all(same.values()) and same_report
    assert record(10, "determinism", ok, "identical: " + ", ".join(f"{k} {v}" for k, v in same.items())
                  + f", EvalReport equal {same_report}")
