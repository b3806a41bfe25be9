import math

import numpy as np
import pytest

import nase

TINY = {
    "seed": 3,
    "corpus": {"signal_length": 64, "train_per_family": 2, "test_per_family": 1, "unseen_per_cell": 1},
    "schedule": {"steps": 10, "beta_start": 1e-3, "beta_end": 0.2},
    "model": {
        "encoder_frame": 16,
        "encoder_hop": 8,
        "encoder_dim": 8,
        "encoder_ff": 8,
        "encoder_blocks": 1,
        "embedding_dim": 4,
        "denoiser_frame": 8,
        "denoiser_hidden": 8,
        "denoiser_blocks": 1,
        "time_dim": 8,
    },
    "train": {"epochs": 2},
}


def test_default_schedule_invariants():
    s = nase.Schedule()
    assert s.steps == 50
    assert s.w(0) == 0.0
    assert s.w(50) == pytest.approx(1.0)
    assert all(s.w(t) >= s.w(t - 1) for t in range(1, 51))
    assert all(s.delta(t) > 0 for t in range(1, 51))
    assert s.coeffs(1)["delta_tilde"] == 0.0
    jump = s.posterior(20, 19)
    assert jump["c_xt"] == pytest.approx(s.coeffs(20)["c_xt"], abs=1e-14)


def test_infeasible_schedule_raises():
    with pytest.raises(nase.ScheduleError):
        nase.Schedule(steps=10)
    with pytest.raises(nase.ScheduleError):
        nase.Schedule(kappa=1.0)


def test_metrics():
    t = np.arange(256)
    ref = np.sin(2 * np.pi * 3 * t / 256)
    noise = np.cos(2 * np.pi * 3 * t / 256)
    assert nase.si_sdr(ref, ref) == 100.0
    assert nase.si_sdr(ref + math.sqrt(0.1) * noise, ref) == pytest.approx(10.0, abs=1e-9)
    assert nase.seg_snr(ref, ref) == 35.0
    pts = np.array([[0.0], [1.0], [10.0], [11.0]])
    assert nase.separability(pts, [0, 0, 1, 1]) > 0.8


def test_config_overrides_and_schema_errors():
    cfg = nase.config(seed=5, train={"lambda_nc": 1.0})
    assert cfg["seed"] == 5
    assert cfg["train"]["lambda_nc"] == 1.0
    with pytest.raises(nase.SchemaError):
        nase.config(train={"momentum": 0.9})


def test_corpus_train_enhance(tmp_path):
    corpus = nase.generate_corpus(TINY)
    assert len(corpus["train"]) == 2 * 10
    rec = corpus["test"][0]
    assert rec["noisy"].shape == (64,)
    assert nase.si_sdr(rec["noisy"], rec["clean"]) < 100

    ckpt = tmp_path / "model.ckpt"
    epochs = nase.train(TINY, ckpt)
    assert [e["epoch"] for e in epochs] == [1, 2]
    assert all(math.isfinite(e["diff_loss"]) for e in epochs)
    assert ckpt.exists()

    noisy = np.stack([r["noisy"] for r in corpus["test"][:3]])
    out = nase.enhance(str(ckpt), noisy)
    assert out.shape == noisy.shape
    assert np.all(np.isfinite(out))
    np.testing.assert_array_equal(out, nase.enhance(str(ckpt), noisy, threads=2))
    assert nase.embed(str(ckpt), noisy).shape == (3, 4)

    with pytest.raises(nase.MissingFileError):
        nase.enhance(str(tmp_path / "absent.ckpt"), noisy)
