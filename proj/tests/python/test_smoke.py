import numpy as np
import pytest

import ultranerf as un


def random_maps(rng, width=6, depth=10):
    return {
        "alpha": rng.uniform(0.0, 0.2, (width, depth)).astype(np.float32),
        "beta": rng.uniform(0.0, 1.0, (width, depth)).astype(np.float32),
        "rho_b": rng.uniform(0.0, 1.0, (width, depth)).astype(np.float32),
        "rho_s": rng.uniform(0.0, 1.0, (width, depth)).astype(np.float32),
        "phi": rng.uniform(0.0, 1.0, (width, depth)).astype(np.float32),
    }


def test_ssim_and_loss():
    rng = np.random.default_rng(0)
    a = rng.uniform(size=(16, 16)).astype(np.float32)
    b = rng.uniform(size=(16, 16)).astype(np.float32)
    assert abs(un.ssim(a, a) - 1.0) < 1e-6
    assert un.ssim(a, b) < 0.5
    assert un.combined_loss(a, a) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(un.ShapeError):
        un.ssim(a, b[:8])


def test_render_decomposes_into_reflection_and_backscatter():
    out = un.render(random_maps(np.random.default_rng(1)))
    assert out["image"].shape == (6, 10)
    np.testing.assert_array_equal(out["image"], out["R"] + out["B"])
    assert np.all(np.diff(out["I"], axis=1) <= 0)


def test_render_rejects_bad_maps():
    maps = random_maps(np.random.default_rng(2))
    maps["beta"] = maps["beta"] + 2.0
    with pytest.raises(ValueError):
        un.render(maps)


def test_cli_pipeline(tmp_path):
    ds = str(tmp_path / "ds")
    code, out, err = un.run_cli(["simulate", "--out", ds, "--seed", "3", "--mode", "expected", "--frames", "2",
                                 "--width", "10", "--depth", "12", "--sweeps", "10:1:train,0:1:test"])
    assert code == 0, err
    assert "seed=3" in err
    sweeps = un.load_dataset(ds)
    assert [s["split"] for s in sweeps] == ["train", "test"]
    assert sweeps[1]["view"] == "perpendicular"
    assert sweeps[0]["frames"][0].shape == (10, 12)

    ckpt_path = str(tmp_path / "m.ckpt")
    code, _, err = un.run_cli(["train", "--data", ds, "--out", ckpt_path, "--iters", "2", "--width", "8",
                               "--frequencies", "2", "--log-every", "0"])
    assert code == 0, err
    ckpt = un.Checkpoint.load(ckpt_path)
    assert ckpt.variant == "ultra"
    assert ckpt.iteration == 2
    pose = sweeps[1]["poses"][0]
    view = ckpt.render(pose)
    assert view.shape == ckpt.frame_shape
    np.testing.assert_array_equal(view, ckpt.render(pose))
    maps = ckpt.decompose(pose)
    assert set(maps) == {"alpha", "beta", "rho_b", "rho_s", "phi"}
    assert 0.0 <= float(maps["beta"].min()) and float(maps["beta"].max()) <= 1.0


def test_cli_usage_and_errors(tmp_path):
    code, _, err = un.run_cli([])
    assert code == 1
    assert "simulate" in err
    with pytest.raises(un.DataError):
        un.Checkpoint.load(str(tmp_path / "missing.ckpt"))
