# Copyright Contributors to the lrf project
# SPDX-License-Identifier: Apache-2.0

import math

import numpy as np
import pytest

import lrf


def camera(cam_id="c", tx=0.0):
    pose = np.eye(4)
    pose[0, 3] = tx
    return lrf.Camera(cam_id, lrf.Intrinsics(32, 32, 16, 16, 32, 32), pose)


def test_psnr_closed_forms():
    zeros = np.zeros((8, 8, 3))
    assert lrf.psnr(zeros, np.full((8, 8, 3), 0.1), 1.0) == pytest.approx(20.0, abs=1e-9)
    assert lrf.psnr(zeros, np.ones((8, 8, 3)), 2.0) == pytest.approx(10 * math.log10(4), abs=1e-9)
    assert math.isinf(lrf.psnr(zeros, zeros, 1.0))


def test_ssim_matches_scikit_image():
    metrics = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(0)
    for n in range(5):
        a = rng.normal(0, 0.5, (20 + n, 24, 3))
        b = a + 0.1 * (n + 1) * rng.normal(0, 0.5, a.shape)
        reference = metrics.structural_similarity(
            a, b, data_range=2.0, channel_axis=2, gaussian_weights=True, sigma=1.5, use_sample_covariance=False
        )
        assert lrf.ssim(a, b, 2.0) == pytest.approx(reference, abs=1e-6)
    assert lrf.ssim(a, a, 2.0) == pytest.approx(1.0, abs=1e-12)


def test_ape_and_weights():
    shifted = np.eye(4)
    shifted[:3, 3] = [3, 4, 0]
    assert lrf.ape(np.eye(4)) == 0.0
    assert lrf.ape(shifted) == 5.0
    w = lrf.ape_weights([(np.eye(4), shifted), (np.eye(4), np.eye(4))])
    assert w == [1.0, 0.0]


def test_epipolar_constraint():
    ci, cj = camera("i"), camera("j", tx=-0.5)
    f = lrf.fundamental_matrix(ci, cj)
    for x in ([0.1, 0.2, 3.0], [-0.4, 0.3, 5.0]):
        xi = lrf.project_point(ci, np.array(x))
        xj = lrf.project_point(cj, np.array(x))
        assert abs(lrf.epipolar_residual(f, xi, xj)) <= 1e-9


def test_corres_loss_hand_example_and_missing_view():
    a = np.zeros((1, 1, 4))
    a[0, 0, :2] = [0.5, -0.5]
    b = np.zeros((1, 1, 4))
    value, grads = lrf.corres_loss({"a": a, "b": b}, [("a", "b", [4, 4], [4, 4], 1.0)])
    assert value == 1.0
    assert grads["a"].shape == (1, 1, 4)
    assert grads["a"][0, 0, 0] == 1.0
    with pytest.raises(lrf.LrfError):
        lrf.corres_loss({"a": a}, [("a", "zzz", [4, 4], [4, 4], 1.0)])


def test_kl_terms():
    z = np.zeros((2, 2, 4))
    assert lrf.kl_regularizer(z, z, z, z) == 0.0
    mean = z.copy()
    mean[0, 0, 0] = 1.0
    assert lrf.kl_regularizer(mean, z, z, z) == pytest.approx(0.5 / 4)
    assert lrf.vae_terms(z, z, np.ones((1, 1, 1)), np.zeros((1, 1, 1))) == (0.0, 0.5)
    assert lrf.stage1_objective(0.3, 2.0, 0.7, 5.0, 0.0, 0.0) == pytest.approx(0.3 + 1e-6 * 2.0)


def test_decoder_fit_recovers_bias(tmp_path):
    latent = np.zeros((2, 2, 4))
    image = np.full((16, 16, 3), 0.25)
    decoder, losses = lrf.fit_decoder([(latent, image, True)], iterations=500)
    assert losses[-1] < losses[0]
    assert np.allclose(decoder.bias, 0.25, atol=5e-3)
    lrf.save_decoder(decoder, tmp_path / "decoder.bin")
    back = lrf.load_decoder(tmp_path / "decoder.bin")
    assert back.channels == 4
    assert lrf.decode(back, latent).shape == (16, 16, 3)


def test_train_render_round_trip(tmp_path):
    truth = lrf.make_synthetic_dataset(tmp_path / "data", seed=3, gaussians=20, train_views=3, height=12, width=12)
    assert len(truth) == 20
    config = tmp_path / "train.json"
    config.write_text('{"iterations": 20, "init_points": 40}')
    count, loss = lrf.train(tmp_path / "data", tmp_path / "out" / "scene.ply", config, seed=7)
    assert count > 0 and math.isfinite(loss)
    assert (tmp_path / "out" / "metrics.csv").exists()
    scene = lrf.load_scene(tmp_path / "out" / "scene.ply")
    assert len(scene) == count and scene.channels == 4
    cams = lrf.load_cameras(tmp_path / "data" / "cameras.txt")
    img = lrf.render(scene, cams[0], 12, 12)
    assert img.shape == (12, 12, 4)
    assert np.array_equal(img, lrf.render(scene, cams[0], 12, 12, threads=4))
    with pytest.raises(lrf.LrfError):
        lrf.train(tmp_path / "missing", tmp_path / "x.ply")


def test_lrf_file_round_trip(tmp_path):
    z = np.arange(24, dtype=np.float64).reshape(2, 3, 4) / 8
    lrf.write_lrf(z, tmp_path / "z.lrf")
    assert np.array_equal(lrf.read_lrf(tmp_path / "z.lrf"), z)


def test_gradient_check():
    report = lrf.check_gradients(seed=2, gaussians=3, height=12, width=12, channels=2)
    assert report["passed"], report
