import numpy as np
import pytest

import textdestroyer as td


def test_default_config_lists_reported_settings():
    text = td.default_config()
    assert "steps = 50\n" in text
    assert "gamma = 1.5\n" in text
    assert "kv_steps = 1-45\n" in text
    assert td.normalize_config("") == text


def test_bad_config_raises():
    with pytest.raises(td.ConfigError):
        td.normalize_config("k1 = 4\n")


def test_ddim_worked_example_and_inverse():
    # Two-step helpers use the subsampled schedule, so check the inverse property here.
    rng = np.random.default_rng(0)
    z = rng.normal(size=(2, 3, 3))
    eps = rng.normal(size=(2, 3, 3))
    back = td.ddim_denoise_step(td.ddim_invert_step(z, eps, 7), eps, 7)
    np.testing.assert_allclose(back, z, rtol=1e-12, atol=1e-12)
    a = td.alpha_bar(50)
    assert len(a) == 51 and a[0] == 1.0 and all(x > y for x, y in zip(a, a[1:]))


def test_kmeans_example():
    labels, centers = td.kmeans([0, 0, 10, 10], 2)
    assert labels == [1, 1, 0, 0]
    assert centers == [10.0, 0.0]
    with pytest.raises(td.DegenerateClustering):
        td.kmeans([1, 1, 1], 2)


def test_metrics():
    a = np.zeros((16, 16, 3))
    b = np.full((16, 16, 3), 255.0)
    assert td.psnr(a, b) == pytest.approx(0.0)
    assert td.psnr(a, a) == 100.0
    img, _ = td.glyph_fixture(1)
    assert td.mssim(img, img) == 1.0


def test_run_image_on_fixture():
    img, truth = td.glyph_fixture(3)
    assert img.shape == (96, 96, 3) and img.dtype == np.uint8
    result = td.run_image(img, "steps = 10\nkv_steps = 1-9\n")
    assert result["report"]["status"] == "ok"
    assert result["report"]["text_found"]
    out = result["output"]
    assert out.shape == img.shape
    assert result["report"]["metrics"]["background_only"]["psnr_db"] >= 35.0
    assert not np.any(result["m3"] & ~result["m1"])


def test_dry_run_has_no_output():
    img, _ = td.glyph_fixture(4)
    result = td.run_image(img, "steps = 10\nkv_steps = 1-9\ndry_run = true\n")
    assert result["output"] is None
    assert result["m3"].sum() > 0
