import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mipcarve.annotate import rasterize
from mipcarve.phantom import PhantomConfig, generate, render_tube


def test_deterministic():
    cfg = PhantomConfig(dims=(16, 24, 24), clutter_blob_count=3, rng_seed=7)
    v1, l1 = generate(cfg)
    v2, l2 = generate(cfg)
    assert v1.data.tobytes() == v2.data.tobytes()
    assert all(np.array_equal(a, b) for a, b in zip(l1.polylines, l2.polylines))


def test_straight_tube_closed_form():
    vol = np.zeros((9, 11, 20))
    radius, peak = 1.5, 0.8
    pts = np.array([[4.0, 5.0, 0.0], [4.0, 5.0, 19.0]])
    render_tube(vol, pts, radius, peak)
    i, j = np.meshgrid(np.arange(9), np.arange(11), indexing="ij")
    expected = peak * np.exp(-((i - 4.0) ** 2 + (j - 5.0) ** 2) / (2 * radius**2))
    near = np.sqrt((i - 4.0) ** 2 + (j - 5.0) ** 2) <= 4 * radius
    for k in range(20):
        # beyond 4 radii the render may be truncated; the profile is < 4e-4 there
        assert np.allclose(vol[:, :, k][near], expected[near], atol=1e-12)
        assert np.all(vol[:, :, k][~near] <= expected[~near] + 1e-12)
    assert np.allclose(vol[4, 5, :], peak)


@settings(max_examples=15)
@given(st.integers(0, 2**63 - 1))
def test_range_and_counts(seed):
    cfg = PhantomConfig(dims=(12, 16, 16), tube_count=3, noise_sigma=0.2, clutter_blob_count=2, rng_seed=seed)
    vol, lines = generate(cfg)
    assert vol.data.min() >= 0 and vol.data.max() <= 1
    assert len(lines) == 3


@settings(max_examples=10)
@given(st.integers(0, 2**63 - 1))
def test_labels_overlap_bright_region(seed):
    cfg = PhantomConfig(dims=(16, 32, 32), rng_seed=seed)
    _, lines, clean = generate(cfg, return_clean=True)
    fg = rasterize(lines, cfg.dims, 1).data == 1
    assert np.mean(clean[fg] >= cfg.intensity / 2) >= 0.95


@pytest.mark.parametrize("bad", [
    dict(tube_count=0), dict(intensity=1.5), dict(tube_radius_range=(0.0, 1.0)),
    dict(tube_radius_range=(1.0, 20.0)), dict(noise_sigma=-1.0), dict(dims=(4, 4)),
])
def test_invalid_config(bad):
    with pytest.raises(ValueError):
        generate(PhantomConfig(**bad))


def test_from_text():
    cfg = PhantomConfig.from_text("# demo\ndims=16,32,32\ntube_count=2\nnoise_sigma=0.1\nrng_seed=9\n")
    assert cfg.dims == (16, 32, 32) and cfg.tube_count == 2 and cfg.rng_seed == 9
    with pytest.raises(ValueError):
        PhantomConfig.from_text("colour=blue\n")
