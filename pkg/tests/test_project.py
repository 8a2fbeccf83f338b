import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mipcarve.errors import ShapeError
from mipcarve.project import gather_along_rays, mip, mip_set, project_labels_any
from mipcarve.volcore import AxisId, LabelVolume, ScalarVolume

small = hnp.arrays(np.float64, st.tuples(*[st.integers(1, 8)] * 3),
                   elements=st.sampled_from([0.0, 0.25, 0.5, 1.0]))


def ray_scan(data, axis):
    """Oracle: explicit loop over every ray, first maximizer wins."""
    moved = np.moveaxis(data, axis, 0)
    img = np.empty(moved.shape[1:])
    idx = np.empty(moved.shape[1:], dtype=int)
    for a in range(moved.shape[1]):
        for b in range(moved.shape[2]):
            best, arg = moved[0, a, b], 0
            for n in range(1, moved.shape[0]):
                if moved[n, a, b] > best:
                    best, arg = moved[n, a, b], n
            img[a, b], idx[a, b] = best, arg
    return img, idx


def test_zero_volume():
    for axis in AxisId:
        img, arg = mip(ScalarVolume(np.zeros((2, 2, 2))), axis)
        assert not img.data.any() and not arg.data.any()


def test_single_spike():
    d = np.zeros((2, 2, 2))
    d[0, 1, 1] = 5
    img, arg = mip(ScalarVolume(d), AxisId.AXIS0)
    expected = np.zeros((2, 2))
    expected[1, 1] = 5
    assert np.array_equal(img.data, expected)
    assert arg.data[1, 1] == 0


@given(small)
def test_matches_ray_scan(data):
    vol = ScalarVolume(data)
    for axis in range(3):
        img, arg = mip(vol, axis)
        o_img, o_idx = ray_scan(vol.data, axis)
        assert np.array_equal(img.data, o_img)
        assert np.array_equal(arg.data, o_idx)
        assert np.array_equal(gather_along_rays(vol.data, arg), img.data)


@given(small)
def test_permutation_consistent(data):
    vol = ScalarVolume(data)
    img, _ = mip(vol, 1)
    t_img, _ = mip(ScalarVolume(np.transpose(vol.data, (1, 0, 2))), 0)
    assert np.array_equal(img.data, t_img.data)


@given(small, st.data())
def test_monotone(data, draw):
    vol = ScalarVolume(data)
    idx = tuple(draw.draw(st.integers(0, n - 1)) for n in data.shape)
    bumped = vol.data.copy()
    bumped[idx] += 0.5
    for axis in range(3):
        assert np.all(mip(ScalarVolume(bumped), axis)[0].data >= mip(vol, axis)[0].data)


def test_mip_set():
    vol = ScalarVolume(np.random.default_rng(0).random((4, 4, 4)))
    out = mip_set(vol, (0, 1, 2))
    for (img, _), axis in zip(out, range(3)):
        assert np.array_equal(img.data, ray_scan(vol.data, axis)[0])
    assert len(mip_set(vol, (2,))) == 1
    with pytest.raises(ShapeError):
        mip_set(vol, (0, 0))


def test_project_labels_any():
    lv = np.zeros((3, 2, 2), np.uint8)
    assert not project_labels_any(LabelVolume(lv), 0).any()
    lv[2, 0, 1] = 1
    expected = np.zeros((2, 2), bool)
    expected[0, 1] = True
    assert np.array_equal(project_labels_any(LabelVolume(lv), 0), expected)


@given(hnp.arrays(np.uint8, st.tuples(*[st.integers(1, 6)] * 3), elements=st.integers(0, 2)))
def test_project_labels_any_oracle(lv):
    for axis in range(3):
        got = project_labels_any(LabelVolume(lv), axis, (1, 2))
        moved = np.moveaxis(lv, axis, 0)
        oracle = np.zeros(moved.shape[1:], bool)
        for n in range(moved.shape[0]):
            oracle |= (moved[n] == 1) | (moved[n] == 2)
        assert np.array_equal(got, oracle)
