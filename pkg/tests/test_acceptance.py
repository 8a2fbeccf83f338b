"""Acceptance criteria, one test per criterion.

A PASS/FAIL line per criterion is printed in the "acceptance criteria"
section of the pytest summary.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from mipcarve import harness
from mipcarve.agree import cross_view_inconsistency, inconsistent_labels
from mipcarve.carve import build_hull, filter_labels
from mipcarve.cli import main as cli_main
from mipcarve.errors import FormatError
from mipcarve.gradnet.network import NetConfig, backward, forward, init_state
from mipcarve.score import exact_max_f1, max_f1
from mipcarve.supervise import Normalization, loss3d, loss_mip, loss_slices
from mipcarve.volcore import AxisId, LabelImage, LabelVolume, MipAnnotationSet, ScalarVolume, decode, encode

from oracles import central_difference, random_mip_set, rel_error, tie_free_prediction
from test_carve import crop_with_extraneous, surviving_label_case

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def criterion(record_property):
    def start(n):
        record_property("criterion", n)
        return lambda text: record_property("detail", text)

    return start


# -- 1 -------------------------------------------------------------------------


def test_criterion_01_loss_gradients(criterion):
    detail = criterion(1)
    t0 = time.time()
    rng = np.random.default_rng(101)
    dims = (6, 6, 6)
    worst = 0.0
    for n in range(50):
        p = tie_free_prediction(rng, dims)
        lab = LabelVolume(rng.integers(0, 3, dims).astype(np.uint8))
        axes = [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)][n % 7]
        mips = random_mip_set(rng, dims, axes)
        slices = sorted(rng.choice(6, size=rng.integers(1, 4), replace=False).tolist())
        ax = int(rng.integers(3))
        for norm in (Normalization.SUM, Normalization.MEAN_OVER_LABELED):
            cases = [
                lambda x: loss3d(ScalarVolume(x), lab, norm),
                lambda x: loss_mip(ScalarVolume(x), mips, norm),
                lambda x: loss_slices(ScalarVolume(x), lab, ax, slices, norm),
            ]
            for f in cases:
                g = f(p)[1]
                fd = central_difference(lambda x: f(x)[0].total, p, 1e-4)
                worst = max(worst, rel_error(g, fd, floor=1e-6))
    elapsed = time.time() - t0
    detail("max rel err %.2e (<= 1e-4), %.1fs (< 60s)" % (worst, elapsed))
    assert worst <= 1e-4
    assert elapsed < 60


# -- 2 -------------------------------------------------------------------------


def test_criterion_02_network_gradient(criterion):
    detail = criterion(2)
    t0 = time.time()
    rng = np.random.default_rng(202)
    cfg = NetConfig(base_channels=2)
    state = init_state(cfg, seed=7, dtype=np.float64)
    x = ScalarVolume(rng.random((4, 4, 4)))
    mips = random_mip_set(rng, (4, 4, 4), (0, 1, 2))

    def loss_of(params):
        s = state.copy()
        s.parameters[...] = params
        pred = forward(s, cfg, x)
        return loss_mip(pred, mips, Normalization.SUM)

    rep, pred_grad = loss_of(state.parameters)
    analytic = backward(state, cfg, x, pred_grad)
    fd = central_difference(lambda p: loss_of(p)[0].total, state.parameters, 1e-6)
    err = rel_error(analytic, fd, floor=1e-4)
    elapsed = time.time() - t0
    detail("%d params, max rel err %.2e (<= 1e-3), %.1fs (< 300s)" % (fd.size, err, elapsed))
    assert err <= 1e-3
    assert elapsed < 300


# -- 3 -------------------------------------------------------------------------


def _random_sets(seed, count, max_dim=8, min_axes=2):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        dims = tuple(int(d) for d in rng.integers(1, max_dim + 1, 3))
        k = int(rng.integers(min_axes, 4))
        axes = sorted(rng.choice(3, size=k, replace=False).tolist())
        p_fg = rng.uniform(0.05, 0.7)
        yield rng, random_mip_set(rng, dims, axes, p_fg=p_fg, p_ign=rng.uniform(0, 0.2))


def test_criterion_03_carving_soundness(criterion):
    detail = criterion(3)
    for rng, mips in _random_sets(303, 1000):
        hull = build_hull(mips)
        for e in mips:
            assert not (hull.any(axis=int(e.axis)) & (e.data == 0)).any()
        # a volume consistent with the projections: any subset of the hull whose
        # projections fit inside every positive mask
        vol = hull & (rng.random(hull.shape) < 0.5)
        projected = MipAnnotationSet(
            tuple(LabelImage(vol.any(axis=int(e.axis)).astype(np.uint8), e.axis) for e in mips), mips.volume_dims
        )
        assert not (vol & ~build_hull(projected)).any()
        free = rng.random(mips.volume_dims) < 0.2
        free_proj = MipAnnotationSet(
            tuple(LabelImage(free.any(axis=int(e.axis)).astype(np.uint8), e.axis) for e in mips), mips.volume_dims
        )
        assert not (free & ~build_hull(free_proj)).any()
    detail("1000 random sets: no hull voxel on a bg ray; hull contains every consistent volume")


# -- 4 -------------------------------------------------------------------------


def test_criterion_04_filtering(criterion):
    detail = criterion(4)
    b = crop_with_extraneous()
    out = filter_labels(b)
    extraneous = [(e.axis, tuple(p)) for e in b for p in np.argwhere(e.data == 1)
                  if not build_hull(b).any(axis=int(e.axis))[tuple(p)]]
    assert extraneous, "construction must contain extraneous labels"
    removed = sum(out[a].data[p] == 0 for a, p in extraneous)
    assert removed == len(extraneous)
    c = surviving_label_case()
    assert filter_labels(c)[AxisId.AXIS0].data[2, 2] == 1
    for _, mips in _random_sets(404, 1000, min_axes=1):
        once = filter_labels(mips)
        assert filter_labels(once) == once
    detail("removed %d/%d extraneous labels; surviving label kept; idempotent on 1000 sets"
           % (removed, len(extraneous)))


# -- 5 -------------------------------------------------------------------------


def test_criterion_05_consistency_equivalence(criterion):
    detail = criterion(5)
    for _, mips in _random_sets(505, 200):
        flagged = inconsistent_labels(mips, 0)
        for before, after in zip(mips, filter_labels(mips)):
            assert np.array_equal(flagged[before.axis], before.data != after.data)
        f = cross_view_inconsistency(mips, 6).fraction
        assert all(x >= y for x, y in zip(f, f[1:]))
    detail("200 sets: d=0 flags == filter_labels relabels; curves non-increasing in d")


# -- 6 and 7 -------------------------------------------------------------------


@pytest.fixture(scope="module")
def ablation():
    suite = harness.build_suite(harness.ACCEPTANCE_SUITE)
    t0 = time.time()
    with threadpool_limits(limits=1):
        results = harness.run_ablation(suite, harness.ACCEPTANCE_TRAINING)
    scores = {m: r["max_f1"] for m, r in results.items()}
    return scores, time.time() - t0


def test_criterion_06_supervision_trend(criterion, ablation):
    detail = criterion(6)
    f, elapsed = ablation
    detail("3D %.3f  3-MIP %.3f  2-MIP %.3f  1-MIP %.3f  (%.0f min)"
           % (f["3d"], f["mip:012"], f["mip:01"], f["mip:0"], elapsed / 60))
    assert abs(f["mip:012"] - f["3d"]) <= 0.05
    assert abs(f["mip:01"] - f["3d"]) <= 0.07
    assert f["mip:0"] <= f["mip:01"] - 0.15


def test_criterion_07_slice_baseline(criterion, ablation):
    detail = criterion(7)
    f, _ = ablation
    detail("slices(3) %.3f <= 3-MIP %.3f + 0.02" % (f["slices:0:3"], f["mip:012"]))
    assert f["slices:0:3"] <= f["mip:012"] + 0.02


# -- 8 -------------------------------------------------------------------------


def test_criterion_08_max_f1_oracle(criterion):
    detail = criterion(8)
    best, _ = max_f1(np.array([0.9, 0.7, 0.2]), np.array([1, 0, 1]))
    assert best.f1 == pytest.approx(0.8, abs=1e-12)
    rng = np.random.default_rng(808)
    worst = 0.0
    for n in range(40):
        size = int(rng.integers(10, 10_001))
        lab = rng.choice(3, size=size, p=[0.7, 0.2, 0.1])
        # informative but noisy predictions, like a trained network's
        pred = np.clip(0.5 * (lab == 1) + rng.normal(0.25, 0.2, size), 0, 1)
        if n % 4 == 0:
            pred = rng.random(size)
        grid = max_f1(pred, lab, 255)[0].f1
        exact = exact_max_f1(pred, lab)[0].f1
        assert grid <= exact + 1e-12
        worst = max(worst, exact - grid)
    detail("worked example 0.8 exact; max grid gap %.4f (<= 0.01) over 40 volumes" % worst)
    assert worst <= 0.01


# -- 9 -------------------------------------------------------------------------


def test_criterion_09_determinism(criterion, tmp_path):
    detail = criterion(9)
    cfg = tmp_path / "p.cfg"
    cfg.write_text("dims=16,32,32\ntube_count=3\n")
    for n in range(2):
        assert cli_main(["synth", "--config", str(cfg), "--seed", str(n), "--out-prefix", str(tmp_path / ("v%d" % n))]) == 0
    outs = []
    for tag in ("a", "b"):
        net, trace = tmp_path / (tag + ".bin"), tmp_path / (tag + ".csv")
        assert cli_main(["--threads", "1", "train", "--data", str(tmp_path), "--supervision", "mip:012",
                         "--iters", "20", "--seed", "11", "--out", str(net), "--trace", str(trace)]) == 0
        outs.append((net.read_bytes(), trace.read_bytes()))
    assert outs[0][0] == outs[1][0]
    assert outs[0][1] == outs[1][1]
    detail("two cmd_train runs: identical %d-byte network files and loss traces" % len(outs[0][0]))


# -- 10 ------------------------------------------------------------------------


def test_criterion_10_format_stability(criterion):
    detail = criterion(10)
    files = sorted(GOLDEN.glob("*.vsg"))
    assert len(files) >= 4
    for path in files:
        buf = path.read_bytes()
        assert encode(decode(buf)) == buf
    scalar = decode((GOLDEN / "scalar_2x3x4.vsg").read_bytes())
    assert scalar.data[1, 2, 3] == np.float32(123.5)
    labels = decode((GOLDEN / "labels_2x2x2.vsg").read_bytes())
    assert labels.data[1, 1, 1] == 0 and labels.data[0, 1, 1] == 2
    img = decode((GOLDEN / "mip_axis1_2x3.vsg").read_bytes())
    assert img.axis == AxisId.AXIS1 and img.data.tolist() == [[0, 1, 2], [1, 0, 0]]

    good = (GOLDEN / "scalar_2x3x4.vsg").read_bytes()
    cases = {
        "bad_magic": b"XXXX" + good[4:],
        "bad_dtype": good[:4] + b"\x05" + good[5:],
        "bad_rank": good[:5] + b"\x01" + good[6:],
        "bad_axis": good[:6] + b"\x03" + good[7:],
        "bad_dims": good[:8] + b"\0\0\0\0" + good[12:],
        "truncated": good[:-2],
        "trailing": good + b"\0",
        "invalid_label": (GOLDEN / "labels_2x2x2.vsg").read_bytes()[:-1] + b"\x07",
    }
    for code, buf in cases.items():
        with pytest.raises(FormatError) as e:
            decode(buf)
        assert e.value.code == code
    detail("%d golden files round-trip bitwise; %d malformed headers give their codes" % (len(files), len(cases)))
