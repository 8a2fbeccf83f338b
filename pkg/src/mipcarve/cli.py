"""Command-line front end.

Every subcommand wraps one library call.  Failures print a single line
``error: <code>: <message>`` to stderr and exit with 2 (usage), 3 (data) or
4 (numeric failure).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import agree, annotate, carve, phantom, project, score
from .errors import FormatError, MipCarveError
from .gradnet import netio
from .gradnet.network import NetConfig, forward
from .gradnet.train import Supervision, TrainConfig, TrainingVolume, train
from .volcore import (
    ALL_AXES,
    AxisId,
    Image2D,
    LabelVolume,
    MipAnnotationSet,
    ScalarVolume,
    read_label_image,
    read_volume,
    write_volume,
)

EXIT_USAGE = 2


class UsageError(Exception):
    def __init__(self, message, code="usage"):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(code: str, message: str, status: int) -> int:
    print("error: %s: %s" % (code, message), file=sys.stderr)
    return status


# -- helpers -----------------------------------------------------------------


def _read_scalar(path) -> ScalarVolume:
    obj = read_volume(path)
    if not isinstance(obj, ScalarVolume):
        raise FormatError("%s is not a scalar volume" % path, code="wrong_kind")
    return obj


def _read_labels(path) -> LabelVolume:
    obj = read_volume(path)
    if not isinstance(obj, LabelVolume):
        raise FormatError("%s is not a label volume" % path, code="wrong_kind")
    return obj


def _read_mip_set(paths, dims=None) -> MipAnnotationSet:
    images = [read_label_image(p) for p in paths]
    if dims is None:
        dims = _infer_dims(images)
    return MipAnnotationSet(tuple(images), dims)


def _infer_dims(images) -> tuple:
    """Volume dims implied by the image shapes (each image fixes two of three)."""
    dims = [None, None, None]
    for img in images:
        keep = [a for a in range(3) if a != int(img.axis)]
        for a, n in zip(keep, img.data.shape):
            if dims[a] is not None and dims[a] != n:
                raise FormatError("annotation dims disagree along axis %d" % a, code="dim_mismatch")
            dims[a] = n
    if None in dims:
        raise UsageError("cannot infer volume dims from a single annotation; pass --dims", code="missing_dims")
    return tuple(dims)


def _axes(text: str):
    if text == "all":
        return list(ALL_AXES)
    try:
        return [AxisId(int(ch)) for ch in text]
    except ValueError as exc:
        raise UsageError("bad axis %r" % text, code="bad_axis") from exc


def pgm_bytes(img: np.ndarray) -> bytes:
    """Binary 8-bit graymap of ``img`` scaled min..max to 0..255."""
    a = np.asarray(img, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    scaled = np.zeros(a.shape) if hi <= lo else (a - lo) / (hi - lo)
    pix = np.floor(scaled * 255 + 0.5).astype(np.uint8)
    rows, cols = pix.shape
    return b"P5\n%d %d\n255\n" % (cols, rows) + pix.tobytes()


def load_dataset(directory) -> list[TrainingVolume]:
    """Training volumes named ``<stem>_image.vsg`` with optional ``<stem>_labels.vsg``
    and ``<stem>_mip{0,1,2}.vsg`` companions."""
    root = Path(directory)
    if not root.is_dir():
        raise FormatError("no such directory: %s" % directory, code="not_found")
    items = []
    for img_path in sorted(root.glob("*_image.vsg")):
        stem = img_path.name[: -len("_image.vsg")]
        image = _read_scalar(img_path)
        lab_path = root / ("%s_labels.vsg" % stem)
        labels = _read_labels(lab_path) if lab_path.exists() else None
        mip_paths = [root / ("%s_mip%d.vsg" % (stem, a)) for a in range(3)]
        mip_paths = [p for p in mip_paths if p.exists()]
        mips = _read_mip_set(mip_paths, image.dims) if mip_paths else None
        items.append(TrainingVolume(image, labels, mips))
    if not items:
        raise FormatError("no *_image.vsg files in %s" % directory, code="empty_dataset")
    return items


# -- subcommands ---------------------------------------------------------------


def cmd_mip(args):
    vol = _read_scalar(args.inp)
    for axis in _axes(args.axis):
        img, _ = project.mip(vol, axis)
        write_volume(Image2D(img.data, axis), "%s_mip%d.vsg" % (args.out, int(axis)))
        if args.preview:
            Path("%s_mip%d.pgm" % (args.out, int(axis))).write_bytes(pgm_bytes(img.data))
    return 0


def cmd_hull(args):
    mips = _read_mip_set(args.mips, tuple(args.dims) if args.dims else None)
    hull = carve.build_hull(mips)
    write_volume(LabelVolume(hull.astype(np.uint8)), args.out)
    return 0


def cmd_filter(args):
    mips = _read_mip_set(args.mips, tuple(args.dims) if args.dims else None)
    for img in carve.filter_labels(mips):
        write_volume(img, "%s_mip%d.vsg" % (args.out_prefix, int(img.axis)))
    return 0


def cmd_rasterize(args):
    lines = annotate.read_swc(args.swc)
    if args.axis is not None:
        lines2d = annotate.project_polylines(lines, args.axis)
        dims = [d for a, d in enumerate(args.dims) if a != args.axis]
        write_volume(annotate.rasterize_mip(lines2d, dims, args.width, args.axis), args.out)
    else:
        write_volume(annotate.rasterize(lines, args.dims, args.width), args.out)
    return 0


def cmd_synth(args):
    text = Path(args.config).read_text() if args.config else ""
    try:
        cfg = phantom.PhantomConfig.from_text(text)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc), code="bad_config") from exc
    if args.seed is not None:
        cfg = phantom.PhantomConfig(**{**cfg.__dict__, "rng_seed": args.seed})
    vol, lines = phantom.generate(cfg)
    prefix = args.out_prefix
    write_volume(vol, prefix + "_image.vsg")
    annotate.write_swc(lines, prefix + ".swc")
    labels = annotate.rasterize(lines, vol.dims, args.width)
    write_volume(labels, prefix + "_labels.vsg")
    if args.mips != "none":
        for img in annotate.mips_from_3d_labels(labels, _axes(args.mips), args.width):
            write_volume(img, "%s_mip%d.vsg" % (prefix, int(img.axis)))
    return 0


def cmd_train(args):
    try:
        sup = Supervision.parse(args.supervision)
    except ValueError as exc:
        raise UsageError(str(exc), code="bad_supervision") from exc
    dataset = load_dataset(args.data)
    tc = TrainConfig(learning_rate=args.lr, iterations=args.iters, crop_size=tuple(args.crop),
                     rng_seed=args.seed, supervision=sup)
    cfg = NetConfig(base_channels=args.base_channels)
    state, trace = train(dataset, tc, cfg, seed=args.seed)
    netio.save_net(state, cfg, args.out)
    if args.trace:
        rows = ["iter,loss"] + ["%d,%.9g" % (i + 1, v) for i, v in enumerate(trace)]
        Path(args.trace).write_text("\n".join(rows) + "\n")
    return 0


def cmd_eval(args):
    state, cfg = netio.load_net(args.net)
    pred = forward(state, cfg, _read_scalar(args.inp))
    if args.pred_out:
        write_volume(pred, args.pred_out)
    if args.labels is None:
        return 0
    best, curve = score.max_f1(pred, _read_labels(args.labels), args.thresholds)
    if args.out:
        Path(args.out).write_text(score.curve_csv(curve))
    print("best_f1=%.6f threshold=%.6f precision=%.6f recall=%.6f"
          % (best.f1, best.threshold, best.precision, best.recall))
    return 0


def cmd_consistency(args):
    mips = _read_mip_set(args.mips, tuple(args.dims) if args.dims else None)
    text = agree.cross_view_inconsistency(mips, args.dmax).to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_agree2d(args):
    ann = read_label_image(args.ann)
    proj = project.project_labels_any(_read_labels(args.labels), ann.axis)
    p, r = agree.pr_2d_vs_3d(ann.data == 1, proj)
    print("precision=%.6f recall=%.6f" % (p, r))
    if args.out:
        Path(args.out).write_text(agree.distance_match_curve(ann.data == 1, proj, args.dmax).to_csv())
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mipcarve", description="MIP-supervised volumetric delineation toolkit")
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (1 = deterministic)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("mip", help="maximum intensity projections of a volume")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--axis", default="all", help="0, 1, 2, a combination like 01, or all")
    s.add_argument("--out", required=True, help="output prefix")
    s.add_argument("--preview", action="store_true", help="also write 8-bit PGM previews")
    s.set_defaults(func=cmd_mip)

    for name, func, helptext in (("hull", cmd_hull, "visual hull of MIP annotations"),
                                 ("filter", cmd_filter, "drop labels outside the hull projection")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--mips", nargs="+", required=True)
        s.add_argument("--dims", type=int, nargs=3)
        if name == "hull":
            s.add_argument("--out", required=True)
        else:
            s.add_argument("--out-prefix", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("rasterize", help="labels from an SWC centerline file")
    s.add_argument("--swc", required=True)
    s.add_argument("--dims", type=int, nargs=3, required=True)
    s.add_argument("--width", type=int, default=11)
    s.add_argument("--axis", type=int, choices=(0, 1, 2), help="rasterize the projection onto this axis")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_rasterize)

    s = sub.add_parser("synth", help="generate a phantom with labels and MIP annotations")
    s.add_argument("--config", help="key=value phantom configuration")
    s.add_argument("--out-prefix", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--width", type=int, default=7)
    s.add_argument("--mips", default="all", help="axes to annotate, or none")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train a network")
    s.add_argument("--data", required=True)
    s.add_argument("--supervision", default="3d")
    s.add_argument("--iters", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    s.add_argument("--crop", type=int, nargs=3, default=list(TrainConfig.crop_size))
    s.add_argument("--base-channels", type=int, default=NetConfig.base_channels)
    s.add_argument("--out", required=True)
    s.add_argument("--trace")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="predict and score against 3D labels")
    s.add_argument("--net", required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--labels")
    s.add_argument("--thresholds", type=int, default=255)
    s.add_argument("--out")
    s.add_argument("--pred-out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("consistency", help="cross-view inconsistency curve")
    s.add_argument("--mips", nargs="+", required=True)
    s.add_argument("--dims", type=int, nargs=3)
    s.add_argument("--dmax", type=int, default=10)
    s.add_argument("--out")
    s.set_defaults(func=cmd_consistency)

    s = sub.add_parser("agree2d", help="2D annotation vs projected 3D labels")
    s.add_argument("--ann", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--dmax", type=int, default=10)
    s.add_argument("--out")
    s.set_defaults(func=cmd_agree2d)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(exc.code, str(exc), EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads < 1:
        return _fail("usage", "--threads must be >= 1", EXIT_USAGE)
    from threadpoolctl import threadpool_limits

    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except UsageError as exc:
        return _fail(exc.code, str(exc), EXIT_USAGE)
    except MipCarveError as exc:
        return _fail(exc.code, str(exc), exc.exit_status)
    except OSError as exc:
        return _fail("io", str(exc), 3)


if __name__ == "__main__":
    sys.exit(main())
