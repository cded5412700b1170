"""Command-line surface for the stereo reconstruction toolkit.

Subcommands: gen (render a dataset), train (one schedule stage), eval
(score a checkpoint against a dataset), infer (reconstruct one pair),
selftest (fast oracle suite). Every command is deterministic for a fixed
seed with --threads 1.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .autodiff import CheckpointError, NumericError, no_grad
from .metrics import MetricReport, chamfer_distance_eval, epe, iou, write_reports
from .nets import PRESETS, get_scale, load_pipeline
from .scenegen.camera import StereoCamera
from .scenegen.dataset import generate_dataset, load_sample, read_manifest
from .scenegen.formats import FormatError, read_ppm, write_ppm, write_ssdm, write_ssvx, write_ply
from .training import TrainPlan, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> _Parser:
    parser = _Parser(prog="stereo3d", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("SSR_THREADS", "1")),
                        help="worker threads where a command parallelizes "
                             "(default: SSR_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="render a synthetic stereo dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--width", type=int, default=224)
    g.add_argument("--height", type=int, default=224)
    g.add_argument("--focal-mm", type=float, default=35.0)
    g.add_argument("--sensor-mm", type=float, default=32.0)
    g.add_argument("--baseline-mm", type=float, default=130.0)
    g.add_argument("--voxel-res", type=int, default=32)
    g.add_argument("--n-gt", type=int, default=16384)
    g.add_argument("--jitter", action="store_true",
                   help="randomize camera distance and tilt per sample")
    g.add_argument("--kinds", default=None,
                   help="comma-separated shape kinds (default: all)")

    t = sub.add_parser("train", help="run one training stage")
    t.add_argument("--task", required=True,
                   choices=("volume", "point", "disparity"))
    t.add_argument("--data", required=True, help="dataset manifest path")
    t.add_argument("--scale", default="desk", choices=sorted(PRESETS))
    t.add_argument("--stage", default="rec-train",
                   choices=("disp-pretrain", "rec-train", "joint-finetune"))
    t.add_argument("--epochs", type=int, required=True)
    t.add_argument("--batch", type=int, default=4)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--decay-at", type=int, default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--no-disp", action="store_true")
    t.add_argument("--no-corr", action="store_true")
    t.add_argument("--disp-source", default="dispnetb",
                   choices=("dispnetb", "sgbm", "groundtruth"))
    t.add_argument("--unfreeze-disp", action="store_true")
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--resume", default=None)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--metrics", default=None,
                   help="comma list from iou,cd,epe (default: by task)")
    e.add_argument("--threshold", type=float, default=0.4)
    e.add_argument("--out", default=None, help="report path (default stdout)")

    i = sub.add_parser("infer", help="reconstruct one stereo pair")
    i.add_argument("--model", required=True)
    i.add_argument("--left", required=True, help="left view PPM")
    i.add_argument("--right", required=True, help="right view PPM")
    i.add_argument("--out", required=True, help="output directory")
    i.add_argument("--threshold", type=float, default=0.4)

    s = sub.add_parser("selftest", help="run the fast oracle suite")
    s.add_argument("--inject-nan", action="store_true",
                   help="corrupt one check to prove failures are caught")
    return parser


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    camera = StereoCamera(
        focal_length_mm=args.focal_mm, sensor_width_mm=args.sensor_mm,
        baseline_mm=args.baseline_mm, image_width_px=args.width,
        image_height_px=args.height,
    )
    kinds = tuple(args.kinds.split(",")) if args.kinds else None
    manifest = generate_dataset(
        args.out, args.count, args.seed, camera=camera,
        voxel_res=args.voxel_res, n_gt=args.n_gt, jitter=args.jitter,
        kinds=kinds, threads=max(1, args.threads),
    )
    print(manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    plan = TrainPlan(
        task=args.task, stage=args.stage, epochs=args.epochs,
        batch_size=args.batch, lr=args.lr, decay_at=args.decay_at,
        use_disp=not args.no_disp, use_corr=not args.no_corr,
        disp_source=args.disp_source, unfreeze_disp=args.unfreeze_disp,
        checkpoint_every=args.checkpoint_every,
    )
    scale = get_scale(args.scale)
    ckpt, curve = train(plan, args.data, scale, args.seed, args.out,
                        resume=args.resume)
    print(ckpt)
    print(curve)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _default_metrics(pipe) -> list[str]:
    metrics = ["iou" if pipe.task == "volume" else "cd"]
    if pipe.use_disp:
        metrics.append("epe")
    return metrics


def cmd_eval(args) -> int:
    pipe, _ = load_pipeline(args.model)
    if args.metrics is None:
        metrics = _default_metrics(pipe)
    else:
        metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
        for m in metrics:
            if m not in ("iou", "cd", "epe"):
                raise UsageError(f"unknown metric {m!r}")
    if "iou" in metrics and pipe.task != "volume":
        raise ValueError("iou requires a volume-task model")
    if "cd" in metrics and pipe.task != "point":
        raise ValueError("cd requires a point-task model")
    if "epe" in metrics and not pipe.use_disp:
        raise ValueError("epe requires a model with the disparity network")

    dirs = read_manifest(args.data)
    if not dirs:
        raise ValueError(f"manifest {args.data} lists no samples")
    reports = {m: MetricReport(m, threshold=args.threshold if m == "iou"
                               else None) for m in metrics}
    kinds: dict[str, str] = {}
    for d in dirs:
        s = load_sample(d)
        if s.left_rgb.shape[:2] != pipe.scale.input_size:
            raise ValueError(f"sample {d} does not match the model input size")
        sid = os.path.basename(d.rstrip("/"))
        kinds[sid] = str(s.meta.get("kind", ""))
        left = np.ascontiguousarray(s.left_rgb.transpose(2, 0, 1))[None]
        right = np.ascontiguousarray(s.right_rgb.transpose(2, 0, 1))[None]
        with no_grad():
            out = pipe.forward(left, right)
        if "iou" in reports:
            reports["iou"].add(sid, iou(out.prediction.data[0],
                                        s.voxels.occupancy, args.threshold))
        if "cd" in reports:
            reports["cd"].add(sid, chamfer_distance_eval(
                out.prediction.data[0], s.points.points))
        if "epe" in reports:
            e_l = epe(out.disp_left.data[0], s.disp_l, s.occl_l)
            e_r = epe(out.disp_right.data[0], s.disp_r, s.occl_r)
            reports["epe"].add(sid, 0.5 * (e_l + e_r))

    lines = _report_text(list(reports.values()), kinds)
    if args.out:
        write_reports(args.out, list(reports.values()))
        with open(args.out, "a", encoding="utf-8") as f:
            f.writelines(_kind_rows(list(reports.values()), kinds))
    sys.stdout.write(lines)
    return EXIT_OK


def _kind_rows(reports, kinds) -> list[str]:
    """Per-category mean rows, present only when kinds are recorded."""
    out = []
    for rep in reports:
        by_kind: dict[str, list[float]] = {}
        for sid, val in zip(rep.sample_ids, rep.values):
            kind = kinds.get(sid, "")
            if kind:
                by_kind.setdefault(kind, []).append(val)
        for kind in sorted(by_kind):
            mean = float(np.mean(by_kind[kind]))
            out.append(f"mean[kind={kind}]\t{rep.metric}\t{mean:.9g}\n")
    return out


def _report_text(reports, kinds) -> str:
    lines = ["sample_id\tmetric\tvalue\n"]
    for rep in reports:
        for sid, val in zip(rep.sample_ids, rep.values):
            lines.append(f"{sid}\t{rep.metric}\t{val:.9g}\n")
        lines.append(f"mean\t{rep.metric}\t{rep.mean:.9g}\n")
    lines.extend(_kind_rows(reports, kinds))
    return "".join(lines)


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def cmd_infer(args) -> int:
    pipe, _ = load_pipeline(args.model)
    left = read_ppm(args.left)
    right = read_ppm(args.right)
    if left.shape != right.shape:
        raise ValueError("left and right images differ in size")
    if left.shape[:2] != pipe.scale.input_size:
        raise ValueError(
            f"images are {left.shape[:2]}, model expects {pipe.scale.input_size}"
        )
    lb = np.ascontiguousarray(left.transpose(2, 0, 1))[None].astype(np.float32)
    rb = np.ascontiguousarray(right.transpose(2, 0, 1))[None].astype(np.float32)
    with no_grad():
        out = pipe.forward(lb, rb)

    os.makedirs(args.out, exist_ok=True)
    if pipe.use_disp:
        disp = out.disp_left.data[0].astype(np.float32)
        write_ssdm(os.path.join(args.out, "disparity_left.ssdm"), disp)
        write_ssdm(os.path.join(args.out, "disparity_right.ssdm"),
                   out.disp_right.data[0].astype(np.float32))
        shade = np.clip(disp / pipe.scale.max_disparity, 0.0, 1.0)
    else:
        shade = np.zeros(left.shape[:2], np.float32)
    montage = np.concatenate([left, np.repeat(shade[:, :, None], 3, axis=2)],
                             axis=1)
    write_ppm(os.path.join(args.out, "montage.ppm"), montage)

    pred = out.prediction.data[0]
    if pipe.task == "volume":
        occ = pred >= args.threshold
        write_ssvx(os.path.join(args.out, "prediction.ssvx"), occ)
        print(f"volume: {int(occ.sum())} voxels >= {args.threshold}")
    else:
        write_ply(os.path.join(args.out, "prediction.ply"),
                  pred.astype(np.float64))
        print(f"points: {pred.shape[0]}")
    print(args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def _check(name: str, ok: bool, failures: list):
    print(f"{'ok  ' if ok else 'FAIL'} {name}")
    if not ok:
        failures.append(name)


def cmd_selftest(args) -> int:
    from .autodiff import Tensor, check_gradients, ops, random_input
    from .metrics import chamfer_distance, disparity_loss, volume_loss
    from .nets import build_cost_volume
    from .scenegen.dataset import build_sample
    from .scenegen.geometry import depth_to_disparity

    failures: list = []
    rng = np.random.default_rng(99)

    def grad_err(f, tensors, poison=False):
        if poison:
            tensors[0].data.flat[0] = np.nan
        try:
            return max(check_gradients(f, tensors, seed=s) for s in range(2))
        except NumericError:
            return float("inf")

    gt_l = rng.uniform(0, 10, (2, 4, 4))
    gt_r = rng.uniform(0, 10, (2, 4, 4))
    occ_t = rng.random((2, 3, 3, 3)) > 0.5
    gt_pts = rng.random((9, 3))
    checks = [
        ("grad mul", grad_err(lambda a, b: ops.sum_(ops.mul(a, b)),
                              [random_input((3, 4), 1), random_input((3, 4), 2)],
                              poison=args.inject_nan)),
        ("grad sigmoid", grad_err(lambda a: ops.sum_(ops.sigmoid(a)),
                                  [random_input((5,), 3)])),
        ("grad conv2d",
         grad_err(lambda x, w, b: ops.sum_(ops.conv2d(x, w, b, stride=2,
                                                      padding=1)),
                  [random_input((1, 2, 6, 6), 4), random_input((3, 2, 3, 3), 5),
                   random_input((3,), 10)])),
        ("grad disparity loss",
         grad_err(lambda a, b: disparity_loss(a, b, gt_l, gt_r),
                  [random_input((2, 4, 4), 6, lo=0.0, hi=10.0),
                   random_input((2, 4, 4), 7, lo=0.0, hi=10.0)])),
        ("grad volume loss",
         grad_err(lambda p: volume_loss(p, occ_t),
                  [random_input((2, 3, 3, 3), 8, lo=0.05, hi=0.95)])),
        ("grad chamfer",
         grad_err(lambda p: chamfer_distance(p, gt_pts),
                  [random_input((6, 3), 9)])),
    ]
    for name, err in checks:
        _check(name, err < 1e-4, failures)

    # metric oracles
    a = rng.random((40, 3))
    b = rng.random((30, 3))
    naive = chamfer_distance_eval(a, b, method="naive")
    fast = chamfer_distance_eval(a, b, method="grid")
    _check("chamfer grid vs naive", abs(naive - fast) < 1e-12, failures)
    _check("chamfer self", chamfer_distance_eval(a, a) == 0.0, failures)
    va = rng.random((8, 8, 8))
    vb = rng.random((8, 8, 8)) > 0.5
    ia = va > 0.4
    want = (ia & vb).sum() / max((ia | vb).sum(), 1)
    _check("iou set arithmetic", abs(iou(va, vb) - want) < 1e-15, failures)
    _check("iou self", iou(vb, vb) == 1.0, failures)

    # cost volume vs per-pixel oracle
    l = rng.random((1, 2, 3, 6)).astype(np.float32)
    r = rng.random((1, 2, 3, 6)).astype(np.float32)
    cv = build_cost_volume(Tensor(l), Tensor(r), 3).data
    ok = True
    for i in range(4):
        for x in range(6):
            want_r = r[0, :, :, x - i] if x - i >= 0 else np.zeros((2, 3), np.float32)
            ok = ok and np.array_equal(cv[0, 2:, i, :, x], want_r)
            ok = ok and np.array_equal(cv[0, :2, i, :, x], l[0, :, :, x])
    _check("cost volume oracle", ok, failures)

    # geometry oracles on one rendered sample
    cam = StereoCamera(image_width_px=48, image_height_px=48)
    s = build_sample(7, 0, cam, voxel_res=16, n_gt=512)
    _check("disparity depth identity",
           np.array_equal(depth_to_disparity(s.depth_l, s.camera), s.disp_l),
           failures)
    xs = np.arange(48)[None, :]
    target = np.clip(np.rint(xs - s.disp_l).astype(int), 0, 47)
    resampled = np.take_along_axis(s.disp_r, target, 1)
    consistent = np.abs(s.disp_l - resampled) <= 1.0
    _check("left-right consistency", consistent[~s.occl_l].mean() >= 0.99,
           failures)
    res = s.voxels.resolution
    ijk = np.clip(np.floor((s.points.points + 0.5) * res).astype(int),
                  0, res - 1)
    inside = s.voxels.occupancy[ijk[:, 0], ijk[:, 1], ijk[:, 2]].mean()
    _check("points inside voxels", inside >= 0.99, failures)

    if failures:
        print(f"{len(failures)} check(s) failed")
        return EXIT_NUMERIC
    print("all checks passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry
# ---------------------------------------------------------------------------

_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, CheckpointError, FileNotFoundError, NotADirectoryError,
            IsADirectoryError, PermissionError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
