"""Training losses and evaluation metrics.

Losses (disparity MSE, voxel BCE, Chamfer distance) run on autodiff Tensors
and are differentiable; IoU and EPE are evaluation-only and work on plain
arrays. Chamfer additionally has a uniform-grid accelerated evaluation path
that agrees with the quadratic one to float precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError, Tensor, ops

PROB_EPS = 1e-12


def _same_shape(*arrays):
    ref = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != ref:
            raise ShapeError(f"shape mismatch: {[a.shape for a in arrays]}")


# ---------------------------------------------------------------------------
# losses (differentiable)
# ---------------------------------------------------------------------------

def disparity_loss(pred_left: Tensor, pred_right: Tensor, gt_left, gt_right) -> Tensor:
    """Mean over batch of (1/(H*W)) * sum(|dL|^2 + |dR|^2) over each map.

    Accepts [H,W], [N,H,W] or [N,1,H,W]; all four arguments must share one
    shape. Background pixels carry ground-truth disparity 0 and are included
    in the mean.
    """
    gt_left = gt_left if isinstance(gt_left, Tensor) else Tensor(np.asarray(gt_left, pred_left.dtype))
    gt_right = gt_right if isinstance(gt_right, Tensor) else Tensor(np.asarray(gt_right, pred_right.dtype))
    _same_shape(pred_left, pred_right, gt_left, gt_right)
    h, w = pred_left.shape[-2], pred_left.shape[-1]
    err = ops.add(
        ops.square(ops.sub(pred_left, gt_left)),
        ops.square(ops.sub(pred_right, gt_right)),
    )
    if err.data.ndim == 2:
        return ops.scale(ops.sum_(err), 1.0 / (h * w))
    per_item = ops.sum_(err, axis=tuple(range(1, err.data.ndim)))
    return ops.mean(ops.scale(per_item, 1.0 / (h * w)))


def volume_loss(pred: Tensor, target) -> Tensor:
    """Voxel-wise binary cross entropy, averaged over voxels and batch.

    ``pred`` holds occupancy probabilities, ``target`` booleans (or 0/1).
    Probabilities are clipped to [1e-12, 1 - 1e-12] before the log.
    """
    t = np.asarray(target)
    if t.shape != pred.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {t.shape}")
    t = t.astype(pred.dtype)
    p = ops.clip(pred, PROB_EPS, 1.0 - PROB_EPS)
    pos = ops.mul(Tensor(t), ops.log(p))
    neg = ops.mul(Tensor(1.0 - t), ops.log(1.0 - p))
    return ops.scale(ops.mean(ops.add(pos, neg)), -1.0)


def _chamfer_single(pred: Tensor, gt: np.ndarray) -> Tensor:
    n_p = pred.shape[0]
    n_gt = gt.shape[0]
    g = Tensor(np.asarray(gt, pred.dtype))
    diff = ops.sub(ops.reshape(g, (n_gt, 1, 3)), ops.reshape(pred, (1, n_p, 3)))
    d2 = ops.sum_(ops.square(diff), axis=2)  # [n_gt, n_p]
    to_pred = ops.mean(ops.min_reduce(d2, axis=1))
    to_gt = ops.mean(ops.min_reduce(d2, axis=0))
    return ops.add(to_pred, to_gt)


def chamfer_distance(pred: Tensor, gt) -> Tensor:
    """Symmetric squared-distance Chamfer loss, differentiable in ``pred``.

    pred: Tensor [n_p, 3] or [N, n_p, 3]; gt: array with matching nesting.
    Each direction averages the min squared distance over its source set;
    batched input averages the per-item values.
    """
    if not isinstance(pred, Tensor):
        pred = Tensor(pred)
    gt = np.asarray(gt)
    if pred.data.ndim == 2:
        if pred.shape[0] < 1 or gt.shape[0] < 1:
            raise ValueError("chamfer distance needs non-empty point sets")
        if pred.shape[1] != 3 or gt.shape[1] != 3:
            raise ShapeError(f"points must be [n, 3]: {pred.shape}, {gt.shape}")
        return _chamfer_single(pred, gt)
    if pred.data.ndim != 3 or gt.ndim != 3:
        raise ShapeError(f"bad chamfer shapes: {pred.shape}, {gt.shape}")
    if pred.shape[0] != gt.shape[0]:
        raise ShapeError(f"batch mismatch: {pred.shape} vs {gt.shape}")
    n = pred.shape[0]
    total = None
    for i in range(n):
        item = _chamfer_single(ops.select_batch(pred, i), gt[i])
        total = item if total is None else ops.add(total, item)
    return ops.scale(total, 1.0 / n)


# ---------------------------------------------------------------------------
# chamfer evaluation paths
# ---------------------------------------------------------------------------

def _min_sqdist_naive(queries: np.ndarray, refs: np.ndarray, block: int = 512) -> np.ndarray:
    """Min squared distance from each query to refs, O(nq*nr), blocked."""
    out = np.empty(len(queries))
    for s in range(0, len(queries), block):
        q = queries[s : s + block]
        d2 = ((q[:, None, :] - refs[None, :, :]) ** 2).sum(axis=2)
        out[s : s + block] = d2.min(axis=1)
    return out


def _min_sqdist_grid(queries: np.ndarray, refs: np.ndarray) -> np.ndarray:
    """Exact nearest squared distance via a uniform cell grid.

    Cells are sized for roughly one ref per cell; each query walks outward
    over Chebyshev shells of cells and stops once no unexplored shell can
    beat the best distance found. Distances use the same subtract-square-sum
    arithmetic as the naive path, so results agree to float precision.
    """
    refs = np.asarray(refs, np.float64)
    queries = np.asarray(queries, np.float64)
    n = len(refs)
    lo = refs.min(axis=0)
    ext = refs.max(axis=0) - lo
    vol = float(np.prod(ext))
    if vol > 0:
        cell = (vol / n) ** (1.0 / 3.0)
    else:
        cell = (float(ext.max()) or 1.0) / max(1.0, round(n ** (1.0 / 3.0)))
    dims = np.floor(ext / cell).astype(np.int64) + 1
    while int(np.prod(dims)) > 8 * n:
        cell *= (int(np.prod(dims)) / (8.0 * n)) ** (1.0 / 3.0)
        dims = np.floor(ext / cell).astype(np.int64) + 1
    dx, dy, dz = (int(d) for d in dims)

    ci = np.floor((refs - lo) / cell).astype(np.int64)
    ci = np.minimum(ci, dims - 1)
    flat = (ci[:, 0] * dy + ci[:, 1]) * dz + ci[:, 2]
    order = np.argsort(flat, kind="stable")
    sorted_flat = flat[order]
    ncells = dx * dy * dz
    starts = np.searchsorted(sorted_flat, np.arange(ncells + 1))

    qc = np.floor((queries - lo) / cell).astype(np.int64)
    out = np.empty(len(queries))
    for qi in range(len(queries)):
        q = queries[qi]
        cx, cy, cz = qc[qi]
        max_r = max(
            cx, dx - 1 - cx if dx - 1 - cx > 0 else 0,
            cy, dy - 1 - cy if dy - 1 - cy > 0 else 0,
            cz, dz - 1 - cz if dz - 1 - cz > 0 else 0,
        )
        max_r = max(max_r, abs(min(cx, 0)), abs(min(cy, 0)), abs(min(cz, 0)))
        best = np.inf
        for r in range(max_r + 1):
            if best < np.inf and r >= 1 and ((r - 1) * cell) ** 2 > best:
                break
            for x in range(max(cx - r, 0), min(cx + r, dx - 1) + 1):
                for y in range(max(cy - r, 0), min(cy + r, dy - 1) + 1):
                    on_xy_shell = abs(x - cx) == r or abs(y - cy) == r
                    z_lo, z_hi = max(cz - r, 0), min(cz + r, dz - 1)
                    if z_lo > z_hi:
                        continue
                    if on_xy_shell:
                        zs = range(z_lo, z_hi + 1)
                    else:
                        zs = [z for z in (cz - r, cz + r) if z_lo <= z <= z_hi]
                    for z in zs:
                        c = (x * dy + y) * dz + z
                        s, e = starts[c], starts[c + 1]
                        if s == e:
                            continue
                        cand = refs[order[s:e]]
                        d2 = ((q[None, :] - cand) ** 2).sum(axis=1).min()
                        if d2 < best:
                            best = d2
        out[qi] = best
    return out


def chamfer_distance_eval(pred, gt, method: str = "grid") -> float:
    """Non-differentiable Chamfer for evaluation; pred and gt are [n, 3]."""
    pred = np.asarray(pred, np.float64)
    gt = np.asarray(gt, np.float64)
    if pred.ndim != 2 or gt.ndim != 2 or pred.shape[1] != 3 or gt.shape[1] != 3:
        raise ShapeError(f"points must be [n, 3]: {pred.shape}, {gt.shape}")
    if len(pred) < 1 or len(gt) < 1:
        raise ValueError("chamfer distance needs non-empty point sets")
    if method == "grid":
        f = _min_sqdist_grid
    elif method == "naive":
        f = _min_sqdist_naive
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(f(gt, pred).mean() + f(pred, gt).mean())


# ---------------------------------------------------------------------------
# evaluation metrics
# ---------------------------------------------------------------------------

def iou(pred, target, threshold: float = 0.4) -> float:
    """Intersection over union of {pred > threshold} and the target set.

    Empty union counts as perfect agreement (1.0).
    """
    pred = np.asarray(pred)
    tgt = np.asarray(target).astype(bool)
    if pred.shape != tgt.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {tgt.shape}")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1): {threshold}")
    hard = pred > threshold
    union = np.logical_or(hard, tgt).sum()
    if union == 0:
        return 1.0
    inter = np.logical_and(hard, tgt).sum()
    return float(inter) / float(union)


def epe(pred, gt, excluded_mask) -> float:
    """Mean absolute disparity error over pixels not marked excluded.

    ``excluded_mask`` is True where a pixel must be skipped (occluded, or
    background if the caller folds that in).
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    mask = np.asarray(excluded_mask).astype(bool)
    if pred.shape != gt.shape or mask.shape != gt.shape:
        raise ShapeError(f"shape mismatch: {pred.shape}, {gt.shape}, {mask.shape}")
    keep = ~mask
    if not keep.any():
        raise ValueError("no pixels left after exclusion mask")
    return float(np.abs(pred[keep] - gt[keep]).mean())


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    metric: str
    sample_ids: list = field(default_factory=list)
    values: list = field(default_factory=list)
    threshold: float | None = None

    def add(self, sample_id: str, value: float):
        self.sample_ids.append(str(sample_id))
        self.values.append(float(value))

    @property
    def count(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        if not self.values:
            raise ValueError(f"empty report for {self.metric!r}")
        return float(np.mean(self.values))


def write_reports(path: str, reports) -> None:
    """TSV with one row per (sample, metric) plus a trailing mean row each."""
    lines = ["sample_id\tmetric\tvalue\n"]
    for rep in reports:
        for sid, val in zip(rep.sample_ids, rep.values):
            lines.append(f"{sid}\t{rep.metric}\t{val:.9g}\n")
        lines.append(f"mean\t{rep.metric}\t{rep.mean:.9g}\n")
    with open(path, "w") as f:
        f.writelines(lines)
