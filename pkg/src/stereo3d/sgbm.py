"""Semi-global block matching: a non-learned disparity source.

Costs are either census-Hamming (default, robust to smooth shading
gradients) or block SAD. Aggregation runs the usual semi-global recurrence
along 1, 2, 4, or 8 scanline directions, followed by winner-take-all with
parabolic sub-pixel refinement. Pixels failing the uniqueness or left-right
consistency checks are masked invalid rather than guessed; fill_background
patches them with the nearer-to-background neighbor for consumers that need
dense maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_DIRECTIONS_8 = ((0, 1), (0, -1), (-1, 0), (1, 0), (-1, 1), (-1, -1), (1, 1), (1, -1))


@dataclass(frozen=True)
class SgmParams:
    d_max: int = 48
    block_radius: int = 2
    p1: float = 3.0
    p2: float = 40.0
    paths: int = 4
    uniqueness_ratio: float = 1.05
    cost: str = "census"
    census_window: int = 5
    photometric_gate: float | None = 0.03
    min_raw_variation: float = 1.0
    zero_disparity_gate: float | None = 1e-3

    def __post_init__(self):
        if self.d_max < 1:
            raise ValueError("d_max must be >= 1")
        if not 0 < self.p1 < self.p2:
            raise ValueError("need P2 > P1 > 0")
        if self.paths not in (1, 2, 4, 8):
            raise ValueError("paths must be 1, 2, 4, or 8")
        if self.cost not in ("census", "sad"):
            raise ValueError(f"unknown cost kind {self.cost!r}")
        if self.census_window % 2 == 0 or self.census_window < 3:
            raise ValueError("census window must be odd and >= 3")
        if self.block_radius < 1:
            raise ValueError("block radius must be >= 1")
        if self.photometric_gate is not None and self.photometric_gate <= 0:
            raise ValueError("photometric gate must be positive or None")
        if self.min_raw_variation < 0:
            raise ValueError("min raw variation must be >= 0")
        if self.zero_disparity_gate is not None and self.zero_disparity_gate <= 0:
            raise ValueError("zero-disparity gate must be positive or None")


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """Rec. 601 luminance of an [H, W, 3] image in [0, 1]."""
    img = np.asarray(rgb, np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected [H, W, 3] image, got {img.shape}")
    return img @ np.array([0.299, 0.587, 0.114])


def _census_words(gray: np.ndarray, window: int) -> np.ndarray:
    """Bit pattern of (neighbor < center) over the window, edge-padded."""
    r = window // 2
    h, w = gray.shape
    padded = np.pad(gray, r, mode="edge")
    words = np.zeros((h, w), np.uint64)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            bit = padded[r + dy : r + dy + h, r + dx : r + dx + w] < gray
            words = (words << np.uint64(1)) | bit.astype(np.uint64)
    return words


def _box_sum(a: np.ndarray, radius: int) -> np.ndarray:
    padded = np.pad(a, radius, mode="edge")
    k = 2 * radius + 1
    return sliding_window_view(padded, (k, k)).sum((-1, -2))


def max_cost(params: SgmParams) -> float:
    """Worst achievable matching cost; also assigned to out-of-range shifts."""
    if params.cost == "census":
        return float(params.census_window**2 - 1)
    return float((2 * params.block_radius + 1) ** 2)


def matching_cost(left_gray: np.ndarray, right_gray: np.ndarray,
                  params: SgmParams) -> np.ndarray:
    """Per-pixel cost volume [H, W, d_max + 1] for left-image disparities."""
    left_gray = np.asarray(left_gray, np.float64)
    right_gray = np.asarray(right_gray, np.float64)
    if left_gray.shape != right_gray.shape or left_gray.ndim != 2:
        raise ValueError(
            f"grayscale shapes must match: {left_gray.shape} vs {right_gray.shape}"
        )
    h, w = left_gray.shape
    if params.d_max >= w:
        raise ValueError(f"d_max {params.d_max} must be < image width {w}")
    cost = np.full((h, w, params.d_max + 1), max_cost(params))
    if params.cost == "census":
        wl = _census_words(left_gray, params.census_window)
        wr = _census_words(right_gray, params.census_window)
        for d in range(params.d_max + 1):
            stop = w - d
            ham = np.bitwise_count(wl[:, d:] ^ wr[:, :stop])
            cost[:, d:, d] = ham
    else:
        for d in range(params.d_max + 1):
            stop = w - d
            sad = _box_sum(np.abs(left_gray[:, d:] - right_gray[:, :stop]),
                           params.block_radius)
            cost[:, d:, d] = sad
    return cost


def _directional_pass(cost: np.ndarray, dy: int, dx: int,
                      p1: float, p2: float) -> np.ndarray:
    """One semi-global sweep; vectorized across the off-path axis."""
    h, w, nd = cost.shape
    out = np.empty_like(cost)
    # walk columns for horizontal/diagonal paths, rows for vertical ones
    along_x = dx != 0
    steps = w if along_x else h
    order = range(steps) if (dx if along_x else dy) > 0 else range(steps - 1, -1, -1)
    prev = None  # L at the previous step, [off_axis, nd]
    for i in order:
        c = cost[:, i, :] if along_x else cost[i, :, :]
        if prev is None:
            cur = c.copy()
        else:
            shifted = prev
            off = dy if along_x else dx
            if off:
                # diagonal: predecessor sits one pixel over on the off axis
                shifted = np.full_like(prev, np.inf)
                if off > 0:
                    shifted[off:] = prev[:-off]
                else:
                    shifted[:off] = prev[-off:]
            # border pixels with no predecessor restart the path; give them
            # dummy finite values so the arithmetic below stays warning-free
            edge = ~np.isfinite(shifted).all(1)
            shifted = np.where(edge[:, None], 0.0, shifted)
            best = shifted.min(1)
            m = np.minimum(shifted, best[:, None] + p2)
            m[:, 1:] = np.minimum(m[:, 1:], shifted[:, :-1] + p1)
            m[:, :-1] = np.minimum(m[:, :-1], shifted[:, 1:] + p1)
            # subtracting before adding keeps the zero-penalty case exactly
            # equal to the raw cost (m == best there)
            cur = c + (m - best[:, None])
            cur[edge] = c[edge]
        if along_x:
            out[:, i, :] = cur
        else:
            out[i, :, :] = cur
        prev = cur
    return out


def aggregate_sgm(cost: np.ndarray, params: SgmParams,
                  p1: float | None = None, p2: float | None = None) -> np.ndarray:
    """Sum of directional passes over params.paths directions.

    p1/p2 override the params penalties when given; passing zeros collapses
    every pass to the raw cost, so the result is paths x cost.
    """
    cost = np.asarray(cost, np.float64)
    if cost.ndim != 3:
        raise ValueError(f"cost must be [H, W, D], got {cost.shape}")
    p1 = params.p1 if p1 is None else p1
    p2 = params.p2 if p2 is None else p2
    passes = [
        _directional_pass(cost, dy, dx, p1, p2)
        for dy, dx in _DIRECTIONS_8[: params.paths]
    ]
    # pairwise tree sum: with zero penalties every pass equals the raw cost
    # and the total stays exactly paths x cost (path counts are powers of 2)
    while len(passes) > 1:
        passes = [a + b for a, b in zip(passes[0::2], passes[1::2])]
    return passes[0]


def _unique_at(vol: np.ndarray, d0: np.ndarray, ratio: float,
               in_range: np.ndarray) -> np.ndarray:
    """True where the second-best in-range cost outside d0 +- 1 is clearly worse.

    Out-of-range disparities are excluded from the comparison so the max-cost
    wall near the left border cannot stand in for a real runner-up; pixels
    with no eligible runner-up count as non-unique.
    """
    nd = vol.shape[2]
    c0 = np.take_along_axis(vol, d0[:, :, None], 2)[:, :, 0]
    ineligible = np.abs(np.arange(nd)[None, None, :] - d0[:, :, None]) <= 1
    masked = np.where(ineligible | ~in_range, np.inf, vol)
    second = masked.min(2)
    return np.isfinite(second) & (second > ratio * c0)


def _raw_variation(raw: np.ndarray, in_range: np.ndarray) -> np.ndarray:
    """Spread (max - min) of the in-range raw costs per pixel.

    Texture-free input gives a perfectly flat raw profile, yet path
    aggregation still builds a spurious slope out of the left-border wall;
    requiring actual variation in the data term keeps such pixels invalid
    instead of confidently zero. Pixels with a single in-range candidate
    have zero spread and fail too.
    """
    lo = np.where(in_range, raw, np.inf).min(2)
    hi = np.where(in_range, raw, -np.inf).max(2)
    return hi - lo


def _wta_subpixel(agg: np.ndarray, raw: np.ndarray, params: SgmParams,
                  in_range: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Winner-take-all disparity with parabolic refinement and uniqueness.

    The winner must be unique in the aggregated volume and the raw data term
    must show some variation across candidates (see _raw_variation).
    """
    h, w, nd = agg.shape
    d0 = agg.argmin(2)
    c0 = np.take_along_axis(agg, d0[:, :, None], 2)[:, :, 0]
    unique = _unique_at(agg, d0, params.uniqueness_ratio, in_range)
    unique &= _raw_variation(raw, in_range) >= params.min_raw_variation

    disp = d0.astype(np.float64)
    interior = (d0 > 0) & (d0 < nd - 1)
    ym = np.take_along_axis(agg, np.maximum(d0 - 1, 0)[:, :, None], 2)[:, :, 0]
    yp = np.take_along_axis(agg, np.minimum(d0 + 1, nd - 1)[:, :, None], 2)[:, :, 0]
    denom = ym - 2.0 * c0 + yp
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = (ym - yp) / (2.0 * denom)
    refine = interior & (denom > 0)
    disp[refine] += np.clip(delta[refine], -0.5, 0.5)
    return disp, unique


def sgbm_disparity(
    left_rgb: np.ndarray, right_rgb: np.ndarray, params: SgmParams | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Both disparity maps plus validity masks for a rectified pair."""
    params = params or SgmParams()
    gl = to_gray(left_rgb)
    gr = to_gray(right_rgb)

    raw_l = matching_cost(gl, gr, params)
    # right view matches toward +x; mirroring both images reuses the
    # left-view machinery and mirrors the cost volume back
    raw_r = matching_cost(gr[:, ::-1], gl[:, ::-1], params)
    agg_l = aggregate_sgm(raw_l, params)
    agg_r = aggregate_sgm(raw_r, params)[:, ::-1, :]
    raw_r = raw_r[:, ::-1, :]

    h, w = gl.shape
    xs = np.arange(w)[None, :]
    ds = np.arange(params.d_max + 1)[None, None, :]
    range_l = np.broadcast_to(xs[:, :, None] - ds >= 0, raw_l.shape)
    range_r = np.broadcast_to(xs[:, :, None] + ds < w, raw_r.shape)

    disp_l, uniq_l = _wta_subpixel(agg_l, raw_l, params, range_l)
    disp_r, uniq_r = _wta_subpixel(agg_r, raw_r, params, range_r)

    def consistent(d_a: np.ndarray, d_b: np.ndarray, sign: int) -> np.ndarray:
        target = xs + sign * np.rint(d_a).astype(int)
        inb = (target >= 0) & (target < w)
        other = np.take_along_axis(d_b, np.clip(target, 0, w - 1), 1)
        return inb & (np.abs(d_a - other) <= 1.0)

    def photometric(d_a: np.ndarray, g_a: np.ndarray, g_b: np.ndarray,
                    sign: int) -> np.ndarray:
        # a match onto a differently shaded surface point gives itself away
        # at the center pixel even when the window context agrees
        if params.photometric_gate is None:
            return np.ones(g_a.shape, bool)
        target = np.clip(xs + sign * np.rint(d_a).astype(int), 0, w - 1)
        other = np.take_along_axis(g_b, target, 1)
        return np.abs(g_a - other) <= params.photometric_gate

    def unambiguous(d_a: np.ndarray, g_a: np.ndarray, g_b: np.ndarray) -> np.ndarray:
        # edge fattening bleeds a silhouette's disparity onto flat background
        # pixels whose window sees the edge; they pass every window-level
        # check because background matches background exactly. But their
        # center intensity also matches at zero disparity (same column), so
        # the center cannot tell the estimate from "infinitely far": reject.
        if params.zero_disparity_gate is None:
            return np.ones(g_a.shape, bool)
        same = np.abs(g_a - g_b) <= params.zero_disparity_gate
        return ~(same & (d_a > 0.5))

    valid_l = (uniq_l & consistent(disp_l, disp_r, -1)
               & photometric(disp_l, gl, gr, -1) & unambiguous(disp_l, gl, gr))
    valid_r = (uniq_r & consistent(disp_r, disp_l, +1)
               & photometric(disp_r, gr, gl, +1) & unambiguous(disp_r, gr, gl))
    return (
        disp_l.astype(np.float32),
        disp_r.astype(np.float32),
        valid_l,
        valid_r,
    )


def fill_background(disp: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Fill invalid pixels from the smaller (farther) horizontal neighbor.

    Rows with no valid pixel at all fall back to zero disparity.
    """
    disp = np.asarray(disp)
    if disp.shape != valid.shape:
        raise ValueError("disparity and validity shapes differ")
    h, w = disp.shape
    out = disp.astype(np.float32).copy()
    cols = np.arange(w)
    for y in range(h):
        v = valid[y]
        if not v.any():
            out[y] = 0.0
            continue
        idx = np.where(v, cols, -1)
        left_src = np.maximum.accumulate(idx)
        idx = np.where(v, cols, w)
        right_src = np.minimum.accumulate(idx[::-1])[::-1]
        lv = np.where(left_src >= 0, out[y, np.clip(left_src, 0, w - 1)], np.inf)
        rv = np.where(right_src < w, out[y, np.clip(right_src, 0, w - 1)], np.inf)
        out[y] = np.where(v, out[y], np.minimum(lv, rv))
    return out
