"""Benchmark metrics: boundary F-measure, simplified region-level
precision/recall, segmentation covering, ODS/OIS/AP aggregation, PR-curve
emission, and exhaustive grid search.

Boundary extraction uses the one-sided crack convention: pixel (y, x) is a
boundary pixel iff its label differs from (y, x+1) or (y+1, x). With the
two-sided alternative a one-pixel shift would still match half the pixels at
tolerance 0; one-sided extraction keeps shifted boundaries disjoint.

Empty-denominator convention: precision with no machine boundary (and recall
with no ground-truth boundary) is 1.0, so identical single-label maps score
F = 1 while a boundaryless machine against a real ground truth scores F = 0.
"""

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvariantError

NEG_INF = float("-inf")


@dataclass(frozen=True)
class PrPoint:
    """One precision/recall sample, carrying its match counts for aggregation."""

    threshold: float
    precision: float
    recall: float
    f_measure: float
    p_num: int = 0
    p_den: int = 0
    r_num: int = 0
    r_den: int = 0


def _f_measure(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _ratio(num, den):
    return num / den if den > 0 else 1.0


def _pr_point(threshold, p_num, p_den, r_num, r_den):
    p = _ratio(p_num, p_den)
    r = _ratio(r_num, r_den)
    return PrPoint(threshold, p, r, _f_measure(p, r), p_num, p_den, r_num, r_den)


@dataclass(frozen=True)
class BenchmarkSummary:
    ods: float
    ois: float
    ap: float

    def to_dict(self):
        return {"ods": self.ods, "ois": self.ois, "ap": self.ap}


def _check_dims(machine, gt):
    if (machine.height, machine.width) != (gt.height, gt.width):
        raise DimensionMismatchError(
            f"machine {machine.height}x{machine.width} vs gt {gt.height}x{gt.width}"
        )


def boundary_pixels(labels):
    """(n, 2) coordinates of one-sided boundary pixels (label differs right or down)."""
    arr = labels.labels
    bnd = np.zeros(arr.shape, dtype=bool)
    bnd[:, :-1] |= arr[:, :-1] != arr[:, 1:]
    bnd[:-1, :] |= arr[:-1, :] != arr[1:, :]
    return np.argwhere(bnd)


def boundary_f(machine, gt, tol=2.0, threshold=0.0):
    """Boundary precision/recall under greedy one-to-one matching.

    Machine and ground-truth boundary pixels are matched in increasing-distance
    order (ties by pixel index), each pixel used at most once, matches only
    within Euclidean `tol`.
    """
    _check_dims(machine, gt)
    mb = boundary_pixels(machine)
    gb = boundary_pixels(gt)
    matched = 0
    if len(mb) and len(gb):
        d = np.linalg.norm(mb[:, None, :] - gb[None, :, :], axis=2)
        mi, gi = np.nonzero(d <= tol)
        order = np.lexsort((gi, mi, d[mi, gi]))
        m_used = np.zeros(len(mb), dtype=bool)
        g_used = np.zeros(len(gb), dtype=bool)
        for idx in order:
            a, b = mi[idx], gi[idx]
            if not m_used[a] and not g_used[b]:
                m_used[a] = g_used[b] = True
                matched += 1
    return _pr_point(threshold, matched, len(mb), matched, len(gb))


def _contingency(machine, gt):
    m = machine.labels.ravel()
    g = gt.labels.ravel()
    mk, gk = machine.segment_count, gt.segment_count
    counts = np.bincount(m * gk + g, minlength=mk * gk).reshape(mk, gk)
    return counts


def _jaccard_table(machine, gt):
    inter = _contingency(machine, gt).astype(np.float64)
    m_area = inter.sum(axis=1, keepdims=True)
    g_area = inter.sum(axis=0, keepdims=True)
    return inter / (m_area + g_area - inter)


def region_f(machine, gt, jaccard_gamma=0.5, threshold=0.0):
    """Object-level precision/recall from best-Jaccard matching.

    A machine region is a detection if its best overlap with any ground-truth
    region reaches the Jaccard threshold; recall counts ground-truth regions
    claimed by a one-to-one assignment of qualifying pairs in descending
    Jaccard order.
    """
    _check_dims(machine, gt)
    jac = _jaccard_table(machine, gt)
    mk, gk = jac.shape
    detected = int(np.sum(jac.max(axis=1) >= jaccard_gamma))
    mi, gi = np.nonzero(jac >= jaccard_gamma)
    order = np.lexsort((gi, mi, -jac[mi, gi]))
    m_used = np.zeros(mk, dtype=bool)
    g_used = np.zeros(gk, dtype=bool)
    claimed = 0
    for idx in order:
        a, b = mi[idx], gi[idx]
        if not m_used[a] and not g_used[b]:
            m_used[a] = g_used[b] = True
            claimed += 1
    return _pr_point(threshold, detected, mk, claimed, gk)


def covering(machine, gt):
    """Area-weighted best Jaccard overlap of each ground-truth region: in [0, 1]."""
    _check_dims(machine, gt)
    jac = _jaccard_table(machine, gt)
    g_area = _contingency(machine, gt).sum(axis=0).astype(np.float64)
    # summed smallest-first so nominal label ids cannot perturb the last ulp
    return float(np.sort(g_area * jac.max(axis=0)).sum() / g_area.sum())


def pooled_curve(per_image_curves):
    """Dataset-level PR curve: match counts summed across images per threshold."""
    if not per_image_curves:
        raise InvariantError("no curves to pool")
    grids = [tuple(pt.threshold for pt in curve) for curve in per_image_curves]
    if len(set(grids)) != 1:
        raise InvariantError("curves must share one threshold grid")
    thresholds = grids[0]
    if not thresholds:
        raise InvariantError("curves are empty")
    pooled = []
    for t_idx, t in enumerate(thresholds):
        pts = [curve[t_idx] for curve in per_image_curves]
        pooled.append(
            _pr_point(
                t,
                sum(pt.p_num for pt in pts),
                sum(pt.p_den for pt in pts),
                sum(pt.r_num for pt in pts),
                sum(pt.r_den for pt in pts),
            )
        )
    return pooled


def aggregate(per_image_curves):
    """ODS/OIS/AP over per-image PR curves sampled on one shared threshold grid.

    ODS pools the match counts across images per threshold and takes the best
    pooled F. OIS averages each image's own best F. AP integrates the pooled
    precision over recall (trapezoid) after enforcing a monotone precision
    envelope, extending the envelope horizontally down to recall 0.
    """
    pooled = pooled_curve(per_image_curves)
    ods = max(pt.f_measure for pt in pooled)
    ois = float(np.mean([max(pt.f_measure for pt in curve) for curve in per_image_curves]))

    by_recall = sorted(pooled, key=lambda pt: pt.recall)
    recalls = np.array([pt.recall for pt in by_recall])
    precisions = np.array([pt.precision for pt in by_recall])
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    recalls = np.concatenate([[0.0], recalls])
    envelope = np.concatenate([[envelope[0]], envelope])
    ap = float(np.trapezoid(envelope, recalls))
    return BenchmarkSummary(ods=ods, ois=ois, ap=ap)


def grid_search(space, evaluate):
    """Exhaustive search over the Cartesian product of `space` values.

    evaluate(params_dict) returns the objective to maximize; any exception
    scores that point -inf and is recorded. Ties keep the lexicographically
    first vector (the order of the product). Returns (best_params, results)
    where results is the full [(params, score, error_or_None)] table.
    """
    if not space or any(len(v) == 0 for v in space.values()):
        raise InvariantError("parameter space must be non-empty")
    names = list(space.keys())
    results = []
    best_params, best_score = None, NEG_INF
    for combo in itertools.product(*(space[n] for n in names)):
        params = dict(zip(names, combo))
        try:
            score = float(evaluate(params))
            error = None
        except Exception as exc:  # a failing pipeline scores -inf, recorded
            score, error = NEG_INF, f"{type(exc).__name__}: {exc}"
        results.append((params, score, error))
        if score > best_score:
            best_params, best_score = params, score
    if best_params is None:
        best_params = results[0][0]
    return best_params, results


def write_pr_csv(path, curve):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "precision", "recall", "f"])
        for pt in curve:
            writer.writerow([repr(float(pt.threshold)), repr(pt.precision), repr(pt.recall), repr(pt.f_measure)])


def write_pr_svg(path, curves):
    """Minimal SVG precision/recall plot. curves: {name: [PrPoint, ...]}."""
    size, margin = 480, 50
    span = size - 2 * margin

    def sx(r):
        return margin + r * span

    def sy(p):
        return size - margin - p * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{margin}" y1="{size - margin}" x2="{size - margin}" y2="{size - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{size - margin}" stroke="black"/>',
        f'<text x="{size // 2}" y="{size - 12}" text-anchor="middle" font-size="13">recall</text>',
        f'<text x="14" y="{size // 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 14 {size // 2})">precision</text>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<text x="{sx(tick):.0f}" y="{size - margin + 16}" text-anchor="middle" '
            f'font-size="10">{tick:g}</text>'
        )
        parts.append(
            f'<text x="{margin - 8}" y="{sy(tick):.0f}" text-anchor="end" font-size="10">{tick:g}</text>'
        )
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    for idx, (name, curve) in enumerate(curves.items()):
        pts = sorted(curve, key=lambda pt: pt.recall)
        coords = " ".join(f"{sx(pt.recall):.1f},{sy(pt.precision):.1f}" for pt in pts)
        color = palette[idx % len(palette)]
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for pt in pts:
            parts.append(f'<circle cx="{sx(pt.recall):.1f}" cy="{sy(pt.precision):.1f}" r="2.5" fill="{color}"/>')
        parts.append(
            f'<text x="{size - margin}" y="{margin + 14 * idx}" text-anchor="end" '
            f'font-size="11" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
