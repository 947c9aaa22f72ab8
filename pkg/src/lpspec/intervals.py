"""Finite unions of closed intervals on the real line.

Band spectra, covers and report tables all reduce to lists of closed
intervals; the helpers here keep them sorted, disjoint and comparable.
"""

from __future__ import annotations

from typing import Iterable, Sequence

Interval = tuple[float, float]


def merge_intervals(intervals: Iterable[Interval], gap_tol: float = 0.0) -> list[Interval]:
    """Sort intervals and merge any pair closer than ``gap_tol``."""
    items = sorted((float(a), float(b)) for a, b in intervals)
    merged: list[Interval] = []
    for a, b in items:
        if b < a:
            raise ValueError(f"interval with negative length: ({a}, {b})")
        if merged and a <= merged[-1][1] + gap_tol:
            prev_a, prev_b = merged[-1]
            merged[-1] = (prev_a, max(prev_b, b))
        else:
            merged.append((a, b))
    return merged


def total_measure(intervals: Sequence[Interval]) -> float:
    return float(sum(b - a for a, b in intervals))


def inflate(intervals: Sequence[Interval], amount: float) -> list[Interval]:
    """Grow every interval by ``amount`` on both sides, merging overlaps."""
    if amount < 0:
        raise ValueError("inflation amount must be nonnegative")
    return merge_intervals((a - amount, b + amount) for a, b in intervals)


def point_distance(x: float, intervals: Sequence[Interval]) -> float:
    """Distance from a point to a union of closed intervals."""
    if not intervals:
        return float("inf")
    best = float("inf")
    for a, b in intervals:
        if a <= x <= b:
            return 0.0
        best = min(best, abs(x - a), abs(x - b))
    return best


def _directed_hausdorff(src: Sequence[Interval], dst: Sequence[Interval]) -> float:
    # sup_{x in src} dist(x, dst) is attained at an endpoint of src or at
    # a gap midpoint of dst lying inside src (dist(., dst) is piecewise
    # linear with maxima only at those breakpoints).
    if not src:
        return 0.0
    if not dst:
        return float("inf")
    candidates = [e for iv in src for e in iv]
    for (_, b1), (a2, _) in zip(dst, dst[1:]):
        mid = 0.5 * (b1 + a2)
        if any(a <= mid <= b for a, b in src):
            candidates.append(mid)
    return max(point_distance(x, dst) for x in candidates)


def hausdorff_distance(first: Sequence[Interval], second: Sequence[Interval]) -> float:
    """Hausdorff distance between two unions of closed intervals.

    Both inputs are normalized (sorted, disjoint) before the exact
    endpoint/gap-midpoint evaluation. Two empty unions have distance 0.
    """
    a = merge_intervals(first)
    b = merge_intervals(second)
    if not a and not b:
        return 0.0
    return max(_directed_hausdorff(a, b), _directed_hausdorff(b, a))
