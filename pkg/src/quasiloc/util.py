"""Small numeric helpers: interval unions, confidence intervals, seed streams."""
from __future__ import annotations

import numpy as np


def interval_union(lo: np.ndarray, hi: np.ndarray, clip: tuple[float, float] | None = None):
    """Merge a family of closed intervals [lo_i, hi_i].

    Returns (total_length, component_count, merged) where merged is an
    (n, 2) array of disjoint intervals in increasing order.  Intervals are
    optionally clipped to `clip` first; empty ones are dropped.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if clip is not None:
        lo = np.maximum(lo, clip[0])
        hi = np.minimum(hi, clip[1])
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    if lo.size == 0:
        return 0.0, 0, np.empty((0, 2))
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    merged = []
    cur_lo, cur_hi = lo[0], hi[0]
    for a, b in zip(lo[1:], hi[1:]):
        if a <= cur_hi:
            cur_hi = max(cur_hi, b)
        else:
            merged.append((cur_lo, cur_hi))
            cur_lo, cur_hi = a, b
    merged.append((cur_lo, cur_hi))
    merged = np.array(merged)
    total = float(np.sum(merged[:, 1] - merged[:, 0]))
    return total, len(merged), merged


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float, float]:
    """Wilson score interval; returns (estimate, lo, hi)."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return p, max(0.0, center - half), min(1.0, center + half)


def binomial_halfwidth(p: float, trials: int, z: float = 1.96) -> float:
    """Normal-approximation halfwidth for a binomial proportion."""
    if trials <= 0:
        return float("inf")
    return z * np.sqrt(max(p * (1.0 - p), 1e-12) / trials)


def spawn_seeds(master_seed: int, count: int) -> list[int]:
    """Deterministic per-trial seeds; independent of how trials are scheduled."""
    ss = np.random.SeedSequence(master_seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(count)]
