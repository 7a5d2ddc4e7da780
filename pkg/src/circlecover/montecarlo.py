"""Simulation of the random covering process with exact uncovered-set law.

Arc centers are drawn by inverse CDF from counter-based Philox streams keyed
by (seed, trial), so any trial's n-th center is independent of how many arcs
the trial eventually uses, trials are independent and reproducible, and
identical configurations give bit-identical results.

The uncovered region is maintained exactly as a canonical set of disjoint
half-open arcs; finite targets (point grids, marked points, Cantor-level
interval unions) are tracked incrementally so the first-cover time falls out
of the same pass.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.random import Generator, Philox

from .errors import OutOfRangeError
from .cantor import CantorSpec, build_levels
from .density import StepDensity, split_circle_interval
from .seq import LengthSequence

_MASK64 = (1 << 64) - 1


def center_stream(seed: int, trial: int) -> Generator:
    """Philox generator keyed by (seed, trial); draw n gives center n."""
    key = np.array([seed & _MASK64, trial & _MASK64], dtype=np.uint64)
    return Generator(Philox(key=key))


def draw_centers(density: StepDensity, seed: int, trial: int, count: int) -> np.ndarray:
    """First `count` centers of the (seed, trial) stream."""
    gen = center_stream(seed, trial)
    u = gen.random(count)
    return np.asarray(density.ppf(u))


# ---------------------------------------------------------------------------
# exact uncovered-region bookkeeping
# ---------------------------------------------------------------------------


class ArcSet:
    """Canonical disjoint half-open arcs on the circle.

    Arcs are stored as sorted non-overlapping [l, r) segments inside [0, 1);
    an arc through 0 is split there, which keeps the representation unique
    for a given point set.  Subtraction works purely on endpoint comparisons,
    so any permutation of the same subtrahends yields the same result.
    """

    def __init__(self, lefts=None, rights=None):
        self.lefts = list(lefts) if lefts is not None else [0.0]
        self.rights = list(rights) if rights is not None else [1.0]

    @classmethod
    def full_circle(cls) -> "ArcSet":
        return cls([0.0], [1.0])

    @classmethod
    def empty(cls) -> "ArcSet":
        return cls([], [])

    @classmethod
    def from_segments(cls, segments) -> "ArcSet":
        segs = sorted((float(a), float(b)) for a, b in segments if b > a)
        lefts, rights = [], []
        for a, b in segs:
            if lefts and a <= rights[-1]:
                rights[-1] = max(rights[-1], b)
            else:
                lefts.append(a)
                rights.append(b)
        return cls(lefts, rights)

    def copy(self) -> "ArcSet":
        return ArcSet(list(self.lefts), list(self.rights))

    @property
    def total_length(self) -> float:
        return math.fsum(r - l for l, r in zip(self.lefts, self.rights))

    @property
    def segment_count(self) -> int:
        return len(self.lefts)

    @property
    def circle_arc_count(self) -> int:
        """Segments merged across the wrap point count as one arc."""
        n = len(self.lefts)
        if n >= 2 and self.lefts[0] == 0.0 and self.rights[-1] == 1.0:
            return n - 1
        if n == 1 and self.lefts[0] == 0.0 and self.rights[0] == 1.0:
            return 1
        return n

    def contains_point(self, x: float) -> bool:
        x = x % 1.0
        i = bisect.bisect_right(self.lefts, x) - 1
        return i >= 0 and x < self.rights[i]

    def _subtract_segment(self, a: float, b: float) -> None:
        if b <= a or not self.lefts:
            return
        lo = bisect.bisect_left(self.rights, a)
        hi = bisect.bisect_left(self.lefts, b, lo=lo)
        if lo >= hi and not (lo < len(self.lefts) and self.lefts[lo] < b and self.rights[lo] > a):
            if lo >= len(self.lefts) or self.rights[lo] <= a or self.lefts[lo] >= b:
                return
        new_l, new_r = [], []
        for i in range(lo, min(hi, len(self.lefts))):
            l_i, r_i = self.lefts[i], self.rights[i]
            if l_i < a:
                new_l.append(l_i)
                new_r.append(min(r_i, a))
            if r_i > b:
                new_l.append(max(l_i, b))
                new_r.append(r_i)
        self.lefts[lo:hi] = new_l
        self.rights[lo:hi] = new_r

    def subtract_arc(self, center: float, length: float) -> None:
        """Remove the open arc of the given length around the center."""
        for a, b in split_circle_interval(center - length / 2.0, length):
            self._subtract_segment(a, b)

    def intersects_segment(self, a: float, b: float) -> bool:
        i = bisect.bisect_left(self.rights, a)
        return i < len(self.lefts) and self.lefts[i] < b


def subtract_arc(arcs: ArcSet, center: float, length: float) -> ArcSet:
    """Pure canonical set difference (the in-place form drives simulations)."""
    out = arcs.copy()
    out.subtract_arc(center, length)
    return out


# ---------------------------------------------------------------------------
# targets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridTarget:
    resolution: int

    def __post_init__(self):
        if self.resolution < 2:
            raise OutOfRangeError("grid resolution must be at least 2")

    def points(self) -> np.ndarray:
        return np.arange(self.resolution) / self.resolution

    def label(self) -> str:
        return f"grid({self.resolution})"


@dataclass(frozen=True)
class PointsTarget:
    points_list: tuple

    def points(self) -> np.ndarray:
        return np.asarray(self.points_list, dtype=np.float64) % 1.0

    def label(self) -> str:
        return f"points({len(self.points_list)})"


@dataclass(frozen=True)
class CantorLevelTarget:
    spec: CantorSpec
    depth: int

    def segments(self):
        lvl = build_levels(self.spec, self.depth)
        return list(zip(lvl.lefts.tolist(), lvl.rights.tolist()))

    def label(self) -> str:
        return f"cantor(depth={self.depth})"


@dataclass(frozen=True)
class TrialConfig:
    density: StepDensity
    seq: LengthSequence
    n_arcs: int
    seed: int
    target: object

    def __post_init__(self):
        if self.n_arcs < 1:
            raise OutOfRangeError("n_arcs must be positive")


@dataclass
class CoverageStats:
    covered: bool
    first_cover_time: Optional[int]
    uncovered_length: float
    uncovered_count: int


class _PointTracker:
    """Alive-point bookkeeping for point targets.

    Segments use the same half-open [a, b) convention as ArcSet; a split
    wrap-around arc keeps the seam point 0 interior, as it should be.
    """

    def __init__(self, points: np.ndarray):
        self.alive = np.sort(points % 1.0)

    @property
    def remaining(self) -> int:
        return self.alive.size

    def consume(self, center: float, length: float) -> None:
        if self.alive.size == 0:
            return
        keep = np.ones(self.alive.size, dtype=bool)
        for a, b in split_circle_interval(center - length / 2.0, length):
            lo = np.searchsorted(self.alive, a, side="left")
            hi = np.searchsorted(self.alive, b, side="left")
            keep[lo:hi] = False
        self.alive = self.alive[keep]


class _SegmentTracker:
    """Remaining target region for interval-union targets."""

    def __init__(self, segments):
        self.region = ArcSet.from_segments(segments)

    @property
    def remaining(self) -> int:
        return self.region.segment_count

    def consume(self, center: float, length: float) -> None:
        self.region.subtract_arc(center, length)


def _make_tracker(target):
    if isinstance(target, (GridTarget, PointsTarget)):
        return _PointTracker(target.points())
    if isinstance(target, CantorLevelTarget):
        return _SegmentTracker(target.segments())
    raise OutOfRangeError(f"unsupported target {target!r}")


def run_trial(cfg: TrialConfig) -> CoverageStats:
    """One covering trial with exact uncovered-set bookkeeping.

    Deterministic in (cfg, seed): centers come from the (seed, 0) Philox
    stream.  The uncovered region shrinks arc by arc; the target tracker
    empties at the recorded first-cover time.
    """
    if cfg.seq.n_max is not None and cfg.n_arcs > cfg.seq.n_max:
        raise OutOfRangeError("n_arcs exceeds the sequence length")
    return _run_trial_stream(cfg, trial=0)


# ---------------------------------------------------------------------------
# non-covering estimation and phase scans
# ---------------------------------------------------------------------------


@dataclass
class NoncoverEstimate:
    p_hat: float
    stderr: float
    wilson_low: float
    wilson_high: float
    trials: int
    failures: int  # trials where the target stayed partly uncovered


def _wilson(x: int, n: int, z: float = 1.0):
    center = (x + z * z / 2.0) / (n + z * z)
    half = z * math.sqrt(x * (n - x) / n + z * z / 4.0) / (n + z * z)
    return center - half, center + half, math.sqrt(center * (1.0 - center) / (n + z * z))


def _points_uncovered_any(density: StepDensity, lengths: np.ndarray, seed: int, trial: int,
                          pts: np.ndarray, chunk: int = 1 << 16) -> bool:
    """True when some target point avoids all arcs of the trial stream."""
    gen = center_stream(seed, trial)
    alive = pts.copy()
    n = lengths.size
    pos = 0
    while pos < n and alive.size:
        cnt = min(chunk, n - pos)
        centers = np.asarray(density.ppf(gen.random(cnt)))
        radii = lengths[pos:pos + cnt] / 2.0
        d = np.abs(alive[None, :] - centers[:, None])
        d = np.minimum(d, 1.0 - d)
        alive = alive[~np.any(d <= radii[:, None], axis=0)]
        pos += cnt
    return alive.size > 0


def estimate_noncover(cfg: TrialConfig, trials: int) -> NoncoverEstimate:
    """Binomial estimate of Pr(target not covered by the first n_arcs arcs).

    Trials use independent (seed, trial) streams.  Point targets run a
    vectorized alive-set sweep; other targets fall back to full trials.
    """
    if trials < 1:
        raise OutOfRangeError("trials must be positive")
    lengths = cfg.seq.terms(cfg.seq.start, cfg.seq.start + cfg.n_arcs - 1)
    failures = 0
    if isinstance(cfg.target, (GridTarget, PointsTarget)):
        pts = np.sort(cfg.target.points())
        for t in range(trials):
            if _points_uncovered_any(cfg.density, lengths, cfg.seed, t, pts):
                failures += 1
    else:
        for t in range(trials):
            if not _run_trial_stream(cfg, trial=t).covered:
                failures += 1
    lo, hi, se = _wilson(failures, trials)
    return NoncoverEstimate(p_hat=failures / trials, stderr=se, wilson_low=lo,
                            wilson_high=hi, trials=trials, failures=failures)


def _run_trial_stream(cfg: TrialConfig, trial: int) -> CoverageStats:
    lengths = cfg.seq.terms(cfg.seq.start, cfg.seq.start + cfg.n_arcs - 1)
    centers = draw_centers(cfg.density, cfg.seed, trial, cfg.n_arcs)
    uncovered = ArcSet.full_circle()
    tracker = _make_tracker(cfg.target)
    first_cover = None
    for n in range(cfg.n_arcs):
        uncovered.subtract_arc(float(centers[n]), float(lengths[n]))
        if tracker.remaining:
            tracker.consume(float(centers[n]), float(lengths[n]))
            if tracker.remaining == 0:
                first_cover = n + 1
    return CoverageStats(tracker.remaining == 0, first_cover,
                         uncovered.total_length, uncovered.circle_arc_count)


def _grid_covered_fast(density: StepDensity, lengths: np.ndarray, seed: int, trial: int,
                       resolution: int) -> bool:
    """Difference-array grid coverage for one trial (order-free, exact)."""
    gen = center_stream(seed, trial)
    centers = np.asarray(density.ppf(gen.random(lengths.size)))
    radii = lengths / 2.0
    lo = centers - radii
    hi = centers + radii
    diff = np.zeros(resolution + 1, dtype=np.int64)
    # grid point j/res lies inside the open arc (lo, hi) iff j > lo*res and j < hi*res
    a = np.floor(lo * resolution).astype(np.int64) + 1
    b = np.ceil(hi * resolution).astype(np.int64) - 1
    full = b - a + 1
    if np.any(full >= resolution):
        return True  # some arc alone covers every grid point
    sel = full > 0
    a, b = a[sel], b[sel]
    a_mod = a % resolution
    b_mod = b % resolution
    wrap = b_mod < a_mod
    # non-wrapping parts
    np.add.at(diff, a_mod[~wrap], 1)
    np.add.at(diff, b_mod[~wrap] + 1, -1)
    # wrapping: [a_mod, res) and [0, b_mod]
    np.add.at(diff, a_mod[wrap], 1)
    diff[resolution] -= np.count_nonzero(wrap)
    diff[0] += np.count_nonzero(wrap)
    np.add.at(diff, b_mod[wrap] + 1, -1)
    cover = np.cumsum(diff[:resolution])
    return bool(np.all(cover > 0))


@dataclass
class PhaseScanResult:
    c_values: np.ndarray
    covered_fraction: np.ndarray
    stderr: np.ndarray
    crossing: Optional[float]   # interpolated 50% covered-fraction crossing
    trials: int
    n_arcs: int
    resolution: int


def phase_scan(density: StepDensity, family, c_values, n_arcs: int, trials: int,
               resolution: int = 10_000, seed: int = 0) -> PhaseScanResult:
    """Covered fraction of a point grid across a family of length sequences.

    family maps each scan parameter c to a LengthSequence; the report carries
    the per-c covered fraction with a binomial standard error and the first
    upward 50% crossing, linearly interpolated.
    """
    cs = np.asarray(sorted(c_values), dtype=np.float64)
    fractions = np.empty(cs.size)
    errs = np.empty(cs.size)
    for i, c in enumerate(cs):
        seq = family(float(c))
        lengths = seq.terms(seq.start, seq.start + n_arcs - 1)
        hits = 0
        for t in range(trials):
            if _grid_covered_fast(density, lengths, seed, (i << 32) | t, resolution):
                hits += 1
        fractions[i] = hits / trials
        errs[i] = math.sqrt(max(fractions[i] * (1 - fractions[i]), 0.25 / trials) / trials)
    crossing = None
    for i in range(1, cs.size):
        if fractions[i - 1] < 0.5 <= fractions[i]:
            f0, f1 = fractions[i - 1], fractions[i]
            crossing = float(cs[i - 1] + (0.5 - f0) / (f1 - f0) * (cs[i] - cs[i - 1]))
            break
    if crossing is None and fractions.size and fractions[0] >= 0.5:
        crossing = float(cs[0])
    return PhaseScanResult(c_values=cs, covered_fraction=fractions, stderr=errs,
                           crossing=crossing, trials=trials, n_arcs=n_arcs,
                           resolution=resolution)
