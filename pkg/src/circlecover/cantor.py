"""Nested-interval Cantor sets, their natural measures, and dimension probes.

Constructions delete an open middle portion of every interval at each level,
with the gap fraction set by a per-level rule:

* ``middle_third``  - gap 1/3 at every level (the classical set),
* ``lambda_phase``  - gap 1 - 2 lambda_j with lambda_j = (1 - 3^-j) / 2 at
  global level j, so the child/parent ratio creeps up from 1/3 toward 1/2,
* ``harmonic``      - gap 1/(j + 2) at global level j, giving
  delta_j = (1/2)(1 - 1/(j+2)) delta_{j-1} and interval lengths of order
  2^-j / j (Hausdorff dimension one, Lebesgue measure zero).

Level k holds 2^k closed intervals addressed by words in {0, 2}^k, all of the
same length delta_k.  The natural measure sigma_0 splits mass in half at
every branching, so sigma_0 of a level-k interval is exactly 2^-k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DepthExceededError, OutOfRangeError, ResolutionExceededError

MAX_DEPTH = 60
MAX_EXPLICIT_DEPTH = 24

_RULES = ("middle_third", "lambda_phase", "harmonic")


@dataclass(frozen=True)
class CantorSpec:
    """Phase schedule assigning a gap rule to consecutive levels."""

    phases: tuple  # ((rule_name, level_count), ...)

    def __post_init__(self):
        for rule, count in self.phases:
            if rule not in _RULES:
                raise OutOfRangeError(f"unknown gap rule {rule!r}")
            if count < 1:
                raise OutOfRangeError("phase level counts must be positive")

    @property
    def depth_limit(self) -> int:
        return sum(c for _, c in self.phases)

    def rule_at(self, level: int) -> str:
        """Rule in force at global level (1-based)."""
        if level < 1:
            raise OutOfRangeError("levels are 1-based")
        pos = 0
        for rule, count in self.phases:
            pos += count
            if level <= pos:
                return rule
        return self.phases[-1][0]  # last phase extends indefinitely

    def child_fraction(self, level: int) -> float:
        """Child/parent length ratio at the given global level."""
        rule = self.rule_at(level)
        if rule == "middle_third":
            return 1.0 / 3.0
        if rule == "lambda_phase":
            return 0.5 * (1.0 - 3.0 ** (-level))
        return 0.5 * (1.0 - 1.0 / (level + 2))  # harmonic

    def deltas(self, depth: int) -> np.ndarray:
        """Common interval length per level 1..depth (recursive product)."""
        if depth > MAX_DEPTH:
            raise DepthExceededError(f"depth {depth} beyond the addressing limit {MAX_DEPTH}")
        out = np.empty(depth + 1)
        out[0] = 1.0
        for k in range(1, depth + 1):
            f = self.child_fraction(k)
            # gaps below float resolution (3^-k past level ~34) round the
            # child fraction to exactly 1/2; intervals then touch, which is
            # harmless for lengths and masses
            if not (0.0 < f <= 0.5):
                raise OutOfRangeError(f"child fraction at level {k} outside (0, 1/2]")
            out[k] = out[k - 1] * f
        return out

    def to_json(self) -> dict:
        return {"phases": [{"rule": r, "levels": c} for r, c in self.phases]}

    @classmethod
    def from_json(cls, obj: dict) -> "CantorSpec":
        return cls(tuple((p["rule"], int(p["levels"])) for p in obj["phases"]))


def middle_third_spec(depth: int = MAX_DEPTH) -> CantorSpec:
    return CantorSpec((("middle_third", depth),))


def sing_frostman_spec(depth: int = MAX_DEPTH) -> CantorSpec:
    """Harmonic-gap set: dimension one, measure zero, log-Frostman profile."""
    return CantorSpec((("harmonic", depth),))


def inhomogeneous_spec(q_max: int = 4) -> CantorSpec:
    """Alternating thirds/near-halves phases with lengths q and q^2.

    The alternation drags the box-counting trajectory between ln2/ln3 and 1,
    separating the lower and upper box dimension estimates.
    """
    phases = []
    for q in range(1, q_max + 1):
        phases.append(("middle_third", q))
        phases.append(("lambda_phase", q * q))
    return CantorSpec(tuple(phases))


@dataclass
class CantorLevel:
    """All 2^k level-k intervals, materialized."""

    depth: int
    lefts: np.ndarray
    rights: np.ndarray
    delta: float

    @property
    def count(self) -> int:
        return self.lefts.size

    def words(self):
        for i in range(self.count):
            yield format(i, f"0{self.depth}b").replace("1", "2")


def build_levels(spec: CantorSpec, depth: int) -> CantorLevel:
    """Exact endpoints of the level-`depth` intervals."""
    if depth > MAX_EXPLICIT_DEPTH:
        raise DepthExceededError(
            f"2^{depth} intervals will not be materialized; use interval_for_word")
    lefts = np.array([0.0])
    rights = np.array([1.0])
    deltas = spec.deltas(depth)
    for k in range(1, depth + 1):
        width = deltas[k]
        new_lefts = np.empty(2 * lefts.size)
        new_rights = np.empty(2 * lefts.size)
        new_lefts[0::2] = lefts
        new_rights[0::2] = lefts + width
        new_lefts[1::2] = rights - width
        new_rights[1::2] = rights
        lefts, rights = new_lefts, new_rights
    return CantorLevel(depth=depth, lefts=lefts, rights=rights, delta=float(deltas[depth]))


def interval_for_word(spec: CantorSpec, word: str):
    """Closed interval addressed by a word over {0, 2} (implicit, any depth)."""
    if len(word) > MAX_DEPTH:
        raise DepthExceededError(f"word longer than the addressing limit {MAX_DEPTH}")
    lo, hi = 0.0, 1.0
    for k, ch in enumerate(word, start=1):
        width = (hi - lo) * spec.child_fraction(k)
        if ch == "0":
            hi = lo + width
        elif ch == "2":
            lo = hi - width
        else:
            raise OutOfRangeError("words use the alphabet {0, 2}")
    return lo, hi


class CantorMeasure:
    """The natural half/half-splitting probability measure sigma_0.

    Arc masses descend the construction tree, splitting mass 1/2 per level
    and stopping as soon as an interval is wholly inside or outside the arc.
    Arcs whose endpoints lie on the set itself bottom out at max_depth; the
    returned value then carries an absolute resolution error below
    2^-max_depth per straddled endpoint.
    """

    def __init__(self, spec: CantorSpec, max_depth: int = 48):
        if max_depth > MAX_DEPTH:
            raise DepthExceededError(f"max_depth beyond the addressing limit {MAX_DEPTH}")
        self.spec = spec
        self.max_depth = max_depth
        self._deltas = spec.deltas(max_depth)

    @property
    def resolution(self) -> float:
        return float(self._deltas[self.max_depth])

    def segment_mass(self, lo: float, hi: float) -> float:
        """sigma_0 of the closed line interval [lo, hi] within [0, 1]."""
        if hi < lo:
            return 0.0
        total = 0.0
        stack = [(0.0, 1.0, 0, 1.0)]
        while stack:
            a, b, k, mass = stack.pop()
            if lo <= a and b <= hi:
                total += mass
                continue
            if b < lo or a > hi:
                continue
            if k >= self.max_depth:
                total += 0.5 * mass  # straddling leaf: bracket midpoint
                continue
            width = (b - a) * self.spec.child_fraction(k + 1)
            stack.append((a, a + width, k + 1, mass / 2.0))
            stack.append((b - width, b, k + 1, mass / 2.0))
        return total

    def arc_mass(self, center: float, radius: float) -> float:
        """sigma_0 of the ball B(center, radius) on the circle."""
        if radius < 0.0 or radius > 0.5 + 1e-15:
            raise OutOfRangeError("radius must lie in [0, 1/2]")
        c = float(center) % 1.0
        lo, hi = c - radius, c + radius
        total = self.segment_mass(max(lo, 0.0), min(hi, 1.0))
        if lo < 0.0:
            total += self.segment_mass(1.0 + lo, 1.0)
        if hi > 1.0:
            total += self.segment_mass(0.0, hi - 1.0)
        return total

    def cdf(self, x: float) -> float:
        """Distribution function F(x) = sigma_0 of [0, x]."""
        x = float(x)
        if x < 0.0:
            return 0.0
        if x >= 1.0:
            return 1.0
        return self.segment_mass(0.0, x)


def natural_measure(measure: CantorMeasure, center: float, radius: float) -> float:
    return measure.arc_mass(center, radius)


# ---------------------------------------------------------------------------
# dimension estimates
# ---------------------------------------------------------------------------


@dataclass
class BoxDimensionReport:
    """Box-counting trajectory ln 2^k / -ln delta_k, horizon-limited."""

    depths: np.ndarray
    trajectory: np.ndarray
    lower_estimate: float
    upper_estimate: float


def box_dimension(spec: CantorSpec, depth_range) -> BoxDimensionReport:
    """Box-counting estimates using the canonical 2^k covers.

    The covering count at scale delta_k is 2^k up to a factor of two (an
    interval of length delta_k meets at most two level-k intervals), which
    shifts the trajectory by at most ln 2 / -ln delta_k.
    """
    depths = np.asarray(sorted(depth_range), dtype=np.int64)
    if depths.size == 0 or depths[0] < 1:
        raise OutOfRangeError("depth range must contain positive levels")
    deltas = spec.deltas(int(depths[-1]))
    traj = depths * math.log(2.0) / (-np.log(deltas[depths]))
    return BoxDimensionReport(
        depths=depths,
        trajectory=traj,
        lower_estimate=float(np.min(traj)),
        upper_estimate=float(np.max(traj)),
    )


@dataclass
class ScaleWindow:
    u: float        # smaller scale (window start)
    v: float        # larger scale
    epsilon: float  # mass deficit exponent: sigma_0(B(t, r)) <~ r^(1 - epsilon/4)


@dataclass
class ScaleWindows:
    windows: list
    c0: float       # max over windows of u/v (< 1)

    def __post_init__(self):
        for a, b in zip(self.windows, self.windows[1:]):
            if not b.v < a.u:
                raise OutOfRangeError("scale windows must be disjoint and decreasing")
        for w in self.windows:
            if not (0.0 < w.u < w.v):
                raise OutOfRangeError("each window needs 0 < u < v")


def scale_windows(spec: CantorSpec, depth: Optional[int] = None) -> ScaleWindows:
    """Scale ranges of the near-halving phases, with their mass exponents.

    Window q spans [delta at the end of the q-th lambda phase, delta at its
    start]; inside it the measure obeys sigma_0(B(t, r)) <= c1 r^(1 - eps/4)
    with eps read off the box trajectory (eps = 4 max(1 - traj) over the
    phase, floored slightly above zero).
    """
    limit = spec.depth_limit if depth is None else min(depth, spec.depth_limit)
    deltas = spec.deltas(limit)
    traj = np.arange(1, limit + 1) * math.log(2.0) / (-np.log(deltas[1:]))
    windows = []
    pos = 0
    for rule, count in spec.phases:
        start, end = pos + 1, pos + count
        pos = end
        if end > limit:
            break
        if rule != "lambda_phase":
            continue
        eps = 4.0 * max(1.0 - float(np.min(traj[start - 1:end])), 1e-3)
        windows.append(ScaleWindow(u=float(deltas[end]), v=float(deltas[start - 1]), epsilon=eps))
    if not windows:
        raise OutOfRangeError("the schedule has no completed lambda phases below the depth")
    c0 = max(w.u / w.v for w in windows)
    return ScaleWindows(windows=windows, c0=c0)


# ---------------------------------------------------------------------------
# Frostman profiles
# ---------------------------------------------------------------------------


def _profile_centers(spec: CantorSpec, depth: int, samples: int, seed: int = 0):
    """Deterministic sample of level-`depth` interval endpoints and midpoints."""
    if depth <= MAX_EXPLICIT_DEPTH and 2 ** depth <= samples:
        lvl = build_levels(spec, depth)
        pts = np.concatenate([lvl.lefts, lvl.rights, (lvl.lefts + lvl.rights) / 2.0])
        return np.unique(pts)
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(samples):
        word = "".join("02"[b] for b in rng.integers(0, 2, size=depth))
        lo, hi = interval_for_word(spec, word)
        pts.extend((lo, hi, (lo + hi) / 2.0))
    return np.unique(np.array(pts))


@dataclass
class FrostmanProfile:
    radii: np.ndarray
    worst_ratio: np.ndarray   # max over centers of sigma_0(B(t, r)) / bound(r)
    centers_used: int


def frostman_profile(measure: CantorMeasure, radii, bound, samples_per_radius: int = 256,
                     depth: Optional[int] = None, seed: int = 0) -> FrostmanProfile:
    """Worst-case mass/bound ratio over sampled centers near the set.

    Centers are level-k interval endpoints (points of the set) plus midpoints;
    the maximum over balls centered on the set is attained near interval
    boundaries, so endpoint sampling probes the tight constant.
    """
    radii = np.asarray(sorted(radii, reverse=True), dtype=np.float64)
    if radii.size == 0:
        raise OutOfRangeError("no radii supplied")
    if float(radii[-1]) < measure.resolution:
        raise ResolutionExceededError(
            f"radius {radii[-1]} below the built resolution {measure.resolution}")
    out = np.empty(radii.size)
    probe_depth = depth if depth is not None else min(measure.max_depth - 4, 30)
    centers = _profile_centers(measure.spec, probe_depth, samples_per_radius, seed=seed)
    if centers.size > samples_per_radius:
        idx = np.linspace(0, centers.size - 1, samples_per_radius).astype(int)
        centers = centers[np.unique(idx)]
    for i, r in enumerate(radii):
        b = bound(float(r))
        if b <= 0.0:
            raise OutOfRangeError("bound(r) must be positive")
        worst = 0.0
        for t in centers:
            worst = max(worst, measure.arc_mass(float(t), float(r)) / b)
        out[i] = worst
    return FrostmanProfile(radii=radii, worst_ratio=out, centers_used=centers.size)
