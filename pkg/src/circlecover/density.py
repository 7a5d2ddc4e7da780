"""Step densities on the circle and the small-measure covering perturbation.

A StepDensity is a piecewise-constant probability density on [0, 1) with the
circle topology.  Because every construction here stays inside the step
class, arc masses, CDF inversion, essential infima and the perturbed density
are all computed exactly (up to float rounding), with no quadrature.

The perturbation builds, around a finite set A of marked infimum points, a
nested structure of dyadic covers, exclusion balls and index blocks that
drives the non-covering bound
Pr(A not covered by the first N arcs) <= sum_q exp(-sum_j mass(I_jq))
to zero, while changing the density only on a set of small measure.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BudgetExceededError,
    NoDonorError,
    OutOfRangeError,
)
from .seq import (
    DEFAULT_HORIZON,
    HarmonicSeq,
    LengthSequence,
    _find_block_extended,
    find_block,
    hawkes_d,
)

MASS_TOL = 1e-12


def circle_dist(x: float, y: float) -> float:
    d = abs(x - y) % 1.0
    return min(d, 1.0 - d)


def split_circle_interval(lo: float, length: float):
    """Half-open arc of given length starting at lo (mod 1) as line segments."""
    if length <= 0.0:
        return []
    if length >= 1.0:
        return [(0.0, 1.0)]
    a = lo % 1.0
    b = a + length
    if b <= 1.0:
        return [(a, b)]
    return [(a, 1.0), (0.0, b - 1.0)]


class StepDensity:
    """Piecewise-constant density on the circle.

    Pieces are [bp[i], bp[i+1]) with value values[i]; the constructor inserts
    a breakpoint at 0, so pieces tile [0, 1) with no wrap piece.  kf_points
    optionally marks a finite set standing in for a zero-measure infimum set
    (zero-width valleys are not representable by steps).  Unless
    ``normalized=False`` the total mass must equal 1 within 1e-12.
    """

    def __init__(self, breakpoints, values, kf_points=(), normalized=True):
        bp = np.asarray(breakpoints, dtype=np.float64) % 1.0
        vals = np.asarray(values, dtype=np.float64)
        if bp.ndim != 1 or bp.size == 0 or bp.size != vals.size:
            raise OutOfRangeError("breakpoints and values must be equal-length 1-d arrays")
        if np.any(vals < 0.0):
            raise OutOfRangeError("density values must be non-negative")
        order = np.argsort(bp)
        bp, vals = bp[order], vals[order]
        if np.any(np.diff(bp) <= 0.0):
            raise OutOfRangeError("breakpoints must be distinct")
        if bp[0] != 0.0:
            bp = np.concatenate([[0.0], bp])
            vals = np.concatenate([[vals[-1]], vals])
        self.breakpoints = bp
        self.values = vals
        self.widths = np.diff(np.concatenate([bp, [1.0]]))
        self.cum_mass = np.concatenate([[0.0], np.cumsum(self.widths * vals)])
        self.total_mass = float(self.cum_mass[-1])
        if normalized:
            if abs(self.total_mass - 1.0) > MASS_TOL:
                raise OutOfRangeError(f"density mass {self.total_mass} differs from 1 beyond 1e-12")
        self.normalized = normalized
        self.kf_points = tuple(float(p) % 1.0 for p in kf_points)

    # -- basic queries ----------------------------------------------------

    def value_at(self, x) -> float:
        x = float(x) % 1.0
        i = int(np.searchsorted(self.breakpoints, x, side="right")) - 1
        return float(self.values[i])

    def cdf(self, x):
        """Mass of [0, x) for x in [0, 1], vectorized."""
        xv = np.asarray(x, dtype=np.float64)
        idx = np.clip(np.searchsorted(self.breakpoints, xv, side="right") - 1, 0, self.values.size - 1)
        out = self.cum_mass[idx] + self.values[idx] * (xv - self.breakpoints[idx])
        return out if out.shape else float(out)

    def cdf_ext(self, x):
        """CDF extended by F(x + k) = F(x) + k * total for wrap arithmetic."""
        xv = np.asarray(x, dtype=np.float64)
        base = np.floor(xv)
        out = base * self.total_mass + self.cdf(xv - base)
        return out if out.shape else float(out)

    def ppf(self, u):
        """Inverse CDF; uniform u in [0, 1) maps to a density-distributed point."""
        uv = np.asarray(u, dtype=np.float64)
        if np.any((uv < 0.0) | (uv >= 1.0)):
            raise OutOfRangeError("u must lie in [0, 1)")
        idx = np.clip(np.searchsorted(self.cum_mass, uv, side="right") - 1, 0, self.values.size - 1)
        vals = self.values[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            off = np.where(vals > 0.0, (uv - self.cum_mass[idx]) / vals, 0.0)
        out = self.breakpoints[idx] + off
        out = np.minimum(out, np.nextafter(1.0, 0.0))
        return out if out.shape else float(out)

    def arc_mass(self, center: float, radius: float) -> float:
        """Exact mass of the ball B(center, radius), radius in [0, 1/2]."""
        if radius < 0.0 or radius > 0.5 + 1e-15:
            raise OutOfRangeError("radius must lie in [0, 1/2]")
        if radius == 0.0:
            return 0.0
        c = float(center) % 1.0
        # balls inside a single piece: evaluate analytically, since radii far
        # below ulp(center) cancel to zero in the CDF difference
        i = int(np.searchsorted(self.breakpoints, c, side="right")) - 1
        left = c - float(self.breakpoints[i])
        right = (float(self.breakpoints[i + 1]) if i + 1 < self.breakpoints.size else 1.0) - c
        if radius <= left and radius <= right:
            return 2.0 * radius * float(self.values[i])
        return float(self.cdf_ext(c + radius) - self.cdf_ext(c - radius))

    def segment_mass(self, lo: float, hi: float) -> float:
        """Mass of the line segment [lo, hi) with 0 <= lo <= hi <= 1."""
        return float(self.cdf(hi) - self.cdf(lo))

    # -- editing ----------------------------------------------------------

    def with_pieces(self, assignments, kf_points=None, normalized=True) -> "StepDensity":
        """New density with [lo, hi) segments set to given values (later wins).

        assignments: iterable of (segments, value), segments being non-wrapped
        [lo, hi) pairs.  Segments narrower than a few ulps of their endpoints
        are dropped as unrepresentable.
        """
        edges = set(self.breakpoints.tolist())
        cleaned = []
        for segs, val in assignments:
            keep = []
            for lo, hi in segs:
                if hi - lo > 4.0 * np.spacing(max(abs(lo), abs(hi), 1e-300)):
                    keep.append((float(lo) % 1.0 if lo != 1.0 else 0.0, float(hi)))
            for lo, hi in keep:
                edges.add(lo)
                if hi < 1.0:
                    edges.add(hi)
            cleaned.append((keep, float(val)))
        bp = np.unique(np.array(sorted(edges), dtype=np.float64))
        widths = np.diff(np.concatenate([bp, [1.0]]))
        mids = bp + widths / 2.0
        vals = np.array([self.value_at(m) for m in mids])
        for keep, val in cleaned:
            for lo, hi in keep:
                sel = (mids >= lo) & (mids < hi)
                vals[sel] = val
        return StepDensity(
            bp, vals,
            kf_points=self.kf_points if kf_points is None else kf_points,
            normalized=normalized,
        )

    def changed_measure(self, other: "StepDensity") -> float:
        """Lebesgue measure of {x : self(x) != other(x)}, exact on pieces."""
        edges = np.unique(np.concatenate([self.breakpoints, other.breakpoints]))
        widths = np.diff(np.concatenate([edges, [1.0]]))
        mids = edges + widths / 2.0
        mine = np.array([self.value_at(m) for m in mids])
        theirs = np.array([other.value_at(m) for m in mids])
        return float(np.sum(widths[mine != theirs]))

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "breakpoints": self.breakpoints.tolist(),
            "values": self.values.tolist(),
            "kf_points": list(self.kf_points),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StepDensity":
        return cls(obj["breakpoints"], obj["values"], kf_points=obj.get("kf_points", ()))


def uniform_density() -> StepDensity:
    return StepDensity([0.0], [1.0])


def two_piece_density(low=0.5, high=1.5, split=0.5, kf_points=()) -> StepDensity:
    """Density equal to `low` on [0, split) and `high` on [split, 1)."""
    if abs(low * split + high * (1.0 - split) - 1.0) > MASS_TOL:
        raise OutOfRangeError("two-piece parameters do not integrate to 1")
    return StepDensity([0.0, split], [low, high], kf_points=kf_points)


# ---------------------------------------------------------------------------
# essential infimum report
# ---------------------------------------------------------------------------


@dataclass
class DensityReport:
    m_f: float
    kf_kind: str              # "points" | "arcs"
    kf_points: tuple
    kf_arcs: tuple            # closed arcs [l, r]; r may exceed 1 for the wrap arc
    lebesgue_kf: float


def essinf_report(f: StepDensity) -> DensityReport:
    """Essential infimum and the set where it is attained.

    For a step density the local-essential-infimum limit set is the closure
    of the union of minimum-value pieces; densities carrying marked points
    report those instead (the finite-set stand-in for a null infimum set).
    """
    m = float(np.min(f.values))
    raw = []
    for i, v in enumerate(f.values):
        if v == m:
            lo = float(f.breakpoints[i])
            hi = float(f.breakpoints[i + 1]) if i + 1 < f.breakpoints.size else 1.0
            raw.append([lo, hi])
    merged = []
    for lo, hi in raw:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    if len(merged) > 1 and merged[0][0] == 0.0 and merged[-1][1] == 1.0:
        first = merged.pop(0)
        merged[-1][1] = 1.0 + first[1]  # closed wrap arc [last_lo, 1 + first_hi]
    arcs = tuple((lo, hi) for lo, hi in merged)
    total = min(sum(hi - lo for lo, hi in arcs), 1.0)
    if f.kf_points:
        return DensityReport(m_f=m, kf_kind="points", kf_points=f.kf_points,
                             kf_arcs=arcs, lebesgue_kf=0.0)
    return DensityReport(m_f=m, kf_kind="arcs", kf_points=(), kf_arcs=arcs,
                         lebesgue_kf=float(total))


def sample_center(f: StepDensity, u):
    """Inverse-CDF draw of an arc center from the density."""
    return f.ppf(u)


def arc_measure(f: StepDensity, center: float, radius: float) -> float:
    return f.arc_mass(center, radius)


# ---------------------------------------------------------------------------
# non-covering bound
# ---------------------------------------------------------------------------


def _ball_mass_segments(g: StepDensity, x: float):
    """Edges of the piecewise-linear map rho -> mass(B(x, rho)) on [0, 1/2]."""
    x = float(x) % 1.0
    crossings = {0.0, 0.5}
    for t in g.breakpoints:
        crossings.add(float((t - x) % 1.0))
        crossings.add(float((x - t) % 1.0))
    radii = np.array(sorted(r for r in crossings if 0.0 <= r <= 0.5))
    masses = np.array([g.arc_mass(x, r) for r in radii])
    return radii, masses


def noncover_bound(g: StepDensity, seq: LengthSequence, cover: Sequence[tuple], N=None) -> float:
    """Upper bound sum_q exp(-sum_{j<=N} mass(B(x_q, l_j/2 - eps_q)))
    on the probability that some ball of the cover stays uncovered.

    cover lists (center, eps) balls; terms with l_j <= 2 eps are empty and
    drop out.  The inner sum is evaluated exactly by splitting the radius
    range at the breakpoint crossings of the density, where the ball mass is
    linear in the radius, and using prefix sums of the length sequence on
    each linear piece; the cost is independent of N.
    """
    total = 0.0
    for (x_q, eps) in cover:
        radii, masses = _ball_mass_segments(g, x_q)
        hi_cap = seq.last_above(2.0 * eps, strict=True)
        if seq.n_max is not None:
            hi_cap = min(hi_cap, seq.n_max)
        if N is not None:
            hi_cap = min(hi_cap, N)
        s = 0.0
        for a in range(radii.size - 1):
            r_lo, r_hi = float(radii[a]), float(radii[a + 1])
            if r_hi <= r_lo:
                continue
            slope = (float(masses[a + 1]) - float(masses[a])) / (r_hi - r_lo)
            intercept = float(masses[a]) - slope * r_lo
            lo_j = seq.last_above(2.0 * (r_hi + eps), strict=True) + 1
            hi_j = min(seq.last_above(2.0 * (r_lo + eps), strict=True), hi_cap)
            lo_j = max(lo_j, seq.start)
            if hi_j < lo_j:
                continue
            cnt = hi_j - lo_j + 1
            block_sum = seq.prefix(hi_j) - seq.prefix(lo_j - 1)
            # mass at rho_j = l_j/2 - eps equals intercept + slope (l_j/2 - eps)
            s += cnt * (intercept - slope * eps) + slope * 0.5 * block_sum
        total += math.exp(-s) if s < 700.0 else 0.0
    return total


def noncover_bound_direct(g: StepDensity, seq: LengthSequence, cover, N) -> float:
    """Reference O(N) evaluation of the same bound (testing oracle)."""
    total = 0.0
    for (x_q, eps) in cover:
        s = 0.0
        hi = int(N) if seq.n_max is None else min(int(N), seq.n_max)
        for j in range(seq.start, hi + 1):
            rho = seq.term(j) / 2.0 - eps
            if rho > 0.0:
                s += g.arc_mass(x_q, min(rho, 0.5))
        total += math.exp(-s)
    return total


# ---------------------------------------------------------------------------
# perturbation
# ---------------------------------------------------------------------------


@dataclass
class ExclusionBall:
    level: int
    center: float
    radius: float
    value: float
    clearance: float  # distance from the center to the marked set


@dataclass
class CoverFamily:
    level: int
    eps: float
    centers: tuple


@dataclass
class PerturbationCertificate:
    """Audit record of a covering perturbation f -> f0."""

    f0: StepDensity = field(repr=False)
    changed_mass: float = 0.0
    blocks: list = field(default_factory=list)
    cover_families: list = field(default_factory=list)
    exclusion_families: list = field(default_factory=list)
    gamma: float = 1.0
    correction: float = 0.0
    donor: tuple = ()
    zeta_budget: float = 0.5
    zeta_effective: float = 0.0
    k_max: int = 0
    deltas: tuple = ()
    block_floors: tuple = ()   # m_k = l_{n2_k} - 2 eps_k per level
    u_radius: float = 0.0
    notes: tuple = ()


def _dyadic_cells_meeting(points, k: int):
    """Generation-k dyadic cells [i 2^-k, (i+1) 2^-k) containing a point."""
    width = 0.5 ** k
    cells = sorted({int(math.floor(p / width)) for p in points})
    return [(i * width, (i + 1) * width) for i in cells]


def _farthest_from(points, lo: float, hi: float):
    """Point of the cell [lo, hi) at maximal circle distance from the set."""
    inside = sorted(p for p in points if lo <= p <= hi)
    candidates = [lo, hi] + [(a + b) / 2.0 for a, b in zip([lo] + inside, inside + [hi])]
    best, best_d = lo, -1.0
    for c in candidates:
        d = min(circle_dist(c, p) for p in points)
        if d > best_d:
            best, best_d = c, d
    if best >= hi:  # keep the point inside the half-open cell
        best = hi - (hi - lo) / 1024.0
        best_d = min(circle_dist(best, p) for p in points)
    return best, best_d


def _dyadic_in(lo: float, hi: float) -> float:
    """The unique power of two inside [lo, hi) when hi / lo >= 2."""
    p = int(math.floor(math.log2(hi)))
    val = 2.0 ** p
    while val >= hi:
        p -= 1
        val = 2.0 ** p
    while val < lo:
        p += 1
        val = 2.0 ** p
    if not (lo <= val < hi):
        raise OutOfRangeError(f"no dyadic value in [{lo}, {hi})")
    return val


def _cover_centers(points, width: float):
    """Centers of width-`width` dyadic cells meeting the set.

    Below float resolution the cell midpoint is indistinguishable from the
    point itself, so the point is used directly.
    """
    centers = set()
    for a in points:
        if width > 64.0 * np.spacing(max(a, 1e-3)):
            centers.add((math.floor(a / width) + 0.5) * width)
        else:
            centers.add(a)
    return tuple(sorted(centers))


def perturb(f: StepDensity, seq: LengthSequence, eps_budget: float, k_max: int,
            zeta: float = 0.5, hawkes_horizon: int = 1_000_000,
            scan_cap: int = 1 << 21) -> PerturbationCertificate:
    """Modify f on measure <= eps_budget so that its marked infimum points
    get covered, with a certificate recording every constructed object.

    Per level k the construction places exclusion balls (values
    rho_k = m_f + 1/k) at points of generation-k dyadic cells far from the
    marked set A, finds an index block [n1_k, n2_k] with head/tail ratio
    below 2^-k and n2_k in the Lambda set, and fixes a dyadic cover of A at
    scale eps_k in [l_{n2_k}/4, l_{n2_k}/2).  Around A the density is raised
    to a constant gamma slightly above 1/(1 - zeta_eff); a donor sub-arc with
    f >= 1 absorbs the exact mass correction, so the result integrates to 1
    and keeps both the essential infimum and the marked points.

    Blocks are selected independently per level (each n1_k from its own scale
    threshold rather than past the previous block end): chaining blocks
    multiplies ln n2 by (1 + 2^k) per level and leaves double precision by
    k = 3 for harmonic-type sequences.
    """
    if not f.kf_points:
        raise OutOfRangeError("perturbation target requires marked infimum points (|K_f| = 0)")
    if not (0.0 < eps_budget < 1.0):
        raise OutOfRangeError("eps_budget must lie in (0, 1)")
    if k_max < 1:
        raise OutOfRangeError("k_max must be at least 1")
    if not (0.0 < zeta < 1.0):
        raise OutOfRangeError("zeta must lie in (0, 1)")
    A = sorted(f.kf_points)
    M = len(A)
    report = essinf_report(f)
    m_f = report.m_f

    d_hat = hawkes_d(seq, hawkes_horizon)
    if m_f > 0 and d_hat.limsup_estimate < 1.0 / m_f - 0.05:
        warnings.warn(
            f"sequence limsup estimate {d_hat.limsup_estimate:.3f} is below 1/m_f = {1 / m_f:.3f}; "
            "full-circle covering is not expected, only the marked points are targeted",
            stacklevel=2,
        )

    # dyadic exclusion skeleton: points far from A, one per meeting cell
    exclusion_raw = []
    deltas = []
    clearance = math.inf
    for k in range(1, k_max + 1):
        ys = []
        dmin = math.inf
        for lo, hi in _dyadic_cells_meeting(A, k):
            y, d = _farthest_from(A, lo, hi)
            ys.append((y, d))
            dmin = min(dmin, d)
            clearance = min(clearance, d)
        delta_k = dmin if not deltas else min(dmin, deltas[-1] / 2.0)
        deltas.append(delta_k)
        exclusion_raw.append(ys)

    u_rad = 0.48 * eps_budget / (2.0 * M)
    r_safe = 0.75 * clearance
    thresholds = [min(deltas[k - 1], r_safe, u_rad) / 4.0 for k in range(1, k_max + 1)]

    blocks = []
    for k in range(1, k_max + 1):
        n1 = seq.first_at_or_below(thresholds[k - 1])
        if n1 is None:
            raise BudgetExceededError(f"sequence never reaches the level-{k} scale threshold")
        if isinstance(seq, HarmonicSeq) and seq.c > 1.0:
            blk = _find_block_extended(seq, k, n1, scan_cap=scan_cap)
        else:
            blk = find_block(seq, k, n1, horizon=scan_cap)
        blocks.append(blk)

    cover_families = []
    floors = []
    for blk in blocks:
        ell_n2 = seq.term(blk.n2)
        if ell_n2 <= 0.0 or not math.isfinite(ell_n2):
            raise BudgetExceededError(f"block end {blk.n2} below double-precision resolution")
        eps_k = _dyadic_in(ell_n2 / 4.0, ell_n2 / 2.0)
        cover_families.append(CoverFamily(level=blk.k, eps=eps_k,
                                          centers=_cover_centers(A, eps_k)))
        floors.append(ell_n2 - 2.0 * eps_k)

    # exclusion radii: under delta_k/4, far under every later zeta budget,
    # and shrunk hard on levels whose value rho_k = m_f + 1/k reaches 1
    etas = []
    for k in range(1, k_max + 1):
        eta = deltas[k - 1] / 4.0
        if k > 1:
            eta = min(eta, 1e-3 * zeta * min(floors[: k - 1]) / (2.0 ** (k + 1)) / k_max)
        if m_f + 1.0 / k >= 1.0:
            eta = min(eta, 1e-9)
        etas.append(eta)

    zeta_eff = 0.0
    for k in range(1, k_max):
        tail = sum((2.0 ** (i + 1)) * etas[i - 1] for i in range(k + 1, k_max + 1))
        if floors[k - 1] > 0:
            zeta_eff = max(zeta_eff, tail / floors[k - 1])
    if zeta_eff >= zeta:
        raise BudgetExceededError("exclusion tails exceed the zeta budget")

    gamma = max(1.0, 1.0 / (1.0 - zeta_eff)) * (1.0 + 1e-9)

    # every reshaped interval I_jq stays inside the gamma zone: its points lie
    # within threshold/2 of A while exclusion balls start at 3 delta_k / 4
    max_reach = max(thresholds) / 2.0
    min_ball_edge = min(
        d - etas[k] for k, fam in enumerate(exclusion_raw) for (_y, d) in fam
    )
    assert min_ball_edge > max_reach, "exclusion balls intrude into the cover intervals"

    u_segments = []
    for a in A:
        u_segments.extend(split_circle_interval(a - u_rad, 2.0 * u_rad))
    assignments = [(u_segments, gamma)]
    exclusion_families = []
    ball_segments_all = []
    for k in range(1, k_max + 1):
        rho_k = m_f + 1.0 / k
        fam, segs = [], []
        for (y, d) in exclusion_raw[k - 1]:
            fam.append(ExclusionBall(level=k, center=y, radius=etas[k - 1],
                                     value=rho_k, clearance=d))
            segs.extend(split_circle_interval(y - etas[k - 1], 2.0 * etas[k - 1]))
        exclusion_families.append(fam)
        assignments.append((segs, rho_k))
        ball_segments_all.extend(segs)

    g = f.with_pieces(assignments, normalized=False)

    donor = _pick_donor(f, u_segments + ball_segments_all, 0.49 * eps_budget)
    if donor is None:
        raise NoDonorError("no sub-arc with density >= 1 clear of the construction")
    d_lo, d_hi = donor
    correction = g.total_mass - 1.0
    donor_width = d_hi - d_lo
    donor_value = f.value_at((d_lo + d_hi) / 2.0) - correction / donor_width
    if donor_value <= m_f + 1e-12:
        raise BudgetExceededError("mass correction would push the donor to the infimum level")
    f0 = g.with_pieces([([(d_lo, d_hi)], donor_value)], normalized=True)

    changed = f.changed_measure(f0)
    if changed > eps_budget + 1e-12:
        raise BudgetExceededError(f"changed measure {changed:.4g} exceeds the budget {eps_budget}")
    rep0 = essinf_report(f0)
    assert rep0.m_f == m_f, "perturbation moved the essential infimum"
    assert f0.kf_points == f.kf_points, "perturbation moved the marked points"

    return PerturbationCertificate(
        f0=f0,
        changed_mass=changed,
        blocks=blocks,
        cover_families=cover_families,
        exclusion_families=exclusion_families,
        gamma=gamma,
        correction=correction,
        donor=donor,
        zeta_budget=zeta,
        zeta_effective=zeta_eff,
        k_max=k_max,
        deltas=tuple(deltas),
        block_floors=tuple(floors),
        u_radius=u_rad,
    )


def _pick_donor(f: StepDensity, avoid_segments, width: float):
    """Widest clear sub-arc of a piece with value >= 1, trimmed to `width`."""
    best = None
    for i, v in enumerate(f.values):
        if v < 1.0:
            continue
        lo = float(f.breakpoints[i])
        hi = float(f.breakpoints[i + 1]) if i + 1 < f.breakpoints.size else 1.0
        free = [(lo, hi)]
        for a, b in avoid_segments:
            nxt = []
            for s, e in free:
                if b <= s or a >= e:
                    nxt.append((s, e))
                else:
                    if a > s:
                        nxt.append((s, a))
                    if b < e:
                        nxt.append((b, e))
            free = nxt
        for s, e in free:
            if best is None or (e - s) > (best[1] - best[0]):
                best = (s, e)
    if best is None:
        return None
    s, e = best
    take = min(width, 0.9 * (e - s))
    if take <= 0.0:
        return None
    mid = (s + e) / 2.0
    return (mid - take / 2.0, mid + take / 2.0)


# ---------------------------------------------------------------------------
# certificate checks (used by tests and the report path)
# ---------------------------------------------------------------------------


def _level_samples(n1, n2, count: int):
    """Log-spaced integer samples in [n1, n2] (handles huge block ends)."""
    if n2 - n1 <= count:
        return list(range(int(n1), int(n2) + 1))
    lo, hi = math.log(n1), math.log(n2)
    out = {int(n1), int(n2)}
    for t in np.linspace(lo, hi, count):
        if t < 700.0:
            out.add(max(int(n1), min(int(n2), int(round(math.exp(t))))))
        else:
            out.add(int(n2))
    return sorted(out)


def item3_margins(cert: PerturbationCertificate, dens: StepDensity, seq: LengthSequence,
                  samples_per_level: int = 12):
    """Minimum over sampled j and cover balls of the reshaped-interval mass
    against its two lower bounds.

    For each level k and sampled j in [n1_k, n2_k], the interval
    I_jq = B(x_q, l_j/2 - eps_k) must satisfy
    mass(I_jq) >= (1 - zeta_eff) gamma |I_jq| >= |I_jq|.
    Returns (k, min mass/|I|, min mass/gamma-bound) per level.
    """
    out = []
    for blk, fam in zip(cert.blocks, cert.cover_families):
        ratios_plain, ratios_gamma = [], []
        for n in _level_samples(blk.n1, blk.n2, samples_per_level):
            rho = seq.term(n) / 2.0 - fam.eps
            if rho <= 0.0:
                continue
            for x_q in fam.centers:
                size = 2.0 * rho
                mass = dens.arc_mass(x_q, rho)
                ratios_plain.append(mass / size)
                ratios_gamma.append(mass / ((1.0 - cert.zeta_effective) * cert.gamma * size))
        if not ratios_plain:
            raise OutOfRangeError(f"level {blk.k} produced no usable intervals")
        out.append((blk.k, min(ratios_plain), min(ratios_gamma)))
    return out


def a2_exponent(seq: LengthSequence, n2, k: int) -> float:
    """Exponent of the level-k non-covering bound at the theoretical radius
    eps = 1/(2 n2): -L_{n2} / (1 + 2^-k) + 1 + ln(2 n2).

    Negative values certify that the bound vanishes along the blocks.
    """
    return -seq.prefix(n2) / (1.0 + 2.0 ** (-k)) + 1.0 + math.log(2) + math.log(n2)
