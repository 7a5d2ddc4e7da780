"""Pairwise energies of measures against covering and Riesz kernels.

The covering kernel is Phi_a(d) = exp(a sum_n (l_n - d)_+); its double
integral against a probability measure decides the capacity question: the
set carries the measure with finite energy exactly when its capacity is
positive.  Energies are evaluated on atomic discretizations (one atom per
Cantor interval, or arbitrary atom lists) with the diagonal handled either
by exclusion or by lumping same-atom pairs at the cell diameter, which
bracket the continuum value from below and above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AtomBudgetError, OutOfRangeError, UnboundedError
from .cantor import CantorMeasure, CantorSpec, build_levels, interval_for_word, MAX_EXPLICIT_DEPTH
from .seq import DEFAULT_HORIZON, LengthSequence, geometric_indices

ATOM_BUDGET = 10_000
_CHUNK_ROWS = 1024

# growth thresholds for ln I_k per level (geometric growth vs plateau)
_DIVERGE_SLOPE = 0.05
_CONVERGE_SLOPE = 0.005


def phi_a(seq: LengthSequence, a: float, d, horizon: int = DEFAULT_HORIZON):
    """Covering kernel exp(a sum (l_n - d)_+), log-space internally."""
    if a < 0.0:
        raise OutOfRangeError("a must be non-negative")
    dv = np.atleast_1d(np.asarray(d, dtype=np.float64))
    if np.any(dv < 0.0) or np.any(dv > 0.5 + 1e-15):
        raise OutOfRangeError("distances must lie in [0, 1/2]")
    out = np.empty(dv.size)
    for i, di in enumerate(dv):
        if di == 0.0 and seq.n_max is None:
            raise UnboundedError("kernel diverges at distance zero for divergent sums")
        from .seq import positive_part_sum
        out[i] = math.exp(a * positive_part_sum(seq, float(di), horizon=horizon)) if di > 0 or seq.n_max is not None else 0.0
        if di == 0.0:
            out[i] = math.exp(a * seq.prefix(seq.n_max))
    return float(out[0]) if np.asarray(d).ndim == 0 else out


class PhiAKernel:
    """Vectorized Phi_a evaluator with a materialized length table."""

    def __init__(self, seq: LengthSequence, a: float, horizon: int = DEFAULT_HORIZON):
        if a < 0.0:
            raise OutOfRangeError("a must be non-negative")
        self.seq = seq
        self.a = float(a)
        self.horizon = horizon
        self._ell = None
        self._cum = None

    def _ensure_table(self, d_min: float):
        n_star = self.seq.last_above(d_min, strict=True)
        if n_star < self.seq.start:
            n_star = self.seq.start
        if self.seq.n_max is not None:
            n_star = min(n_star, self.seq.n_max)
        if n_star > self.horizon:
            raise UnboundedError(
                f"kernel support reaches index {n_star} past horizon {self.horizon}")
        if self._ell is None or self._ell.size < self.seq.count(n_star):
            self._ell = self.seq.terms(self.seq.start, n_star)
            self._cum = np.concatenate([[0.0], np.cumsum(self._ell)])

    def log_at(self, d: np.ndarray) -> np.ndarray:
        """a * sum (l_n - d)_+ for an array of positive distances."""
        dm = float(np.min(d))
        if dm <= 0.0:
            raise OutOfRangeError("distances must be positive")
        self._ensure_table(dm)
        counts = np.searchsorted(-self._ell, -d, side="left")
        return self.a * (self._cum[counts] - counts * d)

    def at(self, d: np.ndarray) -> np.ndarray:
        return np.exp(self.log_at(d))

    def label(self) -> str:
        return f"phi_a(a={self.a})"


class RieszKernel:
    """d^-s kernel."""

    def __init__(self, s: float):
        if s <= 0.0:
            raise OutOfRangeError("Riesz exponent must be positive")
        self.s = float(s)

    def at(self, d: np.ndarray) -> np.ndarray:
        return np.asarray(d, dtype=np.float64) ** (-self.s)

    def label(self) -> str:
        return f"riesz(s={self.s})"


@dataclass
class AtomMeasure:
    """Finite atomic measure: positions on the circle, masses summing to 1."""

    positions: np.ndarray
    masses: np.ndarray
    provenance: str = "explicit"

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64) % 1.0
        self.masses = np.asarray(self.masses, dtype=np.float64)
        if self.positions.size != self.masses.size or self.positions.size == 0:
            raise OutOfRangeError("positions and masses must be equal-length and non-empty")
        if np.any(self.masses <= 0.0):
            raise OutOfRangeError("masses must be positive")
        if abs(float(np.sum(self.masses)) - 1.0) > 1e-12:
            raise OutOfRangeError("masses must sum to 1 within 1e-12")

    @property
    def count(self) -> int:
        return self.positions.size

    @classmethod
    def uniform(cls, n: int) -> "AtomMeasure":
        pos = (np.arange(n) + 0.5) / n
        return cls(pos, np.full(n, 1.0 / n), provenance=f"uniform({n})")

    @classmethod
    def from_cantor(cls, spec: CantorSpec, depth: int, max_atoms: int = ATOM_BUDGET,
                    seed: int = 0) -> "AtomMeasure":
        """Midpoint atoms of the level-`depth` intervals, mass 2^-depth each.

        Past the atom budget the words are sampled uniformly (equivalent to
        drawing iid points from the natural measure at depth resolution) and
        re-weighted to keep total mass one.
        """
        if 2 ** depth <= max_atoms and depth <= MAX_EXPLICIT_DEPTH:
            lvl = build_levels(spec, depth)
            pos = (lvl.lefts + lvl.rights) / 2.0
            return cls(pos, np.full(pos.size, 1.0 / pos.size),
                       provenance=f"cantor(depth={depth}, exact)")
        rng = np.random.default_rng(seed)
        total = 2 ** depth
        if total <= 4 * max_atoms:
            idx = rng.permutation(total)[:max_atoms]
        else:
            seen = set()
            while len(seen) < max_atoms:
                for v in rng.integers(0, total, size=max_atoms):
                    seen.add(int(v))
                    if len(seen) == max_atoms:
                        break
            idx = np.array(sorted(seen))
        pos = np.empty(len(idx))
        for i, word_bits in enumerate(idx):
            word = format(int(word_bits), f"0{depth}b").replace("1", "2")
            lo, hi = interval_for_word(spec, word)
            pos[i] = (lo + hi) / 2.0
        return cls(pos, np.full(pos.size, 1.0 / pos.size),
                   provenance=f"cantor(depth={depth}, sampled {pos.size})")


def circle_distance_matrix_chunk(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    d = np.abs(xs[:, None] - ys[None, :])
    return np.minimum(d, 1.0 - d)


def energy(mu: AtomMeasure, kernel, diag: str = "lump", diag_scale: Optional[float] = None,
           diag_weight: Optional[float] = None) -> float:
    """Double sum sum_{i != j} m_i m_j kernel(d(x_i, x_j)) with circle metric.

    diag = "exclude" drops same-atom pairs; diag = "lump" adds
    kernel(diag_scale) * diag_weight, upper-bounding the within-cell
    contribution at the discretization scale (diag_weight defaults to
    sum m_i^2; subsampled discretizations pass the underlying measure's
    cell-mass square sum instead).  Accumulation uses fixed-size row chunks
    and an exact final summation, so results are reproducible for a given
    atom order.
    """
    n = mu.count
    if n > ATOM_BUDGET:
        raise AtomBudgetError(f"{n} atoms exceed the pairwise budget {ATOM_BUDGET}")
    if diag not in ("exclude", "lump"):
        raise OutOfRangeError("diag must be 'exclude' or 'lump'")
    if diag == "lump" and (diag_scale is None or diag_scale <= 0.0):
        raise OutOfRangeError("lump policy needs a positive diag_scale")
    pos, w = mu.positions, mu.masses
    parts = []
    for lo in range(0, n, _CHUNK_ROWS):
        hi = min(lo + _CHUNK_ROWS, n)
        d = circle_distance_matrix_chunk(pos[lo:hi], pos)
        rows = np.arange(hi - lo)
        d[rows, lo + rows] = 0.25  # placeholder; zeroed after evaluation
        if np.any(d <= 0.0):
            raise OutOfRangeError("coincident atoms have infinite pair energy")
        vals = kernel.at(d)
        vals[rows, lo + rows] = 0.0
        parts.append(float(np.sum((w[lo:hi, None] * w[None, :]) * vals)))
    total = math.fsum(parts)
    if diag == "lump":
        weight = float(np.sum(w * w)) if diag_weight is None else float(diag_weight)
        total += float(kernel.at(np.array([diag_scale]))[0]) * weight
    return total


@dataclass
class EnergyTrajectory:
    """Depth-indexed energies with a growth classification."""

    depths: np.ndarray
    atoms: np.ndarray
    i_exclude: np.ndarray
    i_lump: np.ndarray
    classification: str          # headline verdict on the lump values
    classification_exclude: str
    slope: float                 # fitted d ln I / d depth over the tail
    kernel_label: str = ""


def _classify_growth(depths: np.ndarray, values: np.ndarray) -> tuple:
    """Verdict from the tail slope of ln I_k against k."""
    mask = depths >= depths[0] + (depths[-1] - depths[0]) / 2
    if np.count_nonzero(mask) < 2:
        mask = np.ones_like(depths, dtype=bool)
    x = depths[mask].astype(np.float64)
    y = np.log(values[mask])
    slope = float(np.polyfit(x, y, 1)[0])
    if slope >= _DIVERGE_SLOPE:
        return "diverges", slope
    if slope <= _CONVERGE_SLOPE:
        return "converges", slope
    return "inconclusive", slope


def energy_trajectory(spec: CantorSpec, kernel, depths, atom_budget: int = ATOM_BUDGET,
                      seed: int = 0) -> EnergyTrajectory:
    """Energies of the natural-measure discretizations across depths.

    At each depth the measure is one midpoint atom per level interval
    (subsampled past the budget); both diagonal policies are computed, and
    the verdict comes from the tail slope of ln I_k: growth at least
    geometric reads as divergence, a plateau as convergence.
    """
    depths = np.asarray(sorted(depths), dtype=np.int64)
    deltas = spec.deltas(int(depths[-1]))
    ie, il, counts = [], [], []
    for k in depths:
        mu = AtomMeasure.from_cantor(spec, int(k), max_atoms=atom_budget, seed=seed)
        ie.append(energy(mu, kernel, diag="exclude"))
        il.append(energy(mu, kernel, diag="lump", diag_scale=float(deltas[k]),
                         diag_weight=0.5 ** int(k)))
        counts.append(mu.count)
    ie, il = np.array(ie), np.array(il)
    verdict_l, slope = _classify_growth(depths, il)
    verdict_e, _ = _classify_growth(depths, ie)
    return EnergyTrajectory(
        depths=depths,
        atoms=np.array(counts),
        i_exclude=ie,
        i_lump=il,
        classification=verdict_l,
        classification_exclude=verdict_e,
        slope=slope,
        kernel_label=kernel.label(),
    )


def uniform_energy_trajectory(kernel, depths, atom_budget: int = ATOM_BUDGET) -> EnergyTrajectory:
    """Same trajectory for the uniform measure discretized at 2^k atoms."""
    depths = np.asarray(sorted(depths), dtype=np.int64)
    ie, il, counts = [], [], []
    for k in depths:
        n = min(2 ** int(k), atom_budget)
        mu = AtomMeasure.uniform(n)
        ie.append(energy(mu, kernel, diag="exclude"))
        il.append(energy(mu, kernel, diag="lump", diag_scale=0.5 ** int(k),
                         diag_weight=0.5 ** int(k)))
        counts.append(n)
    ie, il = np.array(ie), np.array(il)
    verdict_l, slope = _classify_growth(depths, il)
    verdict_e, _ = _classify_growth(depths, ie)
    return EnergyTrajectory(
        depths=depths, atoms=np.array(counts), i_exclude=ie, i_lump=il,
        classification=verdict_l, classification_exclude=verdict_e, slope=slope,
        kernel_label=kernel.label(),
    )


# ---------------------------------------------------------------------------
# annulus decomposition of the inner integral
# ---------------------------------------------------------------------------


@dataclass
class AnnuliReport:
    ns: np.ndarray
    sigma_mass: np.ndarray     # sigma_0 of the annulus (l_{n+1}, l_n] around t
    kernel_cap: np.ndarray     # Phi_a at the inner radius (kernel maximum there)
    terms: np.ndarray          # product bound per annulus
    partial_sums: np.ndarray


def annuli_partial_sums(spec: CantorSpec, seq: LengthSequence, a: float, t: float,
                        n_max: int, measure: Optional[CantorMeasure] = None,
                        horizon: int = DEFAULT_HORIZON) -> AnnuliReport:
    """Per-index annulus masses and kernel caps around a point of the set.

    The n-th annulus is (t + l_{n+1}, t + l_n] plus its mirror image; its
    natural-measure mass times the kernel value at distance l_{n+1} bounds
    the annulus contribution to the inner integral of Phi_a against sigma_0.
    """
    measure = measure or CantorMeasure(spec)
    lo = seq.start
    hi = n_max if seq.n_max is None else min(n_max, seq.n_max - 1)
    ns = geometric_indices(lo, hi)
    sigma = np.empty(ns.size)
    caps = np.empty(ns.size)
    kern = PhiAKernel(seq, a, horizon=horizon)
    for i, n in enumerate(ns):
        n = int(n)
        r_out, r_in = seq.term(n), seq.term(n + 1)
        outer = measure.arc_mass(t, r_out)
        inner = measure.arc_mass(t, r_in)
        sigma[i] = max(outer - inner, 0.0)
        caps[i] = float(kern.at(np.array([r_in]))[0])
    terms = sigma * caps
    return AnnuliReport(ns=ns, sigma_mass=sigma, kernel_cap=caps, terms=terms,
                        partial_sums=np.cumsum(terms))


def annuli_decompose_atoms(mu: AtomMeasure, seq: LengthSequence, a: float, t: float,
                           n_max: int, horizon: int = DEFAULT_HORIZON):
    """Bucket an atom measure's inner kernel sum by annulus (exact pieces).

    Returns (per-annulus exact sums, per-annulus cap bounds, direct total);
    the bucketed sums recompose the direct sum exactly up to float
    associativity, and each is dominated by its cap bound.
    """
    kern = PhiAKernel(seq, a, horizon=horizon)
    d = np.abs(mu.positions - t)
    d = np.minimum(d, 1.0 - d)
    inside = d > 0.0
    vals = np.zeros(mu.count)
    vals[inside] = kern.at(d[inside]) * mu.masses[inside]
    hi = n_max if seq.n_max is None else min(n_max, seq.n_max - 1)
    exact, caps = [], []
    for n in range(seq.start, hi + 1):
        r_out, r_in = seq.term(n), seq.term(n + 1)
        sel = (d > r_in) & (d <= r_out)
        exact.append(float(np.sum(vals[sel])))
        caps.append(float(kern.at(np.array([r_in]))[0]) * float(np.sum(mu.masses[sel])))
    outside = d > seq.term(seq.start)
    tail_inside = (d <= seq.term(hi + 1)) & inside
    rest = float(np.sum(vals[outside])) + float(np.sum(vals[tail_inside]))
    direct = float(np.sum(vals))
    return np.array(exact), np.array(caps), rest, direct
