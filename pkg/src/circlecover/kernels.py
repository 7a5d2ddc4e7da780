"""Approximate-identity kernels built from indicator stacks of arc lengths.

For a gap parameter r below the largest length, the kernel stacks the
indicators of the shrunken intervals [-(l_k - r)/2, (l_k - r)/2), shifted so
the stack is symmetric around u = -r/2, and normalizes by sum (l_k - r)_+.
Convolving a step density against it reduces to exact sums of CDF
differences, so the convergence of f * psi_r toward f along r -> 0 can be
measured without quadrature error.

The case classifier works on the quantized companion sequence: given a
radius scale K with b^(K+1) < r <= b^K it reports whether r sits safely away
from the scale point (case 1), the scale counts are spread out (case 2), or
neither, in which case the explicit bound (K/2) ln(1/b) / sum nu_k (b^k - r)_+
applies (case 3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import OutOfRangeError, ScaleOutOfRangeError
from .density import StepDensity
from .seq import (
    DEFAULT_HORIZON,
    LengthSequence,
    QuantizedSequence,
    concentration_stats,
    geometric_indices,
    positive_part_sum,
)


@dataclass
class KernelSpec:
    """A kernel psi_r for one gap parameter r.

    The normalizer sum (l_k - r)_+ must be positive, which pins r strictly
    below the largest length.
    """

    seq: LengthSequence
    r: float
    normalizer: float
    horizon: int = DEFAULT_HORIZON

    @classmethod
    def build(cls, seq: LengthSequence, r: float, horizon: int = DEFAULT_HORIZON) -> "KernelSpec":
        if r <= 0.0:
            raise OutOfRangeError("gap parameter r must be positive")
        norm = positive_part_sum(seq, r, horizon=horizon)
        if norm <= 0.0:
            raise OutOfRangeError("kernel undefined: no length exceeds r")
        return cls(seq=seq, r=r, normalizer=norm, horizon=horizon)

    @classmethod
    def from_quantized(cls, q: QuantizedSequence, r: float, horizon: int = DEFAULT_HORIZON) -> "KernelSpec":
        """Kernel of the rounded sequence (same formula, different lengths)."""
        return cls.build(q.to_length_sequence(), r, horizon=horizon)

    @property
    def tip(self) -> float:
        """Center of symmetry of the indicator stack."""
        return -self.r / 2.0

    def support_halfwidth(self, k_index: int) -> float:
        return (self.seq.term(k_index) - self.r) / 2.0


def kernel_value(spec: KernelSpec, u) -> float:
    """psi_r(u): stacked-indicator count at u + r/2, over the normalizer.

    The k-th indicator covers x in [-(l_k - r)/2, (l_k - r)/2); counting is a
    binary search on the non-increasing lengths.
    """
    x = np.asarray(u, dtype=np.float64) + spec.r / 2.0
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    counts = np.empty(x.size)
    for i, xi in enumerate(x):
        if xi >= 0.0:
            # need (l_k - r)/2 > xi, half-open right end
            n = spec.seq.last_above(2.0 * xi + spec.r, strict=True)
        else:
            # need -(l_k - r)/2 <= xi, closed left end
            n = spec.seq.last_above(spec.r - 2.0 * xi, strict=False)
        counts[i] = spec.seq.count(n)
    out = counts / spec.normalizer
    return float(out[0]) if scalar else out


def convolve(f: StepDensity, spec: KernelSpec, s) -> float:
    """(f * psi_r)(s): exact intersection-mass sum over the lengths.

    Equals sum_k mass_f(B(t, l_k/2) and B(s, l_k/2)) / sum_k (l_k - r)_+ with
    t = s + r; since intersections of balls at distance r are the arcs
    (s + r - l_k/2, s + l_k/2), each term is one CDF difference.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=np.float64))
    seq = spec.seq
    n_star = seq.last_above(spec.r, strict=True)
    ell = seq.terms(seq.start, n_star)
    out = np.empty(s_arr.size)
    for i, si in enumerate(s_arr):
        hi = f.cdf_ext(si + ell / 2.0)
        lo = f.cdf_ext(si + spec.r - ell / 2.0)
        out[i] = float(np.sum(hi - lo)) / spec.normalizer
    return float(out[0]) if np.asarray(s).ndim == 0 else out


def convolve_direct(f: StepDensity, spec: KernelSpec, s: float) -> float:
    """Oracle: the same convolution via per-term ball-intersection masses."""
    seq = spec.seq
    n_star = seq.last_above(spec.r, strict=True)
    t = s + spec.r
    acc = 0.0
    for k in range(seq.start, n_star + 1):
        rho = seq.term(k) / 2.0
        inter_lo = t - rho
        inter_hi = s + rho
        if inter_hi > inter_lo:
            acc += f.cdf_ext(inter_hi) - f.cdf_ext(inter_lo)
    return acc / spec.normalizer


@dataclass
class L11Report:
    samples: np.ndarray
    statistic: np.ndarray    # n l_n / L_n
    tail_max: float          # max over the trailing half of samples


def l11_statistic(seq: LengthSequence, horizon: int) -> L11Report:
    """Trajectory of n l_n / (l_1 + ... + l_n) with its tail maximum.

    Values staying below 1 in the limit are the concentration condition under
    which the kernels act as an approximate identity for every integrable
    density.
    """
    lo = max(seq.start, 2)
    hi = horizon if seq.n_max is None else min(horizon, seq.n_max)
    if hi < lo:
        raise OutOfRangeError("horizon below the sequence start")
    ns = geometric_indices(lo, hi)
    stat = np.array([seq.count(int(n)) * seq.term(int(n)) / seq.prefix(int(n)) for n in ns])
    tail = stat[ns >= math.sqrt(lo * hi)]
    return L11Report(samples=ns, statistic=stat, tail_max=float(np.max(tail if tail.size else stat)))


def tangential_mass(spec: KernelSpec, delta_frac: float) -> float:
    """Kernel mass on the window of halfwidth delta r / 2 around the tip.

    The tip sits at u = -r/2 (the stack's center of symmetry); each term
    contributes min(delta r, l_k - r) / normalizer, evaluated exactly with
    prefix sums.
    """
    if not (0.0 < delta_frac < 1.0):
        raise OutOfRangeError("delta_frac must lie in (0, 1)")
    dr = delta_frac * spec.r
    seq = spec.seq
    # terms with l_k - r >= dr contribute dr; shorter supports contribute all
    n_full = seq.last_above(spec.r + dr, strict=False)
    n_any = seq.last_above(spec.r, strict=True)
    full_count = seq.count(n_full)
    partial_sum = (seq.prefix(n_any) - seq.prefix(n_full)) - (seq.count(n_any) - full_count) * spec.r
    return (full_count * dr + partial_sum) / spec.normalizer


@dataclass
class CaseReport:
    K: int
    label: str              # "case1" | "case2" | "case3"
    r: float
    kernel_ratio: float
    lambda_k: Optional[float]
    nu_weight: float
    bound: Optional[float]  # numeric only for case 3


def classify_case(q: QuantizedSequence, r: float, c: float, delta: float) -> CaseReport:
    """Classify a radius against the quantized scale structure.

    With K the scale index (b^(K+1) < r <= b^K; a radius exactly at a scale
    point joins the upper scale): case 1 when r <= c b^K, case 2 when the
    concentration ratio (nu_0 + ... + nu_K) b^K / sum nu_k b^k is at most
    delta, case 3 otherwise, with the explicit bound
    (K/2) ln(1/b) / sum_k nu_k (b^k - r)_+.  For cases 1 and 2 the bound on
    the convolution is m + eps_0 with eps_0 supplied by the caller's context,
    so the report leaves it symbolic (None).
    """
    if not (q.b < c < 1.0):
        raise OutOfRangeError("c must lie in (b, 1)")
    if not (0.0 < delta < 1.0):
        raise OutOfRangeError("delta must lie in (0, 1)")
    pw = q.powers
    if r > pw[0] or r <= pw[min(q.nu.size, pw.size - 1)]:
        raise ScaleOutOfRangeError(f"radius {r} outside the quantized scales")
    K = int(np.searchsorted(-pw, -r, side="right")) - 1
    if not (pw[K + 1] < r <= pw[K]):
        raise ScaleOutOfRangeError(f"radius {r} failed scale bracketing at K={K}")
    if K >= q.nu.size:
        raise ScaleOutOfRangeError(f"scale {K} has no counts")
    stats = concentration_stats(q, K) if K >= 1 else None
    kernel_ratio = stats.kernel_ratio if stats else 1.0
    lambda_k = stats.lambda_k if stats else None
    nu_weight = float(q.nu[K]) * float(pw[K])
    if r <= c * pw[K]:
        return CaseReport(K=K, label="case1", r=r, kernel_ratio=kernel_ratio,
                          lambda_k=lambda_k, nu_weight=nu_weight, bound=None)
    if kernel_ratio <= delta:
        return CaseReport(K=K, label="case2", r=r, kernel_ratio=kernel_ratio,
                          lambda_k=lambda_k, nu_weight=nu_weight, bound=None)
    ks = np.arange(q.nu.size)
    denom = float(np.sum(q.nu * np.maximum(pw[ks] - r, 0.0)))
    bound = (K / 2.0) * math.log(1.0 / q.b) / denom if denom > 0 else math.inf
    return CaseReport(K=K, label="case3", r=r, kernel_ratio=kernel_ratio,
                      lambda_k=lambda_k, nu_weight=nu_weight, bound=bound)
