"""Arc-length sequences and the scalar covering criteria derived from them.

A length sequence is a non-increasing sequence 0 < l_n < 1 of arc lengths.
Everything the covering analysis needs reduces to a handful of functionals of
the prefix sums L_n = l_1 + ... + l_n: positive-part sums, the Hawkes ratio
L_n / ln n, Shepp-type exponential series, a base-b quantization with per-scale
counts, the running-maximum index set Lambda, and head/tail block ratios.

Rule-defined sequences (harmonic c/n, the critical family
(1/m)(1/n - beta/(n ln n)), block-constant) expose exact terms for any index
and closed-form prefix sums past the materialization limit, so block searches
can run at indices far beyond anything that fits in memory.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyLambdaError,
    HorizonExceededError,
    NonMonotoneError,
    OutOfRangeError,
    ScaleMissedError,
    UnboundedError,
    UndefinedScaleError,
)

EULER_GAMMA = 0.5772156649015328606

DEFAULT_HORIZON = 10_000_000

# Indices up to this bound are summed term by term (with cached checkpoints);
# beyond it prefix sums switch to Euler-Maclaurin closed forms, which agree
# with direct summation to well under one part in 1e15 at that scale.
_EXACT_LIMIT = 1 << 24
_STRIDE = 1 << 12
_CHUNK = 1 << 20
_MATERIALIZE_MAX = 1 << 26

_SLOPE_MARGIN = 0.05  # classification band around the critical exponent -1


def _harmonic_number(n) -> float:
    """H_n for arbitrarily large integer n (exact-to-double asymptotics)."""
    if n <= 0:
        return 0.0
    if n <= 128:
        return math.fsum(1.0 / k for k in range(1, int(n) + 1))
    nf = float(n)
    return math.log(n) + EULER_GAMMA + 1.0 / (2 * nf) - 1.0 / (12 * nf * nf)


def geometric_indices(lo: int, hi: int, per_decade: int = 32) -> np.ndarray:
    """Integer sample points between lo and hi, roughly log-uniform."""
    if hi < lo:
        raise ValueError("empty index range")
    count = max(2, int(per_decade * math.log10(max(hi / max(lo, 1), 10))))
    grid = np.unique(np.round(np.exp(np.linspace(math.log(lo), math.log(hi), count))).astype(np.int64))
    grid = grid[(grid >= lo) & (grid <= hi)]
    if grid.size == 0 or grid[-1] != hi:
        grid = np.append(grid, hi)
    return grid


class LengthSequence:
    """Base class: non-increasing arc lengths with cached prefix sums.

    Subclasses provide ``term`` and ``_term_array``; prefix sums are cached at
    stride checkpoints so repeated queries cost O(stride).  Instances are
    immutable apart from the internal cache, whose extension is serialized
    with a lock.
    """

    start: int = 1
    n_max: Optional[int] = None  # None means the rule is unbounded

    def __init__(self):
        self._lock = threading.Lock()
        self._cp = [0.0]  # checkpoint i holds L at index start - 1 + i * _STRIDE
        self._cp_hi = self.start - 1  # largest index covered by checkpoints

    # -- rule interface -------------------------------------------------

    def term(self, n: int) -> float:
        raise NotImplementedError

    def _term_array(self, lo: int, hi: int) -> np.ndarray:
        raise NotImplementedError

    def _prefix_analytic(self, n) -> Optional[float]:
        """Closed-form L_n for indices past the materialization limit."""
        return None

    # -- shared machinery ------------------------------------------------

    def count(self, n) -> int:
        """Number of generated terms with index <= n."""
        if n < self.start:
            return 0
        top = n if self.n_max is None else min(n, self.n_max)
        return int(top) - self.start + 1

    def terms(self, lo: int, hi: int) -> np.ndarray:
        """Terms l_lo .. l_hi inclusive, validated non-increasing."""
        lo = max(lo, self.start)
        if self.n_max is not None:
            hi = min(hi, self.n_max)
        if hi < lo:
            return np.empty(0)
        if hi - lo + 1 > _MATERIALIZE_MAX:
            raise UnboundedError(f"refusing to materialize {hi - lo + 1} terms")
        out = self._term_array(lo, hi)
        self._validate_block(out, lo)
        return out

    def _validate_block(self, arr: np.ndarray, lo: int) -> None:
        if arr.size == 0:
            return
        if arr[0] <= 0.0 or arr[-1] <= 0.0 or arr[0] >= 1.0:
            bad = int(np.argmax((arr <= 0.0) | (arr >= 1.0)))
            raise OutOfRangeError(f"term at index {lo + bad} outside (0, 1)")
        if arr.size > 1 and np.any(np.diff(arr) > 0.0):
            bad = int(np.argmax(np.diff(arr) > 0.0))
            raise NonMonotoneError(f"increasing pair at indices {lo + bad}, {lo + bad + 1}")

    def _extend_checkpoints(self, n: int) -> None:
        while self._cp_hi < n:
            lo = self._cp_hi + 1
            hi = min(lo + _CHUNK - 1, self.start - 1 + (len(self._cp) - 1 + _CHUNK // _STRIDE) * _STRIDE)
            hi = min(lo + _CHUNK - 1, max(n, lo))
            # round hi up to a stride boundary so checkpoints stay aligned
            rel = hi - (self.start - 1)
            hi = (self.start - 1) + ((rel + _STRIDE - 1) // _STRIDE) * _STRIDE
            if self.n_max is not None:
                hi = min(hi, self.n_max)
            ell = self._term_array(lo, hi)
            self._validate_block(ell, lo)
            if len(self._cp) > 1:
                prev_last = self.term(lo - 1)
                if ell.size and ell[0] > prev_last:
                    raise NonMonotoneError(f"increasing pair at indices {lo - 1}, {lo}")
            cs = np.cumsum(ell) + self._cp[-1]
            for j in range(_STRIDE - 1, ell.size, _STRIDE):
                self._cp.append(float(cs[j]))
            self._cp_hi = hi
            if self.n_max is not None and hi >= self.n_max:
                break

    def prefix(self, n) -> float:
        """L_n = sum of terms with index <= n (0 below the start index)."""
        if n < self.start:
            return 0.0
        if self.n_max is not None:
            n = min(n, self.n_max)
        if n > _EXACT_LIMIT:
            val = self._prefix_analytic(n)
            if val is not None:
                return val
            raise UnboundedError(f"prefix at {n} exceeds the materialization limit")
        n = int(n)
        with self._lock:
            if n > self._cp_hi:
                self._extend_checkpoints(n)
            i = (n - (self.start - 1)) // _STRIDE
            base_idx = self.start - 1 + i * _STRIDE
            base = self._cp[i]
        if base_idx == n:
            return base
        tail = self._term_array(base_idx + 1, n)
        return base + float(np.sum(tail))

    def prefixes(self, ns: np.ndarray) -> np.ndarray:
        return np.array([self.prefix(int(n)) for n in ns])

    # -- index searches ---------------------------------------------------

    def last_above(self, x: float, strict: bool = True):
        """Largest index n with l_n > x (or >= x); start - 1 when none."""
        raise NotImplementedError

    def first_at_or_below(self, x: float):
        """Smallest index n with l_n <= x, or None if never reached."""
        n = self.last_above(x, strict=True)
        nxt = n + 1
        if self.n_max is not None and nxt > self.n_max:
            return None
        return max(nxt, self.start)

    def to_descriptor(self) -> dict:
        raise NotImplementedError


class HarmonicSeq(LengthSequence):
    """l_n = c / n, generated from the smallest index where c / n < 1."""

    def __init__(self, c: float, start: Optional[int] = None):
        if c <= 0:
            raise OutOfRangeError("harmonic parameter c must be positive")
        self.c = float(c)
        auto = int(math.floor(c)) + 1 if c >= 1.0 else 1
        self.start = int(start) if start is not None else auto
        if self.c / self.start >= 1.0:
            raise OutOfRangeError(f"first term c/{self.start} is not below 1")
        self.n_max = None
        super().__init__()

    def term(self, n) -> float:
        if n < self.start:
            raise OutOfRangeError(f"index {n} below the start index {self.start}")
        return self.c / float(n)

    def _term_array(self, lo, hi):
        return self.c / np.arange(lo, hi + 1, dtype=np.float64)

    def _prefix_analytic(self, n):
        return self.c * (_harmonic_number(n) - _harmonic_number(self.start - 1))

    def last_above(self, x, strict=True):
        if x <= 0.0:
            raise UnboundedError("harmonic sums diverge: no last index above a non-positive cut")

        def ok(n):
            t = self.c / float(n)
            return t > x if strict else t >= x

        if not ok(self.start):
            return self.start - 1
        # bisect the monotone predicate; stepping by 1 is hopeless at indices
        # where adjacent integers share a float value
        lo = self.start
        hi = max(int(self.c / x) * 2, self.start + 1)
        while ok(hi):
            lo, hi = hi, hi * 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                lo = mid
            else:
                hi = mid
        return lo

    def to_descriptor(self):
        return {"rule": "harmonic", "c": self.c, "start": self.start}

    # -- Lambda tail (running-maximum indices past the scan cap) ----------

    def _lambda_scan_state(self, scan_cap: int):
        """(running max of w_n over the scan, index from which w_n increases)."""
        cap = min(scan_cap, _EXACT_LIMIT)
        ell = self._term_array(self.start, cap)
        w = np.cumsum(ell) - np.log(np.arange(self.start, cap + 1, dtype=np.float64))
        run_max = float(np.max(w))
        if self.c <= 1.0:
            return run_max, None
        n_incr = max(int(math.ceil(0.5 / (self.c - 1.0))) + 2, self.start + 1)
        if n_incr >= cap:
            return run_max, None
        tail = w[n_incr - self.start:]
        if np.any(np.diff(tail) <= 0.0):
            last_bad = int(np.nonzero(np.diff(tail) <= 0.0)[0][-1])
            n_incr = n_incr + last_bad + 1
            if n_incr >= cap:
                return run_max, None
        return run_max, n_incr

    def _w(self, n) -> float:
        return self.prefix(n) - math.log(n)

    def lambda_first_at_or_after(self, n0, scan_cap: int = 1 << 21):
        """Smallest Lambda index >= n0, searching past the scan cap analytically."""
        cap = min(scan_cap, _EXACT_LIMIT)
        if n0 <= cap:
            lam = lambda_set(self, cap)
            pos = int(np.searchsorted(lam, n0))
            if pos < lam.size:
                return int(lam[pos])
            n0 = cap + 1
        run_max, n_incr = self._lambda_scan_state(cap)
        if n_incr is None:
            raise HorizonExceededError(None, "no Lambda indices past the scan cap (c <= 1?)")
        if self._w(n0) >= run_max:
            return n0
        lo, hi = n0, n0 * 2
        while self._w(hi) < run_max:
            lo, hi = hi, hi * 2
            if hi > 10 ** 400:
                raise HorizonExceededError(None, "Lambda tail crossing unreachable")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self._w(mid) >= run_max:
                hi = mid
            else:
                lo = mid
        return hi


class SheppCriticalSeq(LengthSequence):
    """l_n = (1/m) (1/n - beta / (n ln n)), generated from its monotone tail."""

    def __init__(self, m: float, beta: float, start: Optional[int] = None):
        if not (0.0 < m <= 1.0):
            raise OutOfRangeError("m must lie in (0, 1]")
        if beta <= 0.0:
            raise OutOfRangeError("beta must be positive")
        self.m = float(m)
        self.beta = float(beta)
        if start is None:
            u = 0.5 * (beta + math.sqrt(beta * beta + 4.0 * beta))
            n0 = max(int(math.ceil(math.exp(u))), int(math.ceil(math.exp(beta))) + 1, 3)
            while True:
                t0 = self._raw(n0)
                if 0.0 < t0 < 1.0 and self._raw(n0 + 1) <= t0:
                    break
                n0 += 1
            self.start = n0
        else:
            self.start = int(start)
            t0 = self._raw(self.start)
            if not (0.0 < t0 < 1.0):
                raise OutOfRangeError(f"term at start index {self.start} outside (0, 1)")
        self.n_max = None
        super().__init__()
        self._ll_bridge = None  # exact sum of 1/(k ln k) up to _EXACT_LIMIT

    def _raw(self, n) -> float:
        nf = float(n)
        return (1.0 / nf - self.beta / (nf * math.log(nf))) / self.m

    def term(self, n) -> float:
        if n < self.start:
            raise OutOfRangeError(f"index {n} below the start index {self.start}")
        return self._raw(n)

    def _term_array(self, lo, hi):
        n = np.arange(lo, hi + 1, dtype=np.float64)
        return (1.0 / n - self.beta / (n * np.log(n))) / self.m

    def _prefix_analytic(self, n):
        if self._ll_bridge is None:
            k = np.arange(self.start, _EXACT_LIMIT + 1, dtype=np.float64)
            acc = 0.0
            for i in range(0, k.size, _CHUNK):
                blk = k[i:i + _CHUNK]
                acc += float(np.sum(1.0 / (blk * np.log(blk))))
            self._ll_bridge = acc
        nf = float(n)
        m_lim = float(_EXACT_LIMIT)
        harmonic_part = _harmonic_number(n) - _harmonic_number(self.start - 1)
        ll_tail = (math.log(math.log(n)) + 1.0 / (2 * nf * math.log(nf))) - (
            math.log(math.log(m_lim)) + 1.0 / (2 * m_lim * math.log(m_lim))
        )
        return (harmonic_part - self.beta * (self._ll_bridge + ll_tail)) / self.m

    def last_above(self, x, strict=True):
        if x <= 0.0:
            raise UnboundedError("divergent sums: no last index above a non-positive cut")
        if not (self.term(self.start) > x if strict else self.term(self.start) >= x):
            return self.start - 1
        lo, hi = self.start, max(2 * self.start, 16)
        while (self.term(hi) > x if strict else self.term(hi) >= x):
            lo, hi = hi, hi * 2
            if hi > 10 ** 300:
                raise UnboundedError("cut below the representable range of the rule")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if (self.term(mid) > x if strict else self.term(mid) >= x):
                lo = mid
            else:
                hi = mid
        return lo

    def to_descriptor(self):
        return {"rule": "shepp_critical", "m": self.m, "beta": self.beta, "start": self.start}


class BlockConstantSeq(LengthSequence):
    """Piecewise-constant sequence given as (count, value) blocks."""

    def __init__(self, blocks: Sequence[tuple], allow_unit: bool = False):
        if not blocks:
            raise OutOfRangeError("at least one block required")
        self.block_counts = [int(c) for c, _ in blocks]
        self.block_values = [float(v) for _, v in blocks]
        top = 1.0 + 1e-15 if allow_unit else 1.0
        for c, v in zip(self.block_counts, self.block_values):
            if c < 1:
                raise OutOfRangeError("block counts must be positive")
            if not (0.0 < v < top):
                raise OutOfRangeError(f"block value {v} outside the valid range")
        if any(b > a for a, b in zip(self.block_values, self.block_values[1:])):
            raise NonMonotoneError("block values must be non-increasing")
        self.start = 1
        self.cum_counts = []
        acc = 0
        for c in self.block_counts:
            acc += c
            self.cum_counts.append(acc)
        self.n_max = acc
        sums, acc_s = [], 0.0
        for c, v in zip(self.block_counts, self.block_values):
            acc_s += float(c) * v
            sums.append(acc_s)
        self.cum_sums = sums
        super().__init__()

    def _block_of(self, n) -> int:
        return bisect.bisect_left(self.cum_counts, n)

    def term(self, n) -> float:
        if n < 1 or n > self.n_max:
            raise OutOfRangeError(f"index {n} outside 1..{self.n_max}")
        return self.block_values[self._block_of(n)]

    def _term_array(self, lo, hi):
        out = np.empty(hi - lo + 1)
        j = self._block_of(lo)
        pos = lo
        while pos <= hi:
            end = min(self.cum_counts[j], hi)
            out[pos - lo:end - lo + 1] = self.block_values[j]
            pos = end + 1
            j += 1
        return out

    def prefix(self, n) -> float:
        if n < 1:
            return 0.0
        n = min(n, self.n_max)
        j = self._block_of(n)
        before = self.cum_sums[j - 1] if j else 0.0
        used = n - (self.cum_counts[j - 1] if j else 0)
        return before + float(used) * self.block_values[j]

    def last_above(self, x, strict=True):
        n = 0
        for j, v in enumerate(self.block_values):
            if (v > x) if strict else (v >= x):
                n = self.cum_counts[j]
        return n if n else 0

    def to_descriptor(self):
        return {"rule": "block_constant", "blocks": [[c, v] for c, v in zip(self.block_counts, self.block_values)]}


class ExplicitSeq(LengthSequence):
    """Finite explicit list of lengths."""

    def __init__(self, values):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise OutOfRangeError("explicit sequence must be a non-empty 1-d list")
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise OutOfRangeError("explicit terms must lie in (0, 1)")
        if np.any(np.diff(arr) > 0.0):
            raise NonMonotoneError("explicit terms must be non-increasing")
        self.values = arr
        self.start = 1
        self.n_max = arr.size
        self._cumsum = np.concatenate([[0.0], np.cumsum(arr)])
        super().__init__()

    def term(self, n) -> float:
        if n < 1 or n > self.n_max:
            raise OutOfRangeError(f"index {n} outside 1..{self.n_max}")
        return float(self.values[n - 1])

    def _term_array(self, lo, hi):
        return self.values[lo - 1:hi]

    def prefix(self, n) -> float:
        if n < 1:
            return 0.0
        return float(self._cumsum[min(int(n), self.n_max)])

    def last_above(self, x, strict=True):
        side = "left" if strict else "right"
        return int(np.searchsorted(-self.values, -x, side=side))

    def to_descriptor(self):
        return {"rule": "explicit", "values": self.values.tolist()}


def make_sequence(descriptor) -> LengthSequence:
    """Build a LengthSequence from a rule descriptor (dict or JSON-style)."""
    if isinstance(descriptor, LengthSequence):
        return descriptor
    d = dict(descriptor)
    rule = d.pop("rule", None)
    if rule == "harmonic":
        return HarmonicSeq(d["c"], start=d.get("start"))
    if rule == "shepp_critical":
        return SheppCriticalSeq(d["m"], d["beta"], start=d.get("start"))
    if rule == "block_constant":
        return BlockConstantSeq([tuple(b) for b in d["blocks"]])
    if rule == "explicit":
        return ExplicitSeq(d["values"])
    raise OutOfRangeError(f"unknown sequence rule {rule!r}")


# ---------------------------------------------------------------------------
# scalar functionals
# ---------------------------------------------------------------------------


def positive_part_sum(seq: LengthSequence, r: float, horizon: int = DEFAULT_HORIZON) -> float:
    """Sum of (l_n - r)_+ over the sequence, exact via prefix sums.

    The index horizon is explicit: if the cut r = 0 on an unbounded rule, or
    the last index above r exceeds the horizon, an UnboundedError is raised
    rather than silently truncating.
    """
    if r < 0.0:
        raise OutOfRangeError("r must be non-negative")
    if r == 0.0:
        if seq.n_max is None:
            raise UnboundedError("sum of all terms diverges beyond any horizon")
        n_star = seq.n_max
    else:
        n_star = seq.last_above(r, strict=True)
    if n_star < seq.start:
        return 0.0
    if seq.n_max is None and n_star > horizon and seq._prefix_analytic(n_star) is None:
        raise UnboundedError(f"positive-part support reaches index {n_star} past horizon {horizon}")
    return seq.prefix(n_star) - seq.count(n_star) * r


@dataclass
class HawkesReport:
    """Finite-horizon estimate of limsup L_n / ln n."""

    horizon: int
    samples: np.ndarray
    ratios: np.ndarray
    ratio_max: float          # max of L_n / ln n over the samples (lower bound)
    limsup_estimate: float    # regression estimate of the leading coefficient
    fit_coefficients: tuple   # (D, loglog coefficient, intercept)
    fit_residual: float
    fit_ok: bool
    label: str = "lower estimate at horizon N"


def _fit_log_model(ns: np.ndarray, ys: np.ndarray):
    """Least squares for y ~ p ln n + q ln ln n + r."""
    u = np.log(ns.astype(np.float64))
    v = np.log(u)
    cols = np.column_stack([u, v, np.ones_like(u)])
    scale = np.linalg.norm(cols, axis=0)
    coef, *_ = np.linalg.lstsq(cols / scale, ys, rcond=None)
    coef = coef / scale
    resid = ys - cols @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return float(coef[0]), float(coef[1]), float(coef[2]), rms


def hawkes_d(seq: LengthSequence, horizon: int) -> HawkesReport:
    """Estimate D = limsup L_n / ln n from the trajectory up to the horizon.

    Two estimates are reported: the running maximum of the sampled ratios
    (a certified lower bound at this horizon) and a regression estimate of the
    leading coefficient in L_n ~ D ln n + q ln ln n + r, which removes the
    slowly-decaying ln ln n drag that keeps the raw ratio far below its limit
    at any reachable horizon.
    """
    if horizon < 3:
        raise OutOfRangeError("horizon must be at least 3")
    lo = max(seq.start, 3)
    hi = horizon if seq.n_max is None else min(horizon, seq.n_max)
    if hi < lo:
        raise OutOfRangeError("horizon below the sequence start")
    ns = geometric_indices(lo, hi)
    ls = seq.prefixes(ns)
    ratios = ls / np.log(ns)
    ratio_max = float(np.max(ratios))
    tail_lo = max(lo, int(hi ** 0.4))
    mask = ns >= tail_lo
    if np.count_nonzero(mask) < 8:
        mask = np.ones_like(ns, dtype=bool)
    p, q, r, rms = _fit_log_model(ns[mask], ls[mask])
    fit_ok = rms < 0.05
    estimate = p if fit_ok else ratio_max
    return HawkesReport(
        horizon=horizon,
        samples=ns,
        ratios=ratios,
        ratio_max=ratio_max,
        limsup_estimate=estimate,
        fit_coefficients=(p, q, r),
        fit_residual=rms,
        fit_ok=fit_ok,
    )


@dataclass
class SeriesReport:
    """Partial sums and divergence classification of sum exp(a L_n) / n^2."""

    a: float
    horizon: int
    samples: np.ndarray
    log_terms: np.ndarray
    log_partial_sums: np.ndarray
    log_sum: float
    classification: str       # "diverges" | "converges" | "inconclusive"
    power_exponent: float     # fitted coefficient of ln n in ln(term_n)
    log_exponent: float       # fitted coefficient of ln ln n


def _classify_exponents(p: float, q: float) -> str:
    """Divergence verdict from term_n ~ n^p (ln n)^q.

    The power exponent decides away from the critical value -1; inside the
    margin band the ln-power refines the call (sum n^-1 (ln n)^q converges
    exactly when q < -1).
    """
    if p > -1.0 + _SLOPE_MARGIN:
        return "diverges"
    if p < -1.0 - _SLOPE_MARGIN:
        return "converges"
    if q < -1.0 - _SLOPE_MARGIN:
        return "converges"
    if q > -1.0 + _SLOPE_MARGIN:
        return "diverges"
    return "inconclusive"


def shepp_series(seq: LengthSequence, a: float, horizon: int) -> SeriesReport:
    """Partial sums of sum_n exp(a L_n) / n^2 with a divergence verdict.

    Terms are handled in log space throughout, so L_n of order ln N never
    overflows.  Classification fits ln(term_n) against ln n and ln ln n over
    the trailing two decades.
    """
    if a < 0.0:
        raise OutOfRangeError("a must be non-negative")
    lo = max(seq.start, 2)
    hi = int(horizon)
    if hi < lo + 8:
        raise OutOfRangeError("horizon too small for classification")
    samples = geometric_indices(lo, hi)
    sample_logs = np.empty(samples.size)
    running = -np.inf
    si = 0
    pos = lo
    carry = seq.prefix(lo - 1)
    while pos <= hi:
        end = min(pos + _CHUNK - 1, hi)
        if seq.n_max is not None and pos > seq.n_max:
            ell = np.zeros(end - pos + 1)
        else:
            cap = end if seq.n_max is None else min(end, seq.n_max)
            ell = seq.terms(pos, cap)
            if cap < end:
                ell = np.concatenate([ell, np.zeros(end - cap)])
        ns = np.arange(pos, end + 1, dtype=np.float64)
        lt = a * (carry + np.cumsum(ell)) - 2.0 * np.log(ns)
        acc = np.logaddexp.accumulate(lt)
        while si < samples.size and samples[si] <= end:
            sample_logs[si] = np.logaddexp(running, acc[samples[si] - pos])
            si += 1
        running = float(np.logaddexp(running, acc[-1]))
        carry += float(np.sum(ell))
        pos = end + 1
    log_terms = a * seq.prefixes(samples) - 2.0 * np.log(samples.astype(np.float64))
    window = samples >= max(lo, hi // 100)
    p_fit, q_fit, _, _ = _fit_log_model(samples[window], log_terms[window])
    return SeriesReport(
        a=a,
        horizon=hi,
        samples=samples,
        log_terms=log_terms,
        log_partial_sums=sample_logs,
        log_sum=running,
        classification=_classify_exponents(p_fit, q_fit),
        power_exponent=p_fit,
        log_exponent=q_fit,
    )


# ---------------------------------------------------------------------------
# quantization
# ---------------------------------------------------------------------------


@dataclass
class QuantizedSequence:
    """Lengths rounded up to powers of a base b in (0, 1).

    nu[q] counts terms in the half-open scale bucket (b^{q+1}, b^q]; the
    rounded sequence l'_i equals b^q on the index block
    (nu_0 + ... + nu_{q-1}, nu_0 + ... + nu_q].  Powers are produced by
    repeated multiplication so that bucket comparisons and the sandwich
    b l' <= l <= l' are exact in floating point (b * powers[q] is bitwise
    powers[q+1]).  Indices are rebased to 1..count over the generated prefix.
    """

    b: float
    nu: np.ndarray
    powers: np.ndarray
    count: int
    source: LengthSequence = field(repr=False)
    _cum: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self._cum is None:
            self._cum = np.cumsum(self.nu)

    def scale_of(self, i: int) -> int:
        """Scale bucket of the i-th (rebased) index."""
        if not (1 <= i <= self.count):
            raise OutOfRangeError(f"index {i} outside 1..{self.count}")
        return int(np.searchsorted(self._cum, i, side="left"))

    def l_prime(self, i: int) -> float:
        return float(self.powers[self.scale_of(i)])

    def l_prime_array(self) -> np.ndarray:
        return np.repeat(self.powers[: self.nu.size], self.nu)

    def to_length_sequence(self) -> BlockConstantSeq:
        blocks = [(int(c), float(self.powers[q])) for q, c in enumerate(self.nu) if c > 0]
        return BlockConstantSeq(blocks, allow_unit=True)


def quantize(seq: LengthSequence, b: float, horizon: int) -> QuantizedSequence:
    """Bucket the first terms by scale: nu_q = #{n <= N : b^{q+1} < l_n <= b^q}."""
    if not (0.0 < b < 1.0):
        raise OutOfRangeError("base b must lie in (0, 1)")
    hi = horizon if seq.n_max is None else min(horizon, seq.n_max)
    ell = seq.terms(seq.start, hi)
    if ell.size == 0:
        raise OutOfRangeError("no terms below the horizon")
    lmin = float(ell[-1])
    pw = [1.0]
    while pw[-1] >= lmin:
        pw.append(pw[-1] * b)
        if len(pw) > 200_000:
            raise OutOfRangeError("quantization scale count exploded; raise b or lower the horizon")
    powers = np.array(pw)
    q_idx = np.searchsorted(-powers, -ell, side="right") - 1
    nu = np.bincount(q_idx)
    assert int(nu.sum()) == ell.size
    return QuantizedSequence(b=b, nu=nu, powers=powers, count=ell.size, source=seq)


@dataclass
class ConcentrationStats:
    lambda_k: float      # nu_K / (nu_0 + ... + nu_{K-1})
    kernel_ratio: float  # (nu_0 + ... + nu_K) b^K / sum nu_k b^k
    nu_weight: float     # nu_K b^K


def concentration_stats(q: QuantizedSequence, K: int) -> ConcentrationStats:
    if K < 0 or K >= q.nu.size:
        raise UndefinedScaleError(f"scale {K} outside 0..{q.nu.size - 1}")
    head = float(np.sum(q.nu[:K]))
    if head <= 0.0:
        raise UndefinedScaleError(f"no counts below scale {K}")
    pw = q.powers[: K + 1]
    weights = q.nu[: K + 1].astype(np.float64)
    denom = float(np.sum(weights * pw))
    return ConcentrationStats(
        lambda_k=float(q.nu[K]) / head,
        kernel_ratio=float(np.sum(weights)) * float(pw[K]) / denom,
        nu_weight=float(q.nu[K]) * float(pw[K]),
    )


# ---------------------------------------------------------------------------
# the Lambda set and covering blocks
# ---------------------------------------------------------------------------


def lambda_set(seq: LengthSequence, horizon: int) -> np.ndarray:
    """Indices where u_n = exp(L_n) / n attains a running maximum.

    Computed in log space as w_n = L_n - ln n.  Every returned index also
    satisfies the arc lower bound l_n > 1 / (2n); if no running-maximum index
    does, the sequence offers no usable block ends at this horizon and an
    EmptyLambdaError is raised.
    """
    hi = horizon if seq.n_max is None else min(horizon, seq.n_max)
    if hi < seq.start:
        raise OutOfRangeError("horizon below the sequence start")
    ell = seq.terms(seq.start, hi)
    ns = np.arange(seq.start, hi + 1, dtype=np.float64)
    w = np.cumsum(ell) + (seq.prefix(seq.start - 1)) - np.log(ns)
    run = np.maximum.accumulate(w)
    member = np.empty(w.size, dtype=bool)
    member[0] = True
    member[1:] = w[1:] >= run[:-1]
    member &= ell > 0.5 / ns
    if not member.any():
        raise EmptyLambdaError("no running-maximum index satisfies l_n > 1/(2n)")
    return np.nonzero(member)[0].astype(np.int64) + seq.start


@dataclass
class Block:
    k: int
    n1: int
    n2: int
    ratio: float  # L_{n1} / (L_{n2} - L_{n1 - 1}), strictly below 2^-k


@dataclass
class BlockSchedule:
    blocks: list

    def __post_init__(self):
        for blk in self.blocks:
            if not blk.ratio < 2.0 ** (-blk.k):
                raise OutOfRangeError(f"block k={blk.k} ratio {blk.ratio} not below 2^-{blk.k}")
        for a, b in zip(self.blocks, self.blocks[1:]):
            if b.n1 <= a.n2:
                raise NonMonotoneError("blocks must be disjoint and increasing")


def find_block(seq: LengthSequence, k: int, n1: int, horizon: int = DEFAULT_HORIZON,
               lam: Optional[np.ndarray] = None) -> Block:
    """Smallest Lambda index n2 > n1 with L_{n1} / (L_{n2} - L_{n1-1}) < 2^-k."""
    n1 = max(int(n1), seq.start)
    head = seq.prefix(n1)
    target = seq.prefix(n1 - 1) + (2.0 ** k) * head
    hi = horizon if seq.n_max is None else min(horizon, seq.n_max)
    if hi <= n1 or seq.prefix(hi) <= target:
        raise HorizonExceededError(k)
    lo_i, hi_i = n1 + 1, hi
    while hi_i - lo_i > 1:
        mid = (lo_i + hi_i) // 2
        if seq.prefix(mid) > target:
            hi_i = mid
        else:
            lo_i = mid
    n_req = hi_i if seq.prefix(lo_i) <= target else lo_i
    if lam is None:
        lam = lambda_set(seq, hi)
    pos = int(np.searchsorted(lam, max(n_req, n1 + 1)))
    if pos >= lam.size:
        raise HorizonExceededError(k)
    n2 = int(lam[pos])
    ratio = head / (seq.prefix(n2) - seq.prefix(n1 - 1))
    return Block(k=k, n1=n1, n2=n2, ratio=ratio)


def find_blocks(seq: LengthSequence, k_max: int, start_gaps: Sequence[int],
                horizon: int = DEFAULT_HORIZON) -> BlockSchedule:
    """Disjoint increasing blocks for k = 1..k_max with head/tail ratio < 2^-k.

    start_gaps supplies the minimum n1 per level (encoding the caller's
    l_{n1} thresholds); disjointness additionally forces n1_k past the
    previous block end.
    """
    if len(start_gaps) < k_max:
        raise OutOfRangeError("start_gaps must provide a minimum n1 for every level")
    hi = horizon if seq.n_max is None else min(horizon, seq.n_max)
    lam = lambda_set(seq, hi)
    blocks = []
    prev_n2 = seq.start - 1
    for k in range(1, k_max + 1):
        n1 = max(int(start_gaps[k - 1]), prev_n2 + 1)
        blk = find_block(seq, k, n1, horizon=horizon, lam=lam)
        blocks.append(blk)
        prev_n2 = blk.n2
    return BlockSchedule(blocks)


def _find_block_extended(seq: HarmonicSeq, k: int, n1, scan_cap: int = 1 << 21) -> Block:
    """find_block for harmonic rules with no index budget (analytic prefixes)."""
    n1 = max(int(n1), seq.start)
    head = seq.prefix(n1)
    target = seq.prefix(n1 - 1) + (2.0 ** k) * head
    # bisect the prefix crossing; prefix ~ c ln n gives the initial bracket
    guess = math.exp(min((target / seq.c) + _harmonic_number(seq.start - 1) / 1.0, 900.0))
    hi_i = max(int(guess) + 2, n1 + 2)
    while seq.prefix(hi_i) <= target:
        hi_i *= 2
    lo_i = n1 + 1
    while hi_i - lo_i > 1:
        mid = (lo_i + hi_i) // 2
        if seq.prefix(mid) > target:
            hi_i = mid
        else:
            lo_i = mid
    n_req = hi_i
    n2 = seq.lambda_first_at_or_after(max(n_req, n1 + 1), scan_cap=scan_cap)
    ratio = head / (seq.prefix(n2) - seq.prefix(n1 - 1))
    return Block(k=k, n1=n1, n2=n2, ratio=ratio)


# ---------------------------------------------------------------------------
# block-constant construction from scale windows
# ---------------------------------------------------------------------------


@dataclass
class Theorem2Pick:
    count: int    # n_k
    window: int   # index j_k into the scale-window list
    value: float  # b_k


@dataclass
class BlockConstruction:
    sequence: BlockConstantSeq
    picks: list


def theorem2_sequence(m: float, epsilons: Sequence[float], scales: Sequence[tuple],
                      growth_factor: float = 10.0, n_min: int = 16) -> BlockConstruction:
    """Block-constant sequence whose values track h(x) = ln(x) / (m x) inside
    the supplied decreasing scale windows.

    Each pick places h(n_k) inside [u_j / (1 - eps_j), v_j / (1 - eps_j)] for
    an increasing run of window indices j, bisecting along the decreasing
    branch of h.  The growth condition
    prod_{i<=k} n_i^{1 - eps_i} <= n_k^{1 - eps_k / 2} is enforced by
    multiplying a failing candidate by growth_factor, which pushes it into
    deeper windows.  Block k of the result repeats
    b_k = (1 - eps_{j_k}) h(n_k) for n_k consecutive indices.
    """
    if m <= 0.0:
        raise OutOfRangeError("m must be positive")
    if growth_factor <= 1.0:
        raise OutOfRangeError("growth_factor must exceed 1")
    eps = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(eps, eps[1:])) or any(e <= 0.0 or e >= 1.0 for e in eps):
        raise OutOfRangeError("epsilons must decrease strictly inside (0, 1)")
    wins = [(float(u), float(v)) for u, v in scales]
    for (u, v) in wins:
        if not (0.0 < u < v):
            raise OutOfRangeError("each scale window needs 0 < u < v")
    if len(eps) < len(wins):
        raise OutOfRangeError("need one epsilon per scale window")

    def h(x: float) -> float:
        return math.log(x) / (m * x)

    def first_below(v_target: float, n_from: int) -> int:
        """Smallest integer n >= n_from with h(n) <= v_target (h decreasing)."""
        lo = max(n_from, 3)
        if h(lo) <= v_target:
            return lo
        hi = lo * 2
        while h(hi) > v_target:
            lo, hi = hi, hi * 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if h(mid) <= v_target:
                hi = mid
            else:
                lo = mid
        return hi

    picks = []
    lhs = 0.0  # sum of (1 - eps_{j_i}) ln n_i so far
    n_prev = max(int(n_min), 3)
    j = 0
    while j < len(wins):
        u, v = wins[j]
        u_adj, v_adj = u / (1.0 - eps[j]), v / (1.0 - eps[j])
        n_cand = first_below(v_adj, n_prev + 1)
        if h(n_cand) < u_adj:
            came_from_above = h(max(n_cand - 1, 3)) > v_adj
            if came_from_above and n_cand > n_prev + 1:
                raise ScaleMissedError(
                    f"window {j}: h stepped from above {v_adj:.3g} past {u_adj:.3g} at n={n_cand}"
                )
            j += 1  # window already passed by earlier growth; take the next one
            continue
        if lhs > (eps[j] / 2.0) * math.log(n_cand):
            # growth condition fails: push the candidate deeper and retry
            n_prev = int(math.ceil(n_cand * growth_factor))
            j += 1
            continue
        b_val = (1.0 - eps[j]) * h(n_cand)
        picks.append(Theorem2Pick(count=n_cand, window=j, value=b_val))
        lhs += (1.0 - eps[j]) * math.log(n_cand)
        n_prev = n_cand
        j += 1
    if not picks:
        raise ScaleMissedError("no scale window admitted a block")
    blocks = [(p.count, p.value) for p in picks]
    return BlockConstruction(sequence=BlockConstantSeq(blocks), picks=picks)
