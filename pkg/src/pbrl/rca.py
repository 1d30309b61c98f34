"""BI-AWGN capacity, the reciprocal energy function and RCA thresholds.

SNR convention: a channel SNR ``s`` means the channel LLR of a transmitted
bit is Gaussian with mean ``2s`` and variance ``4s``.  For antipodal
signalling at code rate ``R`` this gives ``Eb/N0 = s / (2R)``.

Tables are kept in the log domain.  ``C(s)`` is tabulated through
``log C`` and ``1 - C(s)`` through ``log(1 - C)``, so both ends of the
reciprocal map ``R(s) = C^{-1}(1 - C(s))`` stay well conditioned.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numba import njit

from pbrl.protograph import Protomatrix

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
S_MIN = 1e-6
S_MAX = 1e4
TABLE_KNOTS = 20000
GH_ORDER = 64
DEFAULT_ITERS = 1000
DEFAULT_STOP = 100.0
DEFAULT_PRECISION_DB = 0.002

# Above this SNR Gauss-Hermite loses relative accuracy on 1 - C(s); the
# rescaled integral takes over.
_GH_LIMIT = 2.0
_TAIL_GRID = np.linspace(-120.0, 120.0, 24001)


class RcaError(RuntimeError):
    """Raised when no threshold bracket exists."""


def _log_capacity_terms(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(log C(s), log(1 - C(s)))`` for ``s > 0``."""
    s = np.asarray(s, dtype=float)
    log_c = np.empty_like(s)
    log_j = np.empty_like(s)

    small = s <= _GH_LIMIT
    if np.any(small):
        u, w = np.polynomial.hermite.hermgauss(GH_ORDER)
        ss = s[small][:, None]
        llr = 2.0 * np.sqrt(2.0 * ss) * u[None, :] + 2.0 * ss
        soft = np.logaddexp(0.0, -llr)
        j = (w * soft).sum(axis=1) / math.sqrt(math.pi) / LN2
        # written as E[1 - log2(1 + e^-L)] to keep tiny capacities exact
        c = (w * (LN2 - soft)).sum(axis=1) / math.sqrt(math.pi) / LN2
        log_j[small] = np.log(j)
        log_c[small] = np.log(c)

    big = ~small
    if np.any(big):
        # 1 - C(s) = exp(-s/2) * K(s),
        # K(s) = (8 pi s)^-1/2 * Int log2(1 + e^-L) e^{L/2} e^{-L^2 / 8s} dL
        grid = _TAIL_GRID
        dl = grid[1] - grid[0]
        g = np.logaddexp(0.0, -grid) / LN2 * np.exp(grid / 2.0)
        sb = s[big][:, None]
        k = (g[None, :] * np.exp(-grid[None, :] ** 2 / (8.0 * sb))).sum(axis=1) * dl
        k /= np.sqrt(8.0 * math.pi * s[big])
        lj = -s[big] / 2.0 + np.log(k)
        log_j[big] = lj
        log_c[big] = np.log1p(-np.exp(lj))
    return log_c, log_j


def capacity(s: float) -> float:
    """Capacity in bits of the BI-AWGN channel with SNR ``s`` (direct quadrature)."""
    if s < 0:
        raise ValueError(f"negative SNR {s}")
    if s == 0:
        return 0.0
    log_c, _ = _log_capacity_terms(np.array([s]))
    return float(np.exp(log_c[0]))


@dataclass(frozen=True, eq=False)
class CapacityTable:
    """Log-spaced lookup table for ``C``, ``C^{-1}`` and ``R``.

    ``log_grid`` is uniform in ``log s`` over ``[S_MIN, S_MAX]``, so lookups
    are O(1) index arithmetic.
    """

    log_grid: np.ndarray
    log_c: np.ndarray
    log_j: np.ndarray
    log_r: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        return np.exp(self.log_grid)

    @property
    def c(self) -> np.ndarray:
        return np.exp(self.log_c)

    @property
    def du(self) -> float:
        return float(self.log_grid[1] - self.log_grid[0])

    def capacity(self, s):
        """Table lookup of ``C(s)``, vectorized."""
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise ValueError("negative SNR")
        with np.errstate(divide="ignore"):
            lu = np.log(s)
        lc = np.interp(lu, self.log_grid, self.log_c)
        # C(s) ~ kappa * s below the grid
        lc = np.where(lu < self.log_grid[0], self.log_c[0] + (lu - self.log_grid[0]), lc)
        above = lu > self.log_grid[-1]
        out = np.where(above, 1.0, np.exp(lc))
        return np.where(s == 0, 0.0, out)

    def inverse_capacity(self, c):
        """``C^{-1}(c)`` for ``c`` in ``[0, 1)``; returns ``S_MAX`` at or near 1."""
        c = np.asarray(c, dtype=float)
        if np.any((c < 0) | (c > 1)):
            raise ValueError("capacity must lie in [0, 1]")
        out = np.empty_like(c)
        flat = c.ravel()
        res = out.ravel()
        for i, v in enumerate(flat):
            res[i] = _inverse_capacity(v, self.log_grid, self.log_c, self.log_j)
        return out if out.ndim else float(out)

    def reciprocal(self, s):
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        flat = s.ravel()
        res = out.ravel()
        u0, du = float(self.log_grid[0]), self.du
        for i, v in enumerate(flat):
            res[i] = _reciprocal(v, self.log_r, self.log_j, self.log_c, u0, du)
        return out if out.ndim else float(out)

    @property
    def interpolation_error(self) -> float:
        """Worst relative error of linear log-log interpolation of ``C`` at grid midpoints."""
        mid = 0.5 * (self.log_grid[:-1] + self.log_grid[1:])
        sel = slice(None, None, 97)
        exact, _ = _log_capacity_terms(np.exp(mid[sel]))
        approx = 0.5 * (self.log_c[:-1] + self.log_c[1:])[sel]
        return float(np.max(np.abs(np.expm1(approx - exact))))


@functools.lru_cache(maxsize=4)
def build_table(knots: int = TABLE_KNOTS) -> CapacityTable:
    log_grid = np.linspace(math.log(S_MIN), math.log(S_MAX), knots)
    log_c, log_j = _log_capacity_terms(np.exp(log_grid))
    log_r = np.empty(knots)
    u0 = log_grid[0]

    # R(s) = C^{-1}(J(s)) where J(s) <= 1/2, else J^{-1}(C(s)); each branch
    # inverts the half of the table that is well resolved.
    upper = log_j <= math.log(0.5)
    usable = log_c <= math.log(0.7)
    y = log_j[upper]
    r = np.interp(y, log_c[usable], log_grid[usable])
    below = y < log_c[0]
    r[below] = u0 + (y[below] - log_c[0])
    log_r[upper] = r
    y = log_c[~upper]
    log_r[~upper] = np.interp(y, log_j[::-1], log_grid[::-1])

    for arr in (log_grid, log_c, log_j, log_r):
        arr.setflags(write=False)
    return CapacityTable(log_grid, log_c, log_j, log_r)


def default_table() -> CapacityTable:
    return build_table(TABLE_KNOTS)


@njit(cache=True)
def _inverse_j(y, log_grid, log_j):
    # log_j is decreasing; binary search for log J(r) = y
    n = log_j.shape[0]
    if y >= log_j[0]:
        return log_grid[0]
    if y <= log_j[n - 1]:
        # log J(r) ~ -r/2 + const beyond the table
        s_last = math.exp(log_grid[n - 1])
        return math.log(s_last + 2.0 * (log_j[n - 1] - y))
    lo, hi = 0, n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if log_j[mid] > y:
            lo = mid
        else:
            hi = mid
    f = (y - log_j[lo]) / (log_j[hi] - log_j[lo])
    return log_grid[lo] + f * (log_grid[hi] - log_grid[lo])


@njit(cache=True)
def _inverse_capacity(c, log_grid, log_c, log_j):
    if c <= 0.0:
        return 0.0
    if c >= 1.0:
        return S_MAX
    if c > 0.5:
        lu = _inverse_j(math.log1p(-c), log_grid, log_j)
        return min(math.exp(lu), S_MAX)
    y = math.log(c)
    if y <= log_c[0]:
        return math.exp(log_grid[0] + (y - log_c[0]))
    lo, hi = 0, log_c.shape[0] - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if log_c[mid] < y:
            lo = mid
        else:
            hi = mid
    f = (y - log_c[lo]) / (log_c[hi] - log_c[lo])
    return math.exp(log_grid[lo] + f * (log_grid[hi] - log_grid[lo]))


@njit(cache=True)
def _reciprocal(s, log_r, log_j, log_c, u0, du):
    if s <= 0.0:
        return S_MAX
    lu = math.log(s)
    n = log_r.shape[0]
    if lu <= u0:
        # C(s) ~ kappa * s, then invert J through the table
        y = log_c[0] + (lu - u0)
        n_grid = log_j.shape[0]
        # rebuild the grid coordinate on the fly: log_grid[i] = u0 + i*du
        if y >= log_j[0]:
            return S_MAX
        if y <= log_j[n_grid - 1]:
            s_last = math.exp(u0 + du * (n_grid - 1))
            return min(s_last + 2.0 * (log_j[n_grid - 1] - y), S_MAX)
        lo, hi = 0, n_grid - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if log_j[mid] > y:
                lo = mid
            else:
                hi = mid
        f = (y - log_j[lo]) / (log_j[hi] - log_j[lo])
        return min(math.exp(u0 + du * (lo + f)), S_MAX)
    p = (lu - u0) / du
    i = int(p)
    if i >= n - 1:
        # 1 - C(s) ~ exp(-s/2) K; C^{-1} is linear near zero
        s_last = math.exp(u0 + du * (n - 1))
        return math.exp(log_r[n - 1] - (s - s_last) / 2.0)
    f = p - i
    return math.exp(log_r[i] * (1.0 - f) + log_r[i + 1] * f)


def reciprocal_energy(s: float, table: CapacityTable | None = None) -> float:
    """``R(s) = C^{-1}(1 - C(s))``, clamped to ``[0, S_MAX]``."""
    if s < 0:
        raise ValueError(f"negative SNR {s}")
    return float((table or default_table()).reciprocal(float(s)))


@njit(cache=True, nogil=True)
def _rca_kernel(edge_var, edge_chk, n_var, n_chk, punctured, s_chl, n_iter,
                log_r, log_j, log_c, u0, du):
    n_edge = edge_var.shape[0]
    s0 = np.empty(n_edge)
    s = np.empty(n_edge)
    rs = np.empty(n_edge)
    rr = np.zeros(n_edge)
    chk_sum = np.zeros(n_chk)
    var_sum = np.zeros(n_var)
    for e in range(n_edge):
        s0[e] = 0.0 if punctured[edge_var[e]] else s_chl
        s[e] = s0[e]
    prev_min = -1.0
    monotone = True
    for it in range(n_iter):
        for e in range(n_edge):
            rs[e] = _reciprocal(s[e], log_r, log_j, log_c, u0, du)
        chk_sum[:] = 0.0
        for e in range(n_edge):
            chk_sum[edge_chk[e]] += rs[e]
        changed = False
        for e in range(n_edge):
            new = _reciprocal(chk_sum[edge_chk[e]] - rs[e], log_r, log_j, log_c, u0, du)
            if new != rr[e]:
                changed = True
            rr[e] = new
        var_sum[:] = 0.0
        for e in range(n_edge):
            var_sum[edge_var[e]] += rr[e]
        for e in range(n_edge):
            s[e] = s0[e] + var_sum[edge_var[e]] - rr[e]
        cur_min = 1e300
        for v in range(n_var):
            total = (0.0 if punctured[v] else s_chl) + var_sum[v]
            if total < cur_min:
                cur_min = total
        if cur_min < prev_min * (1.0 - 1e-12):
            monotone = False
        prev_min = cur_min
        if not changed:
            break
    s_star = 1e300
    for v in range(n_var):
        total = (0.0 if punctured[v] else s_chl) + var_sum[v]
        if total < s_star:
            s_star = total
    return s_star, monotone


def _graph_arrays(proto, punctured):
    mult = proto.mult if isinstance(proto, Protomatrix) else np.asarray(proto, dtype=np.int64)
    if mult.ndim != 2:
        raise ValueError("protomatrix must be 2-D")
    rr, cc = np.nonzero(mult)
    counts = mult[rr, cc]
    edge_chk = np.repeat(rr, counts).astype(np.int64)
    edge_var = np.repeat(cc, counts).astype(np.int64)
    mask = np.zeros(mult.shape[1], dtype=np.bool_)
    for p in punctured:
        if not 0 <= p < mult.shape[1]:
            raise ValueError(f"punctured index {p} out of range")
        mask[p] = True
    return edge_var, edge_chk, mult.shape[1], mult.shape[0], mask


class RcaEvaluator:
    """Modified RCA pass/fail oracle bound to one protograph.

    Each variable node's reliability is its channel SNR plus the
    reciprocal-mapped sum of all incoming check messages; the protograph
    passes when the weakest node exceeds ``stop`` after ``iters`` rounds.
    """

    def __init__(self, proto, punctured=(), iters: int = DEFAULT_ITERS,
                 stop: float = DEFAULT_STOP, table: CapacityTable | None = None):
        self.table = table or default_table()
        self.iters = int(iters)
        self.stop = float(stop)
        (self._edge_var, self._edge_chk, self.n_var, self.n_chk,
         self._punct) = _graph_arrays(proto, punctured)

    def reliability(self, s_chl: float) -> tuple[float, bool]:
        t = self.table
        return _rca_kernel(self._edge_var, self._edge_chk, self.n_var, self.n_chk,
                           self._punct, float(s_chl), self.iters,
                           t.log_r, t.log_j, t.log_c, float(t.log_grid[0]), t.du)

    def __call__(self, s_chl: float) -> bool:
        s_star, monotone = self.reliability(s_chl)
        if not monotone:
            log.debug("min variable reliability decreased across iterations at s=%g", s_chl)
        return s_star > self.stop


def rca_pass(proto, punctured, s_chl: float, n_iter: int = DEFAULT_ITERS,
             stop: float = DEFAULT_STOP, table: CapacityTable | None = None) -> bool:
    """True when BP on the protograph ensemble converges at channel SNR ``s_chl``."""
    if s_chl < 0:
        raise ValueError("negative SNR")
    return RcaEvaluator(proto, punctured, n_iter, stop, table)(s_chl)


def ebn0_db_to_snr(ebn0_db: float, rate) -> float:
    return 2.0 * float(rate) * 10.0 ** (ebn0_db / 10.0)


def snr_to_ebn0_db(s: float, rate) -> float:
    return 10.0 * math.log10(s / (2.0 * float(rate)))


@dataclass(frozen=True)
class ThresholdResult:
    s_th: float
    ebn0_db: float
    rate: Fraction
    iterations_used: int
    precision_db: float


def protograph_rate(proto, punctured) -> Fraction:
    mult = proto.mult if isinstance(proto, Protomatrix) else np.asarray(proto)
    n_chk, n_var = mult.shape
    return Fraction(n_var - n_chk, n_var - len(set(punctured)))


def threshold(proto, punctured=(), n_iter: int = DEFAULT_ITERS, stop: float = DEFAULT_STOP,
              precision_db: float = DEFAULT_PRECISION_DB, table: CapacityTable | None = None,
              rate: Fraction | None = None, bracket_db: tuple[float, float] = (-2.0, 6.0),
              ) -> ThresholdResult:
    """Bisect the Eb/N0 decoding threshold of a protograph.

    ``rate`` defaults to ``(cols - rows) / (cols - |punctured|)``.  The bracket
    is widened in 5 dB steps until it straddles the threshold or leaves
    ``[S_MIN, S_MAX]``.
    """
    rate = Fraction(rate) if rate is not None else protograph_rate(proto, punctured)
    if not 0 < rate < 1:
        raise RcaError(f"rate {rate} outside (0, 1)")
    f = RcaEvaluator(proto, punctured, n_iter, stop, table)
    lo, hi = bracket_db
    db_min = snr_to_ebn0_db(S_MIN, rate)
    db_max = snr_to_ebn0_db(S_MAX, rate)
    calls = 0
    while not f(ebn0_db_to_snr(hi, rate)):
        calls += 1
        lo = hi
        hi += 5.0
        if hi > db_max:
            raise RcaError("no convergence below S_MAX")
    calls += 1
    while f(ebn0_db_to_snr(lo, rate)):
        calls += 1
        hi = lo
        lo -= 5.0
        if lo < db_min:
            raise RcaError("protograph converges at every SNR above S_MIN")
    calls += 1
    while hi - lo > precision_db:
        mid = 0.5 * (lo + hi)
        calls += 1
        if f(ebn0_db_to_snr(mid, rate)):
            hi = mid
        else:
            lo = mid
    mid = 0.5 * (lo + hi)
    return ThresholdResult(ebn0_db_to_snr(mid, rate), mid, rate, calls, hi - lo)


def shannon_limit_snr(rate) -> float:
    rate = float(rate)
    if not 0 < rate < 1:
        raise ValueError(f"rate {rate} outside (0, 1)")
    table = default_table()
    lo, hi = 0.0, 1.0
    while float(table.capacity(hi)) < rate:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(table.capacity(mid)) < rate:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    return 0.5 * (lo + hi)


def shannon_limit_ebn0(rate) -> float:
    """Eb/N0 in dB at which BI-AWGN capacity equals ``rate``."""
    return snr_to_ebn0_db(shannon_limit_snr(rate), rate)
