"""Expanded parity-check graphs, Raptor-like encoding and sum-product decoding.

Variable order in an expanded code is proto-column major: the ``Z`` copies
of precode column 0 come first, then column 1, and so on, followed by the
LT variables block by block.  ``Z`` is the total lifting factor (``z1 * z2``
for a two-stage lift).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from numba import njit

from pbrl.lifting import LiftingError, QcMatrix
from pbrl.protograph import PbrlFamily, assemble

log = logging.getLogger(__name__)

ROLE_PRECODE = 0
ROLE_PUNCTURED = 1
ROLE_LT = 2
LLR_CLAMP = 30.0
TANH_CLAMP = 1.0 - 1e-12
SCHEDULES = ("flooding", "layered")


class CodecError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SparseParityCheck:
    """Binary parity-check matrix of a lifted PBRL family plus node roles.

    ``h`` holds the precode checks first, then one check per LT variable in
    ladder order.  ``roles`` tags each variable (precode, punctured precode,
    LT) and ``lt_row_of`` maps an LT variable to its unique check (-1 else).
    """

    h: sp.csr_matrix
    roles: np.ndarray
    lt_row_of: np.ndarray
    z: int
    n_precode: int
    r_precode: int
    num_lt: int
    chk_ptr: np.ndarray = field(repr=False)
    chk_var: np.ndarray = field(repr=False)
    var_ptr: np.ndarray = field(repr=False)
    var_edge: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, h, z: int, n_precode: int, r_precode: int,
                    punctured=()) -> "SparseParityCheck":
        """Wrap a binary matrix with the PBRL block layout (blocks of ``z`` nodes)."""
        h = sp.csr_matrix(h, dtype=np.uint8)
        h.sort_indices()
        m, n = h.shape
        if n % z or m % z:
            raise CodecError("matrix dimensions are not multiples of z")
        num_lt = n // z - n_precode
        if num_lt < 0 or m // z != r_precode + num_lt:
            raise CodecError("matrix does not have the PBRL block shape")
        col_block = np.arange(n) // z
        roles = np.full(n, ROLE_PRECODE, dtype=np.int8)
        roles[np.isin(col_block, list(punctured))] = ROLE_PUNCTURED
        roles[col_block >= n_precode] = ROLE_LT
        csc = h.tocsc()
        deg = np.diff(csc.indptr)
        lt_row_of = np.full(n, -1, dtype=np.int64)
        lt_cols = np.flatnonzero(roles == ROLE_LT)
        if np.any(deg[lt_cols] != 1):
            raise CodecError("LT variables must have degree exactly one")
        lt_row_of[lt_cols] = csc.indices[csc.indptr[lt_cols]]
        if np.any(lt_row_of[lt_cols] != r_precode * z + (lt_cols - n_precode * z)):
            raise CodecError("LT variables must sit on the identity block")
        if h[: r_precode * z, n_precode * z:].nnz:
            raise CodecError("precode checks must not touch LT variables")
        chk_ptr = h.indptr.astype(np.int64)
        chk_var = h.indices.astype(np.int64)
        # per-variable edge ids in increasing check order
        order = np.argsort(chk_var, kind="stable")
        var_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(var_ptr, chk_var + 1, 1)
        var_ptr = np.cumsum(var_ptr)
        return cls(h, roles, lt_row_of, z, n_precode, r_precode, num_lt, chk_ptr, chk_var,
                   var_ptr, order.astype(np.int64))

    @property
    def n(self) -> int:
        return self.h.shape[1]

    @property
    def m_checks(self) -> int:
        return self.h.shape[0]

    @property
    def num_edges(self) -> int:
        return int(self.h.nnz)

    @property
    def n_punctured(self) -> int:
        return int(np.count_nonzero(self.roles == ROLE_PUNCTURED))

    @property
    def k(self) -> int:
        """Information length assuming a full-rank precode."""
        return (self.n_precode - self.r_precode) * self.z

    def n_tx(self, m: int) -> int:
        self._check_m(m)
        return self.n_precode * self.z - self.n_punctured + m * self.z

    def _check_m(self, m: int) -> None:
        if not 0 <= m <= self.num_lt:
            raise CodecError(f"rate point m={m} outside 0..{self.num_lt}")

    def transmit_positions(self, m: int) -> np.ndarray:
        """Variable indices sent at rate point ``m``, in channel order."""
        self._check_m(m)
        pre = np.flatnonzero(self.roles[: self.n_precode * self.z] == ROLE_PRECODE)
        lt = np.arange(self.n_precode * self.z, (self.n_precode + m) * self.z)
        return np.concatenate([pre, lt])

    def active_checks(self, m: int) -> np.ndarray:
        """Checks kept at rate point ``m``; LT checks of unsent variables are off."""
        self._check_m(m)
        act = np.zeros(self.m_checks, dtype=np.bool_)
        act[: (self.r_precode + m) * self.z] = True
        return act

    def syndrome(self, word) -> np.ndarray:
        word = np.asarray(word, dtype=np.int64)
        return (self.h @ word.T % 2).T.astype(np.uint8)

    def truncated(self, m: int) -> "SparseParityCheck":
        """The physically smaller graph of rate point ``m``."""
        self._check_m(m)
        rows = (self.r_precode + m) * self.z
        cols = (self.n_precode + m) * self.z
        punct = sorted({int(b) for b in np.flatnonzero(self.roles == ROLE_PUNCTURED) // self.z})
        return SparseParityCheck.from_matrix(self.h[:rows, :cols], self.z, self.n_precode,
                                             self.r_precode, punct)


def lift_group(qc: QcMatrix, family: PbrlFamily) -> int:
    """Block rows/columns of ``qc`` per protograph node."""
    k_blocks = qc.cols - qc.rows
    if k_blocks <= 0 or k_blocks % family.k_proto:
        raise CodecError("QC matrix shape is incompatible with the family")
    return k_blocks // family.k_proto


def expand(qc: QcMatrix, family: PbrlFamily, m: int | None = None) -> SparseParityCheck:
    """Expand a lifted family up to rate point ``m`` (default: every LT row in ``qc``)."""
    g = lift_group(qc, family)
    n_p, r_p = family.n_precode, family.r_precode
    if qc.cols % g or qc.rows % g:
        raise CodecError("QC matrix shape is incompatible with the family")
    m_qc = qc.cols // g - n_p
    if m is None:
        m = min(m_qc, family.num_lt)
    if not 0 <= m <= min(m_qc, family.num_lt):
        raise CodecError(f"rate point m={m} not covered by both code and family")
    sub = qc.submatrix(g * (r_p + m), g * (n_p + m))
    try:
        proj = sub.protomatrix(g)
    except LiftingError as exc:
        raise CodecError(str(exc)) from exc
    if proj != assemble(family, m):
        raise CodecError("QC matrix does not lift the family's protomatrix")
    return SparseParityCheck.from_matrix(sub.expand(), qc.z * g, n_p, r_p, sorted(family.punctured))


# ---------------------------------------------------------------------------
# GF(2) encoder


@njit(cache=True)
def _pack_rows(indptr, indices, n_rows, n_words):
    out = np.zeros((n_rows, n_words), dtype=np.uint64)
    for r in range(n_rows):
        for k in range(indptr[r], indptr[r + 1]):
            c = indices[k]
            out[r, c >> 6] ^= np.uint64(1) << np.uint64(c & 63)
    return out


@njit(cache=True)
def _rref(rows, col_order):
    """In-place reduced row echelon form; returns pivot columns in row order."""
    n_rows = rows.shape[0]
    n_words = rows.shape[1]
    pivots = np.full(n_rows, -1, dtype=np.int64)
    rank = 0
    for c in col_order:
        if rank == n_rows:
            break
        w = c >> 6
        bit = np.uint64(1) << np.uint64(c & 63)
        sel = -1
        for r in range(rank, n_rows):
            if rows[r, w] & bit:
                sel = r
                break
        if sel < 0:
            continue
        if sel != rank:
            for j in range(n_words):
                tmp = rows[sel, j]
                rows[sel, j] = rows[rank, j]
                rows[rank, j] = tmp
        for r in range(n_rows):
            if r != rank and rows[r, w] & bit:
                for j in range(n_words):
                    rows[r, j] ^= rows[rank, j]
        pivots[rank] = c
        rank += 1
    return pivots[:rank]


@njit(cache=True)
def _parity_of(x):
    x ^= x >> np.uint64(32)
    x ^= x >> np.uint64(16)
    x ^= x >> np.uint64(8)
    x ^= x >> np.uint64(4)
    x ^= x >> np.uint64(2)
    x ^= x >> np.uint64(1)
    return x & np.uint64(1)


@njit(cache=True)
def _encode_batch(info, info_pos, pivots, rref, lt_ptr, lt_src, n_precode_vars, n_total):
    n_frames = info.shape[0]
    n_words = rref.shape[1]
    out = np.zeros((n_frames, n_total), dtype=np.uint8)
    packed = np.zeros(n_words, dtype=np.uint64)
    for f in range(n_frames):
        packed[:] = 0
        for i in range(info_pos.size):
            if info[f, i]:
                c = info_pos[i]
                out[f, c] = 1
                packed[c >> 6] |= np.uint64(1) << np.uint64(c & 63)
        for r in range(pivots.size):
            acc = np.uint64(0)
            for j in range(n_words):
                acc ^= rref[r, j] & packed[j]
            out[f, pivots[r]] = np.uint8(_parity_of(acc))
        for t in range(lt_ptr.size - 1):
            b = 0
            for k in range(lt_ptr[t], lt_ptr[t + 1]):
                b ^= out[f, lt_src[k]]
            out[f, n_precode_vars + t] = b
    return out


@dataclass(frozen=True, eq=False)
class EncoderPlan:
    """Systematic encoder: info bits fill ``info_positions``; pivots solve the precode.

    ``rref`` is the packed reduced echelon form of the precode checks with
    identity on ``pivots``; each LT bit is the XOR of ``lt_sources`` for its
    row (its check's precode neighbors).
    """

    info_positions: np.ndarray
    pivots: np.ndarray
    rref: np.ndarray = field(repr=False)
    lt_ptr: np.ndarray = field(repr=False)
    lt_sources: np.ndarray = field(repr=False)
    n_precode_vars: int
    n: int

    @property
    def k(self) -> int:
        return int(self.info_positions.size)


def build_encoder(code: SparseParityCheck) -> EncoderPlan:
    """Offline GF(2) elimination of the precode checks.

    Punctured columns are tried first as pivots so that, where possible,
    every information bit is a transmitted bit.  A rank-deficient precode is
    rejected because the family's rate bookkeeping assumes full rank.
    """
    n_pv = code.n_precode * code.z
    n_pc = code.r_precode * code.z
    hp = code.h[:n_pc, :n_pv].tocsr()
    hp.sort_indices()
    n_words = (n_pv + 63) // 64
    rows = _pack_rows(hp.indptr.astype(np.int64), hp.indices.astype(np.int64), n_pc, n_words)
    punct = np.flatnonzero(code.roles[:n_pv] == ROLE_PUNCTURED)
    rest = np.flatnonzero(code.roles[:n_pv] != ROLE_PUNCTURED)[::-1]
    col_order = np.concatenate([punct, rest]).astype(np.int64)
    pivots = _rref(rows, col_order)
    if pivots.size < n_pc:
        raise CodecError(f"precode parity checks are rank deficient ({pivots.size} < {n_pc})")
    is_pivot = np.zeros(n_pv, dtype=bool)
    is_pivot[pivots] = True
    info_positions = np.flatnonzero(~is_pivot)
    lt = code.h[n_pc:, :n_pv].tocsr()
    lt.sort_indices()
    return EncoderPlan(info_positions.astype(np.int64), pivots.astype(np.int64), rows,
                       lt.indptr.astype(np.int64), lt.indices.astype(np.int64), n_pv, code.n)


def encode(plan: EncoderPlan, info) -> np.ndarray:
    """Full codeword(s), including punctured and every LT bit."""
    info = np.asarray(info, dtype=np.uint8)
    single = info.ndim == 1
    batch = info.reshape(1, -1) if single else info
    if batch.shape[1] != plan.k:
        raise CodecError(f"expected {plan.k} information bits, got {batch.shape[1]}")
    out = _encode_batch(batch, plan.info_positions, plan.pivots, plan.rref, plan.lt_ptr,
                        plan.lt_sources, plan.n_precode_vars, plan.n)
    return out[0] if single else out


def select_transmit(codeword, code: SparseParityCheck, m: int) -> np.ndarray:
    """Channel bits at rate point ``m``: unpunctured precode bits, then ``m`` LT blocks."""
    pos = code.transmit_positions(m)
    return np.asarray(codeword)[..., pos]


# ---------------------------------------------------------------------------
# sum-product decoding


@njit(cache=True)
def _tanh_half(x):
    # tanh(x/2) through expm1, cheaper than tanh and exact near zero
    e = np.expm1(-abs(x))
    t = -e / (2.0 + e)
    return t if x >= 0.0 else -t


@njit(cache=True)
def _two_atanh(p):
    # 2 atanh(p) = log1p(2p / (1 - p))
    return np.log1p(2.0 * p / (1.0 - p))


@njit(cache=True)
def _check_update(chk_ptr, chk_var, c, v2c, c2v, fwd):
    """Sum-product check update: c2v = 2 atanh of the product of the other tanh(v2c / 2)."""
    lo = chk_ptr[c]
    hi = chk_ptr[c + 1]
    d = hi - lo
    # prefix products in fwd, then a backward sweep
    acc = 1.0
    for k in range(d):
        fwd[k] = acc
        t = _tanh_half(v2c[lo + k])
        if t > TANH_CLAMP:
            t = TANH_CLAMP
        elif t < -TANH_CLAMP:
            t = -TANH_CLAMP
        v2c[lo + k] = t
        acc *= t
    acc = 1.0
    for k in range(d - 1, -1, -1):
        p = fwd[k] * acc
        if p > TANH_CLAMP:
            p = TANH_CLAMP
        elif p < -TANH_CLAMP:
            p = -TANH_CLAMP
        msg = _two_atanh(p)
        if msg > LLR_CLAMP:
            msg = LLR_CLAMP
        elif msg < -LLR_CLAMP:
            msg = -LLR_CLAMP
        acc *= v2c[lo + k]
        c2v[lo + k] = msg


@njit(cache=True)
def _syndrome_ok(chk_ptr, chk_var, n_active, hard):
    for c in range(n_active):
        s = 0
        for k in range(chk_ptr[c], chk_ptr[c + 1]):
            s ^= hard[chk_var[k]]
        if s:
            return False
    return True


@njit(cache=True)
def _decode_batch(chk_ptr, chk_var, var_ptr, var_edge, n_active, llr, max_iter, layered):
    n_frames = llr.shape[0]
    n = llr.shape[1]
    n_edges = chk_var.size
    hard = np.zeros((n_frames, n), dtype=np.uint8)
    iters = np.zeros(n_frames, dtype=np.int64)
    ok = np.zeros(n_frames, dtype=np.bool_)
    c2v = np.empty(n_edges, dtype=np.float64)
    v2c = np.empty(n_edges, dtype=np.float64)
    post = np.empty(n, dtype=np.float64)
    max_deg = 1
    for c in range(n_active):
        if chk_ptr[c + 1] - chk_ptr[c] > max_deg:
            max_deg = chk_ptr[c + 1] - chk_ptr[c]
    fwd = np.empty(max_deg, dtype=np.float64)
    ext = np.empty(max_deg, dtype=np.float64)
    n_active_edges = chk_ptr[n_active]
    for f in range(n_frames):
        c2v[:] = 0.0
        for v in range(n):
            x = llr[f, v]
            if x > LLR_CLAMP:
                x = LLR_CLAMP
            elif x < -LLR_CLAMP:
                x = -LLR_CLAMP
            post[v] = x
        it = 0
        converged = False
        while it < max_iter:
            it += 1
            if layered:
                for c in range(n_active):
                    lo = chk_ptr[c]
                    for k in range(lo, chk_ptr[c + 1]):
                        ext[k - lo] = post[chk_var[k]] - c2v[k]
                        v2c[k] = ext[k - lo]
                    _check_update(chk_ptr, chk_var, c, v2c, c2v, fwd)
                    # the posterior is not clamped: clipping it would corrupt the
                    # extrinsic value recovered at the next layer
                    for k in range(lo, chk_ptr[c + 1]):
                        post[chk_var[k]] = ext[k - lo] + c2v[k]
            else:
                for k in range(n_active_edges):
                    v2c[k] = post[chk_var[k]] - c2v[k]
                for c in range(n_active):
                    _check_update(chk_ptr, chk_var, c, v2c, c2v, fwd)
                for v in range(n):
                    x = llr[f, v]
                    if x > LLR_CLAMP:
                        x = LLR_CLAMP
                    elif x < -LLR_CLAMP:
                        x = -LLR_CLAMP
                    for k in range(var_ptr[v], var_ptr[v + 1]):
                        e = var_edge[k]
                        if e < n_active_edges:
                            x += c2v[e]
                    post[v] = x
            for v in range(n):
                hard[f, v] = 1 if post[v] < 0.0 else 0
            if _syndrome_ok(chk_ptr, chk_var, n_active, hard[f]):
                converged = True
                break
        iters[f] = it
        ok[f] = converged
    return hard, iters, ok


@dataclass(frozen=True)
class DecodeOutcome:
    """Hard decisions over all variables plus per-frame iteration counts."""

    hard: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray


def channel_to_variables(code: SparseParityCheck, llr, m: int) -> np.ndarray:
    """Scatter channel LLRs onto every variable; unsent positions get zero."""
    llr = np.atleast_2d(np.asarray(llr, dtype=np.float64))
    pos = code.transmit_positions(m)
    if llr.shape[1] != pos.size:
        raise CodecError(f"expected {pos.size} channel LLRs at m={m}, got {llr.shape[1]}")
    full = np.zeros((llr.shape[0], code.n), dtype=np.float64)
    full[:, pos] = llr
    return full


def decode(code: SparseParityCheck, llr, m: int, schedule: str = "flooding",
           max_iter: int = 100) -> DecodeOutcome:
    """Sum-product decoding of channel LLRs (positive favours bit 0).

    ``llr`` is one frame or a batch of frames in :func:`select_transmit`
    order.  Punctured variables start from zero and LT checks beyond the
    rate point are deactivated, so the result equals decoding on the
    truncated graph.  Each frame stops at its first zero syndrome.
    """
    if schedule not in SCHEDULES:
        raise CodecError(f"unknown schedule {schedule!r}")
    if max_iter < 1:
        raise CodecError("max_iter must be positive")
    arr = np.asarray(llr, dtype=np.float64)
    single = arr.ndim == 1
    full = channel_to_variables(code, arr, m)
    if not np.all(np.isfinite(full)):
        raise CodecError("channel LLRs must be finite")
    n_active = (code.r_precode + m) * code.z
    hard, iters, ok = _decode_batch(code.chk_ptr, code.chk_var, code.var_ptr, code.var_edge,
                                    n_active, full, max_iter, schedule == "layered")
    if single:
        return DecodeOutcome(hard[0], iters[0], ok[0])
    return DecodeOutcome(hard, iters, ok)


# ---------------------------------------------------------------------------
# file formats


def write_bits(path, bits) -> None:
    """One frame per line, ASCII 0/1."""
    bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    Path(path).write_text("".join("".join("01"[b] for b in row) + "\n" for row in bits))


def read_bits(path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or any(set(ln) - {"0", "1"} for ln in lines):
        raise CodecError(f"{path}: expected lines of 0/1 characters")
    if len({len(ln) for ln in lines}) != 1:
        raise CodecError(f"{path}: frames have different lengths")
    return np.array([[c == "1" for c in ln] for ln in lines], dtype=np.uint8)


def write_llr(path, llr) -> None:
    """Raw little-endian float32, frames concatenated."""
    np.asarray(llr, dtype="<f4").tofile(path)


def read_llr(path, frame_len: int) -> np.ndarray:
    data = np.fromfile(path, dtype="<f4")
    if frame_len <= 0 or data.size % frame_len:
        raise CodecError(f"{path}: {data.size} values is not a multiple of {frame_len}")
    return data.reshape(-1, frame_len).astype(np.float64)
