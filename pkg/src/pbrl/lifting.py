"""Circulant (quasi-cyclic) lifting of protographs.

Circulant convention: ``sigma`` is the ``z x z`` identity shifted left by one
column, so exponent ``k`` places a one at ``(i, (i - k) mod z)`` for every row
``i``.  A variable copy ``j`` is then joined to check copy ``j + k``, and a
block-level closed walk lifts to a closed walk exactly when its alternating
exponent sum vanishes mod ``z``.

Two-stage lifts keep the pre-lift grouping: every proto node becomes ``z1``
consecutive block nodes, so proto columns stay contiguous in the final
matrix and rate-point prefixes stay prefixes.
"""

from __future__ import annotations

import itertools
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from numba import njit

from pbrl.protograph import Protomatrix

log = logging.getLogger(__name__)

INF_GIRTH = 0  # sentinel stored in GirthReport.girth for acyclic graphs
MAX_COUNT_LEN = 12


class LiftingError(RuntimeError):
    pass


Cell = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class QcMatrix:
    """Block matrix of circulant exponent sets.

    ``shifts[r][c]`` is a sorted tuple of distinct exponents in ``[0, z)``;
    the empty tuple is an all-zero block.
    """

    shifts: tuple[tuple[Cell, ...], ...]
    z: int
    stage: str = "final"

    def __post_init__(self) -> None:
        if self.z < 1:
            raise LiftingError("lifting size must be positive")
        rows = tuple(tuple(tuple(sorted(int(e) for e in cell)) for cell in row) for row in self.shifts)
        if not rows or not rows[0]:
            raise LiftingError("empty QC matrix")
        width = len(rows[0])
        for r, row in enumerate(rows):
            if len(row) != width:
                raise LiftingError(f"block row {r} has {len(row)} cells, expected {width}")
            for c, cell in enumerate(row):
                if len(set(cell)) != len(cell):
                    raise LiftingError(f"repeated exponent in cell ({r}, {c})")
                if any(not 0 <= e < self.z for e in cell):
                    raise LiftingError(f"exponent out of range in cell ({r}, {c})")
        if self.stage == "final" and any(len(cell) > 1 for row in rows for cell in row):
            raise LiftingError("final-stage cells may hold at most one exponent")
        object.__setattr__(self, "shifts", rows)

    @property
    def rows(self) -> int:
        return len(self.shifts)

    @property
    def cols(self) -> int:
        return len(self.shifts[0])

    def multiplicities(self) -> np.ndarray:
        return np.array([[len(cell) for cell in row] for row in self.shifts], dtype=np.int64)

    def protomatrix(self, group: int = 1) -> Protomatrix:
        """Project back to the protograph.

        ``group`` is the number of block rows/columns per protograph node
        (``z1`` for a two-stage lift); block sums are divided by it.
        """
        mult = self.multiplicities()
        g = group
        if self.rows % g or self.cols % g:
            raise LiftingError("block dimensions are not multiples of the group size")
        proj = mult.reshape(self.rows // g, g, self.cols // g, g).sum(axis=(1, 3))
        if np.any(proj % g):
            raise LiftingError("pre-lift blocks do not have uniform degree")
        return Protomatrix(proj // g)

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Block-level edge list ``(check, var, exponent)`` in row-major order."""
        chk, var, shift = [], [], []
        for r, row in enumerate(self.shifts):
            for c, cell in enumerate(row):
                for e in cell:
                    chk.append(r)
                    var.append(c)
                    shift.append(e)
        return (np.array(chk, dtype=np.int64), np.array(var, dtype=np.int64),
                np.array(shift, dtype=np.int64))

    def submatrix(self, n_rows: int, n_cols: int) -> "QcMatrix":
        return QcMatrix(tuple(row[:n_cols] for row in self.shifts[:n_rows]), self.z, self.stage)

    def expand(self) -> sp.csr_matrix:
        """Binary parity-check matrix, shape ``(rows*z, cols*z)``."""
        z = self.z
        chk, var, shift = self.edges()
        i = np.arange(z)
        rows = (chk[:, None] * z + i[None, :]).ravel()
        cols = (var[:, None] * z + (i[None, :] - shift[:, None]) % z).ravel()
        data = np.ones(rows.size, dtype=np.uint8)
        mat = sp.csr_matrix((data, (rows, cols)), shape=(self.rows * z, self.cols * z))
        mat.sum_duplicates()
        if mat.data.size and mat.data.max() > 1:
            raise LiftingError("exponent set produced overlapping ones")
        return mat

    def as_base(self) -> "QcMatrix":
        """The expanded matrix viewed as a new single-exponent base (all exponents 0)."""
        mat = self.expand().tocoo()
        shifts = [[() for _ in range(mat.shape[1])] for _ in range(mat.shape[0])]
        for r, c in zip(mat.row, mat.col):
            shifts[r][c] = (0,)
        return QcMatrix(tuple(tuple(row) for row in shifts), 1, "final")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QcMatrix):
            return NotImplemented
        return (self.shifts, self.z) == (other.shifts, other.z)

    def __hash__(self) -> int:
        return hash((self.shifts, self.z))

    def to_text(self) -> str:
        lines = [f"{self.rows} {self.cols} {self.z}"]
        for row in self.shifts:
            lines.append(" ".join(",".join(str(e) for e in cell) if cell else "-1" for cell in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "QcMatrix":
        tokens_by_line = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        header = tokens_by_line[0]
        if len(header) != 3:
            raise LiftingError("QC header must be 'rows cols z'")
        rows, cols, z = (int(t) for t in header)
        cells = [tok for line in tokens_by_line[1:] for tok in line]
        if len(cells) != rows * cols:
            raise LiftingError(f"expected {rows * cols} cells, found {len(cells)}")
        parsed = [() if tok == "-1" else tuple(int(e) for e in tok.split(",")) for tok in cells]
        grid = tuple(tuple(parsed[r * cols:(r + 1) * cols]) for r in range(rows))
        stage = "final" if all(len(c) <= 1 for c in parsed) else "pre-lifted"
        return cls(grid, z, stage)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> "QcMatrix":
        return cls.from_text(Path(path).read_text())


def write_alist(mat: sp.spmatrix) -> str:
    """MacKay alist text for a binary parity-check matrix."""
    csc = sp.csc_matrix(mat)
    csr = sp.csr_matrix(mat)
    m, n = csr.shape
    col_deg = np.diff(csc.indptr)
    row_deg = np.diff(csr.indptr)
    lines = [f"{n} {m}", f"{col_deg.max(initial=0)} {row_deg.max(initial=0)}",
             " ".join(map(str, col_deg)), " ".join(map(str, row_deg))]
    for j in range(n):
        idx = np.sort(csc.indices[csc.indptr[j]:csc.indptr[j + 1]]) + 1
        lines.append(" ".join(map(str, idx)))
    for i in range(m):
        idx = np.sort(csr.indices[csr.indptr[i]:csr.indptr[i + 1]]) + 1
        lines.append(" ".join(map(str, idx)))
    return "\n".join(lines) + "\n"


def read_alist(text: str) -> sp.csr_matrix:
    lines = [ln.split() for ln in text.strip().splitlines()]
    n, m = int(lines[0][0]), int(lines[0][1])
    rows, cols = [], []
    for j in range(n):
        for tok in lines[4 + j]:
            if int(tok) > 0:
                rows.append(int(tok) - 1)
                cols.append(j)
    data = np.ones(len(rows), dtype=np.uint8)
    return sp.csr_matrix((data, (rows, cols)), shape=(m, n))


# ---------------------------------------------------------------------------
# graph kernels

def _local_girth(arrays, shift, active, e, max_len, z):
    """Iterative deepening over :func:`_shortest_closing` (cheap when short cycles exist)."""
    var_ptr, var_edges, chk_ptr, chk_edges, chk, var = arrays
    for limit in range(4, max_len + 1, 2):
        g, n = _shortest_closing(var_ptr, var_edges, chk_ptr, chk_edges, chk, var, shift, active,
                                 e, limit, z)
        if g:
            return g, n
    return 0, 0


def _incidence(n_chk, n_var, chk, var):
    """CSR lists of edge ids incident to each variable and check node."""
    order_v = np.argsort(var, kind="stable")
    var_ptr = np.zeros(n_var + 1, dtype=np.int64)
    np.add.at(var_ptr, var + 1, 1)
    var_ptr = np.cumsum(var_ptr)
    order_c = np.argsort(chk, kind="stable")
    chk_ptr = np.zeros(n_chk + 1, dtype=np.int64)
    np.add.at(chk_ptr, chk + 1, 1)
    chk_ptr = np.cumsum(chk_ptr)
    return var_ptr, order_v.astype(np.int64), chk_ptr, order_c.astype(np.int64)


@njit(cache=True)
def _shortest_closing(var_ptr, var_edges, chk_ptr, chk_edges, e_chk, e_var, e_shift, active,
                      start, max_len, z):
    """Shortest zero-sum tailless closed walk that begins with edge ``start``.

    Returns ``(length, count)`` where ``count`` is the number of such walks
    of that length, or ``(0, 0)`` when none is ``<= max_len``.  Any closed
    tailless walk contains a cycle no longer than itself, and the shortest
    cycle through the lifted edge is itself such a walk, so ``length`` is the
    exact local girth.
    """
    v0 = e_var[start]
    best = max_len + 2
    hits = 0
    edge_stack = np.empty(max_len + 2, dtype=np.int64)
    ptr_stack = np.empty(max_len + 2, dtype=np.int64)
    pos_stack = np.empty(max_len + 2, dtype=np.int64)
    edge_stack[1] = start
    pos_stack[1] = e_shift[start] % z
    ptr_stack[1] = chk_ptr[e_chk[start]]
    depth = 1
    while depth >= 1:
        prev = edge_stack[depth]
        at_check = depth % 2 == 1
        if at_check:
            end = chk_ptr[e_chk[prev] + 1]
        else:
            end = var_ptr[e_var[prev] + 1]
        advanced = False
        while ptr_stack[depth] < end:
            if at_check:
                e = chk_edges[ptr_stack[depth]]
            else:
                e = var_edges[ptr_stack[depth]]
            ptr_stack[depth] += 1
            if e == prev or not active[e]:
                continue
            if at_check:
                npos = (pos_stack[depth] - e_shift[e]) % z
                if e_var[e] == v0 and e != start and npos == 0:
                    length = depth + 1
                    if length < best:
                        best = length
                        hits = 1
                    elif length == best:
                        hits += 1
                if depth + 3 > best or depth + 3 > max_len:
                    continue
            else:
                npos = (pos_stack[depth] + e_shift[e]) % z
                if depth + 2 > best or depth + 2 > max_len:
                    continue
            depth += 1
            edge_stack[depth] = e
            pos_stack[depth] = npos
            if at_check:
                ptr_stack[depth] = var_ptr[e_var[e]]
            else:
                ptr_stack[depth] = chk_ptr[e_chk[e]]
            advanced = True
            break
        if not advanced:
            depth -= 1
    if best > max_len:
        return 0, 0
    return best, hits


@njit(cache=True)
def _modinv_solutions(coef, rhs, z):
    """All ``x`` in ``[0, z)`` with ``coef * x == rhs (mod z)``; empty when ``coef == 0 (mod z)``."""
    a = coef % z
    b = rhs % z
    if a == 0:
        return np.empty(0, np.int64)
    # extended Euclid on (a, z)
    r0, r1 = a, z
    s0, s1 = 1, 0
    while r1 != 0:
        q = r0 // r1
        r0, r1 = r1, r0 - q * r1
        s0, s1 = s1, s0 - q * s1
    g = r0
    if b % g != 0:
        return np.empty(0, np.int64)
    zg = z // g
    x0 = ((b // g) * s0) % zg
    out = np.empty(g, np.int64)
    for i in range(g):
        out[i] = x0 + i * zg
    return out


@njit(cache=True)
def _edge_constraints(var_ptr, var_edges, chk_ptr, chk_edges, e_chk, e_var, e_shift, active,
                      ace_w, start, max_len, ace_cap, z, girth_floor):
    """Exponents of edge ``start`` that would close a short or low-ACE cycle.

    Enumerates tailless block walks that begin with ``start``.  Variable
    positions are affine in the unknown exponent ``x``; for each closing
    solution ``x`` the lifted walk is recorded as ``(x, length, ace)``.
    Walks shorter than ``girth_floor`` are always recorded (any closed
    tailless walk contains a cycle no longer than itself); longer ones only
    when the lifted walk is a simple cycle, so ACE is that of a real cycle.
    """
    out_x = []
    out_len = []
    out_ace = []
    v0 = e_var[start]
    edge_stack = np.empty(max_len + 1, dtype=np.int64)
    ptr_stack = np.empty(max_len + 1, dtype=np.int64)
    pc = np.empty(max_len + 1, dtype=np.int64)  # position = pc * x + po
    po = np.empty(max_len + 1, dtype=np.int64)
    node = np.empty(max_len + 1, dtype=np.int64)
    ace_stack = np.empty(max_len + 1, dtype=np.int64)
    node[0] = v0
    pc[0] = 0
    po[0] = 0
    edge_stack[1] = start
    node[1] = e_chk[start]
    pc[1] = 1
    po[1] = 0
    ace_stack[1] = ace_w[v0]
    ptr_stack[1] = chk_ptr[e_chk[start]]
    depth = 1
    if ace_stack[1] >= ace_cap and girth_floor <= 2:
        depth = 0
    if max_len < 2:
        depth = 0
    while depth >= 1:
        prev = edge_stack[depth]
        at_check = depth % 2 == 1
        if at_check:
            end = chk_ptr[node[depth] + 1]
        else:
            end = var_ptr[node[depth] + 1]
        advanced = False
        while ptr_stack[depth] < end:
            if at_check:
                e = chk_edges[ptr_stack[depth]]
            else:
                e = var_edges[ptr_stack[depth]]
            ptr_stack[depth] += 1
            if e == prev or not active[e]:
                continue
            if at_check:
                if e == start:
                    ncoef = pc[depth] - 1
                    noff = po[depth]
                else:
                    ncoef = pc[depth]
                    noff = po[depth] - e_shift[e]
                v = e_var[e]
                length = depth + 1
                if v == v0 and e != start:
                    sols = _modinv_solutions(ncoef, -noff, z)
                    for x in sols:
                        if length < girth_floor:
                            out_x.append(x)
                            out_len.append(length)
                            out_ace.append(ace_stack[depth])
                            continue
                        if ace_stack[depth] >= ace_cap:
                            continue
                        simple = True
                        for i in range(length):
                            pi = (pc[i] * x + po[i]) % z
                            for j in range(i + 2, length, 2):
                                if node[j] == node[i] and (pc[j] * x + po[j]) % z == pi:
                                    simple = False
                                    break
                            if not simple:
                                break
                        if simple:
                            out_x.append(x)
                            out_len.append(length)
                            out_ace.append(ace_stack[depth])
                ace = ace_stack[depth] + ace_w[v]
                if depth + 2 >= max_len:
                    continue
                if ace >= ace_cap and depth + 2 >= girth_floor - 1:
                    continue
                depth += 1
                edge_stack[depth] = e
                node[depth] = v
                pc[depth] = ncoef
                po[depth] = noff
                ace_stack[depth] = ace
                ptr_stack[depth] = var_ptr[v]
                advanced = True
                break
            else:
                if depth + 1 >= max_len:
                    continue
                depth += 1
                edge_stack[depth] = e
                node[depth] = e_chk[e]
                if e == start:
                    pc[depth] = pc[depth - 1] + 1
                    po[depth] = po[depth - 1]
                else:
                    pc[depth] = pc[depth - 1]
                    po[depth] = po[depth - 1] + e_shift[e]
                ace_stack[depth] = ace_stack[depth - 1]
                ptr_stack[depth] = chk_ptr[e_chk[e]]
                advanced = True
                break
        if not advanced:
            depth -= 1
    n = len(out_x)
    xs = np.empty(n, np.int64)
    ls = np.empty(n, np.int64)
    acs = np.empty(n, np.int64)
    for i in range(n):
        xs[i] = out_x[i]
        ls[i] = out_len[i]
        acs[i] = out_ace[i]
    return xs, ls, acs


@njit(cache=True)
def _count_lifted_cycles(var_ptr, var_edges, chk_ptr, chk_edges, e_chk, e_var, e_shift,
                         n_var, n_chk, z, max_len):
    """Directed simple closed walks through copy 0 of each block variable.

    Lifted positions are tracked explicitly so only simple cycles count.
    Returns ``counts[v, L]`` for even ``L <= max_len``.
    """
    counts = np.zeros((n_var, max_len + 1), dtype=np.int64)
    vis_v = np.zeros(n_var * z, dtype=np.bool_)
    vis_c = np.zeros(n_chk * z, dtype=np.bool_)
    edge_stack = np.empty(max_len + 1, dtype=np.int64)
    ptr_stack = np.empty(max_len + 1, dtype=np.int64)
    pos_stack = np.empty(max_len + 1, dtype=np.int64)
    for v0 in range(n_var):
        if var_ptr[v0 + 1] == var_ptr[v0]:
            continue
        vis_v[v0 * z] = True
        depth = 0
        ptr_stack[0] = var_ptr[v0]
        pos_stack[0] = 0
        while depth >= 0:
            if depth % 2 == 0:
                node = v0 if depth == 0 else e_var[edge_stack[depth]]
                end = var_ptr[node + 1]
            else:
                node = e_chk[edge_stack[depth]]
                end = chk_ptr[node + 1]
            advanced = False
            while ptr_stack[depth] < end:
                if depth % 2 == 0:
                    e = var_edges[ptr_stack[depth]]
                else:
                    e = chk_edges[ptr_stack[depth]]
                ptr_stack[depth] += 1
                if depth > 0 and e == edge_stack[depth]:
                    continue
                pos = pos_stack[depth]
                if depth % 2 == 0:
                    npos = (pos + e_shift[e]) % z
                    key = e_chk[e] * z + npos
                    if vis_c[key] or depth + 1 >= max_len:
                        continue
                    vis_c[key] = True
                else:
                    npos = (pos - e_shift[e]) % z
                    v = e_var[e]
                    if v == v0 and npos == 0:
                        if depth + 1 >= 4:
                            counts[v0, depth + 1] += 1
                        continue
                    key = v * z + npos
                    if vis_v[key] or depth + 1 >= max_len:
                        continue
                    vis_v[key] = True
                depth += 1
                edge_stack[depth] = e
                pos_stack[depth] = npos
                if depth % 2 == 1:
                    ptr_stack[depth] = chk_ptr[e_chk[e]]
                else:
                    ptr_stack[depth] = var_ptr[e_var[e]]
                advanced = True
                break
            if not advanced:
                if depth > 0:
                    e = edge_stack[depth]
                    if depth % 2 == 1:
                        vis_c[e_chk[e] * z + pos_stack[depth]] = False
                    else:
                        vis_v[e_var[e] * z + pos_stack[depth]] = False
                depth -= 1
        vis_v[v0 * z] = False
    return counts


@njit(cache=True)
def _count_cycles_dfs(var_ptr, var_nbr, chk_ptr, chk_nbr, n_var, n_chk, max_len):
    """Simple cycles of an explicit Tanner graph, each counted once.

    A cycle is rooted at its smallest variable index; both orientations are
    found, hence the final halving.
    """
    counts = np.zeros(max_len + 1, dtype=np.int64)
    vis_v = np.zeros(n_var, dtype=np.bool_)
    vis_c = np.zeros(n_chk, dtype=np.bool_)
    node_stack = np.empty(max_len + 1, dtype=np.int64)
    ptr_stack = np.empty(max_len + 1, dtype=np.int64)
    for s in range(n_var):
        vis_v[s] = True
        depth = 0
        node_stack[0] = s
        ptr_stack[0] = var_ptr[s]
        while depth >= 0:
            node = node_stack[depth]
            if depth % 2 == 0:
                end = var_ptr[node + 1]
            else:
                end = chk_ptr[node + 1]
            advanced = False
            while ptr_stack[depth] < end:
                if depth % 2 == 0:
                    nxt = var_nbr[ptr_stack[depth]]
                    ptr_stack[depth] += 1
                    if vis_c[nxt] or depth + 1 >= max_len:
                        continue
                    vis_c[nxt] = True
                    depth += 1
                    node_stack[depth] = nxt
                    ptr_stack[depth] = chk_ptr[nxt]
                    advanced = True
                    break
                else:
                    nxt = chk_nbr[ptr_stack[depth]]
                    ptr_stack[depth] += 1
                    if nxt == s and depth >= 3:
                        counts[depth + 1] += 1
                        continue
                    if nxt <= s or vis_v[nxt] or depth + 1 >= max_len:
                        continue
                    vis_v[nxt] = True
                    depth += 1
                    node_stack[depth] = nxt
                    ptr_stack[depth] = var_ptr[nxt]
                    advanced = True
                    break
            if not advanced:
                if depth > 0:
                    if depth % 2 == 1:
                        vis_c[node_stack[depth]] = False
                    else:
                        vis_v[node_stack[depth]] = False
                depth -= 1
        vis_v[s] = False
    return counts // 2


@njit(cache=True)
def _bfs_girth(var_ptr, var_nbr, chk_ptr, chk_nbr, n_var, n_chk, roots, limit):
    """Exact girth by BFS from each root variable (0 when no cycle <= limit)."""
    best = limit + 1
    n = n_var + n_chk
    dist = np.full(n, -1, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for r in roots:
        dist[:] = -1
        parent[:] = -1
        head = 0
        tail = 0
        queue[tail] = r
        tail += 1
        dist[r] = 0
        while head < tail:
            u = queue[head]
            head += 1
            if 2 * dist[u] + 1 >= best:
                break
            if u < n_var:
                lo, hi = var_ptr[u], var_ptr[u + 1]
            else:
                lo, hi = chk_ptr[u - n_var], chk_ptr[u - n_var + 1]
            for k in range(lo, hi):
                if u < n_var:
                    w = var_nbr[k] + n_var
                else:
                    w = chk_nbr[k]
                if w == parent[u]:
                    continue
                if dist[w] == -1:
                    dist[w] = dist[u] + 1
                    parent[w] = u
                    queue[tail] = w
                    tail += 1
                else:
                    length = dist[u] + dist[w] + 1
                    if length < best:
                        best = length
    return best if best <= limit else 0


def _csr_lists(mat: sp.spmatrix):
    csr = sp.csr_matrix(mat)
    csc = sp.csc_matrix(mat)
    return (csc.indptr.astype(np.int64), csc.indices.astype(np.int64),
            csr.indptr.astype(np.int64), csr.indices.astype(np.int64))


@dataclass
class GirthReport:
    girth: int
    cycle_counts: dict[int, int] = field(default_factory=dict)
    per_rate: dict[int, int] = field(default_factory=dict)

    @property
    def acyclic(self) -> bool:
        return self.girth == INF_GIRTH

    def girth_text(self) -> str:
        return "inf" if self.acyclic else str(self.girth)


def _block_arrays(qc: QcMatrix):
    chk, var, shift = qc.edges()
    var_ptr, var_edges, chk_ptr, chk_edges = _incidence(qc.rows, qc.cols, chk, var)
    return chk, var, shift, var_ptr, var_edges, chk_ptr, chk_edges


def block_cycle_counts(qc: QcMatrix, max_len: int) -> dict[int, int]:
    """Cycle counts of the lifted graph, derived from block-level walks."""
    chk, var, shift, var_ptr, var_edges, chk_ptr, chk_edges = _block_arrays(qc)
    per_var = _count_lifted_cycles(var_ptr, var_edges, chk_ptr, chk_edges, chk, var, shift,
                                   qc.cols, qc.rows, qc.z, max_len)
    totals = per_var.sum(axis=0)
    out = {}
    for length in range(4, max_len + 1, 2):
        num = qc.z * int(totals[length])
        if num % length:
            raise LiftingError("inconsistent block-level cycle count")
        out[length] = num // length
    return out


def block_girth(qc: QcMatrix, max_len: int) -> int:
    """Girth from the alternating-shift-sum criterion (0 if none <= max_len)."""
    chk, var, shift, var_ptr, var_edges, chk_ptr, chk_edges = _block_arrays(qc)
    active = np.ones(chk.size, dtype=np.bool_)
    best = 0
    for e in range(chk.size):
        limit = best - 2 if best else max_len
        if limit < 4:
            break
        g, _ = _local_girth((var_ptr, var_edges, chk_ptr, chk_edges, chk, var), shift, active, e,
                            limit, qc.z)
        if g:
            best = g
    return best


def girth_scan(graph, max_len: int = 10, count: bool = True, rate_cols: Sequence[tuple[int, int]] = ()
               ) -> GirthReport:
    """Girth and cycle-length histogram.

    ``graph`` is a QcMatrix (scanned at block level using QC symmetry) or a
    sparse parity-check matrix (scanned on the explicit graph).
    ``rate_cols`` optionally lists ``(n_rows, n_cols)`` leading submatrices
    whose girth goes into ``per_rate``.
    """
    if max_len < 4 or max_len % 2:
        raise ValueError("max_len must be even and >= 4")
    if isinstance(graph, QcMatrix):
        girth = block_girth(graph, max_len)
        counts = block_cycle_counts(graph, min(max_len, MAX_COUNT_LEN)) if count else {}
        per_rate = {}
        for n_rows, n_cols in rate_cols:
            per_rate[n_cols] = block_girth(graph.submatrix(n_rows, n_cols), max_len)
        return GirthReport(girth, counts, per_rate)
    mat = sp.csr_matrix(graph)
    var_ptr, var_nbr, chk_ptr, chk_nbr = _csr_lists(mat)
    n_chk, n_var = mat.shape
    roots = np.arange(n_var, dtype=np.int64)
    girth = int(_bfs_girth(var_ptr, var_nbr, chk_ptr, chk_nbr, n_var, n_chk, roots, max_len))
    counts = {}
    if count:
        raw = _count_cycles_dfs(var_ptr, var_nbr, chk_ptr, chk_nbr, n_var, n_chk,
                                min(max_len, MAX_COUNT_LEN))
        counts = {length: int(raw[length]) for length in range(4, min(max_len, MAX_COUNT_LEN) + 1, 2)}
    per_rate = {}
    for n_rows, n_cols in rate_cols:
        sub = mat[:n_rows, :n_cols]
        vp, vn, cp, cn = _csr_lists(sub)
        per_rate[n_cols] = int(_bfs_girth(vp, vn, cp, cn, n_cols, n_rows,
                                          np.arange(n_cols, dtype=np.int64), max_len))
    return GirthReport(girth, counts, per_rate)


# ---------------------------------------------------------------------------
# stage one: pre-lifting


def prelift(proto: Protomatrix, z1: int, seed: int = 0, max_len: int = 8) -> QcMatrix:
    """Split parallel edges by a ``z1``-fold circulant pre-lift.

    Cells are filled in row-major order.  Every exponent set of a cell is
    tried (sampled when there are more than 64) and the one maximizing the
    shortest cycle through the cell, then minimizing how many such cycles
    close, is kept; remaining ties go to a seeded draw.
    """
    mult = proto.mult
    if z1 < int(mult.max()):
        raise LiftingError(f"z1={z1} below the largest multiplicity {int(mult.max())}")
    rng = random.Random(seed)
    n_chk, n_var = mult.shape
    chk, var = proto.edges()
    n_edge = chk.size
    shift = np.zeros(n_edge, dtype=np.int64)
    active = np.zeros(n_edge, dtype=np.bool_)
    arrays = (*_incidence(n_chk, n_var, chk, var), chk, var)
    cell_edges: dict[tuple[int, int], list[int]] = {}
    for e in range(n_edge):
        cell_edges.setdefault((int(chk[e]), int(var[e])), []).append(e)

    for (r, c), eids in sorted(cell_edges.items()):
        k = len(eids)
        options = list(itertools.combinations(range(z1), k))
        if len(options) > 64:
            options = rng.sample(options, 64)
        scored = []
        for opt in options:
            shift[eids] = opt
            active[eids] = True
            shortest = max_len + 2
            hits = 0
            for e in eids:
                g, n = _local_girth(arrays, shift, active, e, max_len, z1)
                if g and g < shortest:
                    shortest, hits = g, n
                elif g and g == shortest:
                    hits += n
            scored.append((-shortest, hits, opt))
            active[eids] = False
        best_key = min(s[:2] for s in scored)
        pool = [s[2] for s in scored if s[:2] == best_key]
        choice = pool[rng.randrange(len(pool))] if len(pool) > 1 else pool[0]
        shift[eids] = choice
        active[eids] = True

    cells = [[() for _ in range(n_var)] for _ in range(n_chk)]
    for (r, c), eids in cell_edges.items():
        cells[r][c] = tuple(sorted(int(shift[e]) for e in eids))
    return QcMatrix(tuple(tuple(row) for row in cells), z1, "pre-lifted")


# ---------------------------------------------------------------------------
# stage two: cPEG with ACE


PUBLISHED_ACE_LEVELS = ((7, 21, 100), (6, 21, 100), (6, 20, 100), (6, 19, 100), (6, 18, 100))
# relaxed tail for graphs whose low-degree nodes cannot reach eta = 18
FALLBACK_ACE_LEVELS = ((6, 12, 100), (6, 10, 100), (5, 8, 100))


@dataclass(frozen=True)
class AceSchedule:
    """ACE levels ``(d, eta, attempts)`` tried in order, plus the enforced girth."""

    levels: tuple[tuple[int, int, int], ...] = PUBLISHED_ACE_LEVELS
    girth_floor: int = 8

    def __post_init__(self) -> None:
        levels = tuple((int(d), int(eta), int(b)) for d, eta, b in self.levels)
        for d, eta, budget in levels:
            if budget < 1:
                raise ValueError("attempt budgets must be positive")
            if d < 1 or eta < 0:
                raise ValueError("bad ACE level")
        for (d1, e1, _), (d2, e2, _) in zip(levels, levels[1:]):
            if d2 > d1 or e2 > e1:
                raise ValueError("ACE levels must relax monotonically")
        if self.girth_floor < 4 or self.girth_floor % 2:
            raise ValueError("girth floor must be even and >= 4")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def parse(cls, text: str, girth_floor: int = 8) -> "AceSchedule":
        """Parse ``"7:21@100,6:21@100"``; an empty string means girth only."""
        levels = []
        for item in filter(None, (t.strip() for t in text.split(","))):
            de, _, budget = item.partition("@")
            d, eta = de.split(":")
            levels.append((int(d), int(eta), int(budget or 100)))
        return cls(tuple(levels), girth_floor)

    @classmethod
    def with_fallback(cls, girth_floor: int = 8) -> "AceSchedule":
        """The published levels followed by :data:`FALLBACK_ACE_LEVELS`."""
        return cls(PUBLISHED_ACE_LEVELS + FALLBACK_ACE_LEVELS, girth_floor)

    @property
    def max_walk(self) -> int:
        return max([2 * d for d, _, _ in self.levels] + [self.girth_floor - 2])


def forbidden_shifts(constraints, girth_floor: int, level: tuple[int, int] | None = None
                     ) -> set[int]:
    """Exponents of the new edge that would close a banned cycle.

    ``constraints`` is the ``(x, length, ace)`` output of the edge-constraint
    enumerator.  Cycles shorter than ``girth_floor`` are always banned; with
    ``level = (d, eta)`` so are cycles of length ``<= 2d`` whose ACE is below ``eta``.
    """
    xs, lengths, aces = constraints
    bad = lengths < girth_floor
    if level is not None:
        d, eta = level
        bad = bad | ((lengths <= 2 * d) & (aces < eta))
    return set(xs[bad].tolist())


@dataclass
class LiftStats:
    restarts: int = 0
    level_use: dict[str, int] = field(default_factory=dict)


def _assign_shifts(chk, var, n_chk, n_var, z, schedule: AceSchedule, seed, max_restarts,
                   stats: LiftStats, floors: np.ndarray | None = None) -> np.ndarray:
    n_edge = chk.size
    var_ptr, var_edges, chk_ptr, chk_edges = _incidence(n_chk, n_var, chk, var)
    degree = np.bincount(var, minlength=n_var)
    ace_w = np.maximum(degree - 2, 0).astype(np.int64)
    max_eta = max([eta for _, eta, _ in schedule.levels], default=0)
    if floors is None:
        floors = np.full(chk.size, schedule.girth_floor, dtype=np.int64)
    walk_len = max(schedule.max_walk, int(floors.max()) - 2)
    levels = schedule.levels or ((0, 0, z),)
    for attempt in range(max_restarts + 1):
        rng = np.random.default_rng([seed, attempt])
        stats.level_use = {}
        shift = np.zeros(n_edge, dtype=np.int64)
        active = np.zeros(n_edge, dtype=np.bool_)
        placed = True
        for e in range(n_edge):
            active[e] = True
            if degree[var[e]] == 1:
                # a degree-one node lies on no cycle; keep identity blocks as identity
                continue
            cons = _edge_constraints(var_ptr, var_edges, chk_ptr, chk_edges, chk, var, shift, active,
                                     ace_w, e, walk_len, max_eta, z, int(floors[e]))
            banned = forbidden_shifts(cons, int(floors[e]))
            # parallel edges of one cell need distinct exponents
            partners = np.flatnonzero(active & (chk == chk[e]) & (var == var[e]))
            banned.update(int(shift[p]) for p in partners if p != e)
            order = rng.permutation(z)
            pos = 0
            chosen = -1
            for d, eta, budget in levels:
                ace_banned = forbidden_shifts(cons, 0, (d, eta)) if schedule.levels else set()
                for _ in range(budget):
                    if pos >= z:
                        break
                    x = int(order[pos])
                    pos += 1
                    if x not in banned and x not in ace_banned:
                        chosen = x
                        break
                if chosen >= 0:
                    key = f"{d}:{eta}" if schedule.levels else "girth-only"
                    stats.level_use[key] = stats.level_use.get(key, 0) + 1
                    break
            if chosen < 0:
                placed = False
                log.info("restart %d: edge %d of %d could not be placed", attempt, e, n_edge)
                break
            shift[e] = chosen
        if placed:
            stats.restarts = attempt
            return shift
    stats.restarts = max_restarts
    raise LiftingError(f"no admissible assignment after {max_restarts} restarts")


def cpeg_lift(qc: QcMatrix, z2: int, schedule: AceSchedule | None = None, seed: int = 0,
              max_restarts: int = 50, stats: LiftStats | None = None, precode_rows: int = 0,
              precode_girth: int | None = None) -> QcMatrix:
    """Assign one circulant exponent in ``[0, z2)`` to every edge of a pre-lifted graph.

    Edges are visited in row-major order of the expanded pre-lift.  Candidate
    exponents are drawn in seeded random order and the first one is admitted
    that closes no cycle shorter than ``girth_floor`` and, under the current
    ACE level ``(d, eta)``, no cycle of length ``<= 2d`` with ACE below ``eta``.
    A level that exhausts its attempt budget hands over to the next one; an
    edge that exhausts every level restarts the whole assignment.

    ``precode_girth`` optionally raises the girth floor for edges in the
    first ``precode_rows`` block rows of ``qc`` (before expansion).  Those
    edges come first in row-major order, so the raised floor constrains
    cycles of the precode alone.
    """
    schedule = schedule or AceSchedule()
    if z2 < 1:
        raise LiftingError("z2 must be positive")
    base = qc.as_base() if qc.z > 1 else qc
    chk, var, _ = base.edges()
    stats = stats if stats is not None else LiftStats()
    floors = np.full(chk.size, schedule.girth_floor, dtype=np.int64)
    if precode_girth is not None and precode_rows > 0:
        if precode_girth < 4 or precode_girth % 2:
            raise LiftingError("precode girth must be even and >= 4")
        floors[chk < precode_rows * qc.z] = max(precode_girth, schedule.girth_floor)
    shift = _assign_shifts(chk, var, base.rows, base.cols, z2, schedule, seed, max_restarts, stats,
                           floors)
    cells = [[() for _ in range(base.cols)] for _ in range(base.rows)]
    for e in range(chk.size):
        cells[int(chk[e])][int(var[e])] = (int(shift[e]),)
    return QcMatrix(tuple(tuple(row) for row in cells), z2, "final")


def direct_lift(proto: Protomatrix, z: int, schedule: AceSchedule | None = None, seed: int = 0,
                max_restarts: int = 50, stats: LiftStats | None = None) -> QcMatrix:
    """Single-stage circulant lift; parallel edges receive distinct exponents."""
    schedule = schedule or AceSchedule(levels=(), girth_floor=6)
    chk, var = proto.edges()
    stats = stats if stats is not None else LiftStats()
    shift = _assign_shifts(chk, var, proto.rows, proto.cols, z, schedule, seed, max_restarts, stats)
    cells = [[() for _ in range(proto.cols)] for _ in range(proto.rows)]
    for e in range(chk.size):
        r, c = int(chk[e]), int(var[e])
        cells[r][c] = tuple(sorted(cells[r][c] + (int(shift[e]),)))
    stage = "final" if int(proto.mult.max()) <= 1 else "pre-lifted"
    return QcMatrix(tuple(tuple(row) for row in cells), z, stage)
