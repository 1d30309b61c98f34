"""Protomatrices, PBRL families and their rate bookkeeping.

A PBRL protomatrix has the block form::

    [[H_p, 0],
     [H_LT, I]]

so a family is fully described by the precode ``H_p``, the ordered rows of
``H_LT`` and the set of precode variable nodes that are never transmitted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MIN_PRECODE_DEGREE = 3


class ProtographError(ValueError):
    """Raised for malformed protomatrices or families."""


def _as_int_matrix(data, ncols: int | None = None) -> np.ndarray:
    arr = np.array(data, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, ncols if ncols is not None else 0)
    if arr.ndim != 2:
        raise ProtographError(f"expected a 2-D matrix, got shape {arr.shape}")
    if np.any(arr < 0):
        raise ProtographError("edge multiplicities must be nonnegative")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Protomatrix:
    """Edge multiplicities between proto check nodes (rows) and proto variable nodes (columns)."""

    mult: np.ndarray

    def __post_init__(self) -> None:
        arr = _as_int_matrix(self.mult)
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ProtographError("protomatrix needs at least one row and one column")
        if np.any(arr.sum(axis=0) == 0):
            zero = np.flatnonzero(arr.sum(axis=0) == 0).tolist()
            raise ProtographError(f"variable nodes {zero} have no edges")
        object.__setattr__(self, "mult", arr)

    @property
    def rows(self) -> int:
        return self.mult.shape[0]

    @property
    def cols(self) -> int:
        return self.mult.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.mult.shape

    @property
    def num_edges(self) -> int:
        return int(self.mult.sum())

    def variable_degrees(self) -> np.ndarray:
        return self.mult.sum(axis=0)

    def check_degrees(self) -> np.ndarray:
        return self.mult.sum(axis=1)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Expand multiplicities into parallel edges.

        Returns ``(check_of_edge, var_of_edge)``; an entry ``k`` yields ``k``
        consecutive edges in row-major order.
        """
        rr, cc = np.nonzero(self.mult)
        counts = self.mult[rr, cc]
        return np.repeat(rr, counts), np.repeat(cc, counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Protomatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.mult, other.mult))

    def __hash__(self) -> int:
        return hash((self.shape, self.mult.tobytes()))

    def __repr__(self) -> str:
        return f"Protomatrix({self.mult.tolist()})"

    def to_text(self) -> str:
        return format_matrix(self.mult)

    @classmethod
    def from_text(cls, text: str) -> "Protomatrix":
        return cls(parse_matrix(text))


def format_matrix(mat: np.ndarray) -> str:
    """Serialize to the plain protomatrix text format (``rows cols`` header)."""
    mat = np.asarray(mat)
    lines = [f"{mat.shape[0]} {mat.shape[1]}"]
    lines.extend(" ".join(str(int(v)) for v in row) for row in mat)
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 2:
        raise ProtographError("missing 'rows cols' header")
    rows, cols = (int(v) for v in lines[0])
    body = lines[1:]
    if len(body) != rows:
        raise ProtographError(f"header declares {rows} rows, found {len(body)}")
    for i, row in enumerate(body):
        if len(row) != cols:
            raise ProtographError(f"row {i} has {len(row)} entries, expected {cols}")
    return _as_int_matrix([[int(v) for v in row] for row in body], ncols=cols)


@dataclass(frozen=True)
class RatePoint:
    m: int
    k_proto: int
    n_proto_tx: int

    @property
    def rate(self) -> Fraction:
        return Fraction(self.k_proto, self.n_proto_tx)

    def label(self) -> str:
        """Unreduced ``k/n`` label as printed in threshold tables."""
        return f"{self.k_proto}/{self.n_proto_tx}"


@dataclass(frozen=True, eq=False)
class PbrlFamily:
    precode: Protomatrix
    lt_rows: np.ndarray
    punctured: frozenset[int] = field(default_factory=frozenset)
    name: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.precode, Protomatrix):
            object.__setattr__(self, "precode", Protomatrix(self.precode))
        lt = _as_int_matrix(self.lt_rows, ncols=self.precode.cols)
        if lt.shape[1] != self.precode.cols:
            raise ProtographError(
                f"LT rows have {lt.shape[1]} columns, precode has {self.precode.cols}"
            )
        object.__setattr__(self, "lt_rows", lt)
        object.__setattr__(self, "punctured", frozenset(int(p) for p in self.punctured))
        if self.k_proto <= 0:
            raise ProtographError("precode has no information columns")
        if self.precode.cols - len(self.punctured) <= self.k_proto:
            raise ProtographError("precode rate must be below 1")

    @property
    def n_precode(self) -> int:
        return self.precode.cols

    @property
    def r_precode(self) -> int:
        return self.precode.rows

    @property
    def k_proto(self) -> int:
        return self.precode.cols - self.precode.rows

    @property
    def num_lt(self) -> int:
        return self.lt_rows.shape[0]

    def rate_point(self, m: int) -> RatePoint:
        _check_m(self, m)
        return RatePoint(m, self.k_proto, self.n_precode - len(self.punctured) + m)

    def rate(self, m: int) -> Fraction:
        return self.rate_point(m).rate

    def with_lt_rows(self, rows: Sequence[Sequence[int]] | np.ndarray) -> "PbrlFamily":
        return PbrlFamily(self.precode, np.asarray(rows, dtype=np.int64).reshape(-1, self.n_precode),
                          self.punctured, self.name)

    def append_row(self, row: Sequence[int]) -> "PbrlFamily":
        return self.with_lt_rows(np.vstack([self.lt_rows, np.asarray(row, dtype=np.int64)[None, :]]))

    def truncated(self, m: int) -> "PbrlFamily":
        _check_m(self, m)
        return self.with_lt_rows(self.lt_rows[:m])

    def punctured_mask(self, m: int) -> np.ndarray:
        """Boolean mask over the ``n_p + m`` columns of ``assemble(self, m)``."""
        mask = np.zeros(self.n_precode + m, dtype=bool)
        mask[sorted(self.punctured)] = True
        return mask

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PbrlFamily):
            return NotImplemented
        return (
            self.precode == other.precode
            and self.lt_rows.shape == other.lt_rows.shape
            and bool(np.array_equal(self.lt_rows, other.lt_rows))
            and self.punctured == other.punctured
        )

    def __hash__(self) -> int:
        return hash((self.precode, self.lt_rows.tobytes(), self.punctured))

    def to_text(self) -> str:
        punct = " ".join(str(p) for p in sorted(self.punctured))
        return (
            f"[name]\n{self.name}\n"
            f"[precode]\n{self.precode.to_text()}"
            f"[lt]\n{format_matrix(self.lt_rows)}"
            f"[punctured]\n{punct}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "PbrlFamily":
        sections: dict[str, list[str]] = {}
        current = None
        for line in text.splitlines():
            stripped = line.strip()
            if stripped.startswith("[") and stripped.endswith("]"):
                current = stripped[1:-1].strip().lower()
                sections[current] = []
            elif current is not None:
                sections[current].append(line)
            elif stripped:
                raise ProtographError(f"content before first section: {line!r}")
        for required in ("precode", "lt"):
            if required not in sections:
                raise ProtographError(f"missing [{required}] section")
        precode = Protomatrix.from_text("\n".join(sections["precode"]))
        lt = parse_matrix("\n".join(sections["lt"]))
        punct_tokens = " ".join(sections.get("punctured", [])).split()
        name = "\n".join(sections.get("name", [])).strip()
        return cls(precode, lt, frozenset(int(t) for t in punct_tokens), name)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> "PbrlFamily":
        return cls.from_text(Path(path).read_text())


def _check_m(family: PbrlFamily, m: int) -> None:
    if not 0 <= m <= family.num_lt:
        raise ProtographError(f"m={m} outside 0..{family.num_lt}")


def assemble(family: PbrlFamily, m: int) -> Protomatrix:
    """Protomatrix of the rate point that transmits the first ``m`` LT variables."""
    _check_m(family, m)
    r_p, n_p = family.precode.shape
    mat = np.zeros((r_p + m, n_p + m), dtype=np.int64)
    mat[:r_p, :n_p] = family.precode.mult
    mat[r_p:, :n_p] = family.lt_rows[:m]
    mat[r_p:, n_p:] = np.eye(m, dtype=np.int64)
    return Protomatrix(mat)


def rate_ladder(family: PbrlFamily) -> list[RatePoint]:
    return [family.rate_point(m) for m in range(family.num_lt + 1)]


@dataclass
class ValidationReport:
    low_degree: list[tuple[int, int]] = field(default_factory=list)
    zero_lt_rows: list[int] = field(default_factory=list)
    bad_punctured: list[int] = field(default_factory=list)
    parallel_precode: int = 0
    parallel_lt: int = 0
    parallel_lt_punctured: int = 0

    @property
    def ok(self) -> bool:
        return not (self.low_degree or self.zero_lt_rows or self.bad_punctured)

    def violations(self) -> list[str]:
        out = [f"precode variable {v} has degree {d} < {MIN_PRECODE_DEGREE}" for v, d in self.low_degree]
        out += [f"LT row {r} is all zero" for r in self.zero_lt_rows]
        out += [f"punctured index {p} out of range" for p in self.bad_punctured]
        return out


def validate(family: PbrlFamily) -> ValidationReport:
    """Structural checks; problems are reported, never raised."""
    report = ValidationReport()
    n_p = family.n_precode
    report.bad_punctured = sorted(p for p in family.punctured if not 0 <= p < n_p)
    degrees = family.precode.variable_degrees()
    report.low_degree = [
        (v, int(d)) for v, d in enumerate(degrees)
        if v not in family.punctured and d < MIN_PRECODE_DEGREE
    ]
    lt = family.lt_rows
    report.zero_lt_rows = [i for i in range(lt.shape[0]) if not lt[i].any()]
    report.parallel_precode = int(np.count_nonzero(family.precode.mult >= 2))
    report.parallel_lt = int(np.count_nonzero(lt >= 2))
    valid_punct = [p for p in family.punctured if 0 <= p < n_p]
    report.parallel_lt_punctured = int(np.count_nonzero(lt[:, valid_punct] >= 2)) if valid_punct else 0
    return report


def family_from_protomatrix(full: Protomatrix | np.ndarray, r_p: int, punctured: Iterable[int] = (),
                            name: str = "") -> PbrlFamily:
    """Split a full ``[[H_p, 0], [H_LT, I]]`` protomatrix back into a family."""
    mat = full.mult if isinstance(full, Protomatrix) else np.asarray(full)
    m = mat.shape[0] - r_p
    n_p = mat.shape[1] - m
    if m < 0 or n_p <= 0:
        raise ProtographError("inconsistent precode row count")
    if mat[:r_p, n_p:].any() or not np.array_equal(mat[r_p:, n_p:], np.eye(m, dtype=mat.dtype)):
        raise ProtographError("matrix does not have the PBRL block structure")
    return PbrlFamily(Protomatrix(mat[:r_p, :n_p]), mat[r_p:, :n_p], frozenset(punctured), name)
