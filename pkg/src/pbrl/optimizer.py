"""Greedy construction of the LT part of a PBRL family.

Each step appends one check node and one degree-one variable node, then
picks the check node's connections to the precode that minimize the RCA
threshold at the new, lower rate.
"""

from __future__ import annotations

import itertools
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from pbrl import rca
from pbrl.protograph import PbrlFamily, ProtographError, assemble, validate

log = logging.getLogger(__name__)

PUNCT_RULES = (
    "forbid-parallel",
    "tiebreak-avoid",
    "force-single",
    "force-alternating-pairs",
    "per-row-schedule",
)
EXHAUSTIVE_LIMIT = 200_000


class OptimizerError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExtensionPolicy:
    """Search space and tie-breaking for one LT row.

    ``max_entry`` caps entries on unpunctured columns.  The punctured column
    is governed by ``punct_rule``: ``forbid-parallel`` allows {0, 1},
    ``tiebreak-avoid`` allows ``0..punct_max`` and prefers 0 among ties,
    ``force-single`` pins it to 1, ``force-alternating-pairs`` pins 2 on
    even-indexed LT rows and 1 on the others, and ``per-row-schedule`` reads
    the pinned value from ``schedule`` (1 once the schedule runs out).
    """

    max_entry: int = 1
    punct_rule: str = "forbid-parallel"
    target_rows: int = 1
    candidate_cap: int | None = None
    punct_max: int = 2
    schedule: tuple[int, ...] = ()
    seed: int = 0
    precision_db: float = rca.DEFAULT_PRECISION_DB
    rca_iters: int = rca.DEFAULT_ITERS
    rca_stop: float = rca.DEFAULT_STOP
    threads: int = 1

    def __post_init__(self) -> None:
        if self.max_entry not in (1, 2):
            raise ValueError("max_entry must be 1 or 2")
        if self.punct_rule not in PUNCT_RULES:
            raise ValueError(f"unknown punct_rule {self.punct_rule!r}")
        if self.target_rows < 0:
            raise ValueError("target_rows must be nonnegative")
        object.__setattr__(self, "schedule", tuple(int(v) for v in self.schedule))

    def punctured_values(self, row_index: int) -> tuple[int, ...]:
        rule = self.punct_rule
        if rule == "forbid-parallel":
            return (0, 1)
        if rule == "tiebreak-avoid":
            return tuple(range(self.punct_max + 1))
        if rule == "force-single":
            return (1,)
        if rule == "force-alternating-pairs":
            return (2,) if row_index % 2 == 0 else (1,)
        if row_index < len(self.schedule):
            return (self.schedule[row_index],)
        return (1,)


@dataclass
class StepRecord:
    step: int
    rate: str
    candidates: int
    evaluated: int
    best_row: list[int]
    best_threshold_db: float
    ties: int
    tie_break: str


@dataclass
class ExtensionTrace:
    steps: list[StepRecord] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"steps": [asdict(s) for s in self.steps]}, indent=2)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


def candidate_rows(family: PbrlFamily, policy: ExtensionPolicy) -> list[tuple[int, ...]]:
    """Candidate LT rows for the next step, in lexicographic order."""
    n_p = family.n_precode
    row_index = family.num_lt
    punct = sorted(family.punctured)
    if punct and policy.punct_rule not in ("forbid-parallel", "tiebreak-avoid"):
        if len(punct) != 1:
            raise OptimizerError("pinned punctured-column rules need exactly one punctured node")
    choices: list[tuple[int, ...]] = []
    for col in range(n_p):
        if col in family.punctured:
            choices.append(policy.punctured_values(row_index))
        else:
            choices.append(tuple(range(policy.max_entry + 1)))
    total = 1
    for c in choices:
        total *= len(c)

    if total <= EXHAUSTIVE_LIMIT and policy.candidate_cap is None:
        rows = [r for r in itertools.product(*choices) if any(r)]
    else:
        cap = policy.candidate_cap or EXHAUSTIVE_LIMIT
        rng = random.Random(policy.seed * 1_000_003 + row_index)
        if total <= EXHAUSTIVE_LIMIT:
            pool = [r for r in itertools.product(*choices) if any(r)]
            rows = pool if cap >= len(pool) else rng.sample(pool, cap)
        else:
            seen: set[tuple[int, ...]] = set()
            attempts = 0
            while len(seen) < cap and attempts < 50 * cap:
                attempts += 1
                r = tuple(rng.choice(c) for c in choices)
                if any(r):
                    seen.add(r)
            rows = list(seen)
        rows.sort()
    if not rows:
        raise OptimizerError("candidate space is empty under this policy")
    return rows


def _threshold_db(family: PbrlFamily, row, policy: ExtensionPolicy) -> float:
    trial = family.append_row(row)
    m = trial.num_lt
    res = rca.threshold(assemble(trial, m), trial.punctured, policy.rca_iters, policy.rca_stop,
                        policy.precision_db, rate=trial.rate(m))
    return res.ebn0_db


def _passes_at(family: PbrlFamily, row, ebn0_db: float, policy: ExtensionPolicy) -> bool:
    trial = family.append_row(row)
    m = trial.num_lt
    ev = rca.RcaEvaluator(assemble(trial, m), trial.punctured, policy.rca_iters, policy.rca_stop)
    return ev(rca.ebn0_db_to_snr(ebn0_db, trial.rate(m)))


def evaluate_candidates(family: PbrlFamily, rows, policy: ExtensionPolicy) -> dict[tuple, float]:
    """Thresholds of every candidate that could be a minimizer or a tie.

    A candidate is screened with one RCA pass at ``best + 2 * precision``;
    failing there proves its bisected threshold exceeds ``min + precision``,
    so it cannot be selected.  Survivors get the canonical full bisection.
    Only candidates within ``precision`` of the final minimum are returned;
    every such candidate passes any screen, so the returned set does not
    depend on evaluation order or thread count.
    """
    prec = policy.precision_db
    results: dict[tuple, float] = {}
    first = rows[0]
    best = _threshold_db(family, first, policy)
    results[first] = best

    def screen(row):
        if _passes_at(family, row, best + 2.0 * prec, policy):
            return row, _threshold_db(family, row, policy)
        return row, None

    rest = rows[1:]
    if policy.threads > 1:
        # "best" only tightens the screen; survivors are evaluated canonically
        with ThreadPoolExecutor(policy.threads) as pool:
            for row, th in pool.map(screen, rest):
                if th is not None:
                    results[row] = th
                    best = min(best, th)
    else:
        for row in rest:
            row, th = screen(row)
            if th is not None:
                results[row] = th
                best = min(best, th)
    return {r: th for r, th in results.items() if th <= best + prec}


def select_row(results: dict[tuple, float], family: PbrlFamily, policy: ExtensionPolicy):
    best = min(results.values())
    ties = sorted(r for r, th in results.items() if th <= best + policy.precision_db)
    rule = "lexicographic"
    pool = ties
    if policy.punct_rule == "tiebreak-avoid" and family.punctured and len(ties) > 1:
        avoid = [r for r in ties if all(r[p] == 0 for p in family.punctured)]
        if avoid:
            pool = avoid
            rule = "avoid-punctured"
    chosen = min(pool, key=lambda r: (results[r], r))
    return chosen, ties, rule


def extend_once(family: PbrlFamily, policy: ExtensionPolicy) -> tuple[PbrlFamily, StepRecord]:
    if policy.punct_rule in ("force-single", "force-alternating-pairs", "per-row-schedule") \
            and not family.punctured:
        raise OptimizerError(f"{policy.punct_rule} requires a punctured node")
    rows = candidate_rows(family, policy)
    results = evaluate_candidates(family, rows, policy)
    chosen, ties, rule = select_row(results, family, policy)
    new = family.append_row(chosen)
    record = StepRecord(
        step=family.num_lt,
        rate=new.rate_point(new.num_lt).label(),
        candidates=len(rows),
        evaluated=len(rows),
        best_row=list(chosen),
        best_threshold_db=results[chosen],
        ties=len(ties),
        tie_break=rule,
    )
    log.info("step %d rate %s row %s threshold %.3f dB (%d ties)", record.step, record.rate,
             record.best_row, record.best_threshold_db, record.ties)
    return new, record


def build_family(precode, punctured, policy: ExtensionPolicy, name: str = "",
                 seed_rows=None) -> tuple[PbrlFamily, ExtensionTrace]:
    """Run the greedy extension ``policy.target_rows`` times.

    ``seed_rows`` are fixed leading LT rows (for instance a designer-chosen
    first row); they count toward ``target_rows``.
    """
    n_p = precode.cols if hasattr(precode, "cols") else np.asarray(precode).shape[1]
    lt = np.asarray(seed_rows if seed_rows is not None else [], dtype=np.int64).reshape(-1, n_p)
    family = PbrlFamily(precode, lt, frozenset(punctured), name)
    report = validate(family)
    if not report.ok:
        raise ProtographError("; ".join(report.violations()))
    trace = ExtensionTrace()
    while family.num_lt < policy.target_rows:
        family, record = extend_once(family, policy)
        trace.steps.append(record)
    return family, trace
