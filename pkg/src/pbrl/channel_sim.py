"""BI-AWGN Monte-Carlo FER/BER simulation with reproducible per-frame streams.

Every frame draws its information word and noise from a Philox generator
keyed by the seed with the frame index in the counter, so totals do not
depend on batching or on the number of worker processes.  The stopping rule
is evaluated only at fixed batch boundaries for the same reason.  Frames
share their random streams across Eb/N0 points (common random numbers).
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import beta

from pbrl import codec

log = logging.getLogger(__name__)

CSV_COLUMNS = ("rate", "ebn0_db", "frames", "frame_errors", "bit_errors", "fer", "ber",
               "mean_iters", "seed", "m", "undetected", "fer_ci_low", "fer_ci_high", "schedule")
BATCH_FRAMES = 256


@dataclass(frozen=True)
class ChannelConfig:
    """Antipodal 0 -> +1, 1 -> -1 signalling over real AWGN."""

    ebn0_db: float
    rate: Fraction
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "rate", Fraction(self.rate))
        if not 0 < self.rate <= 1:
            raise ValueError(f"rate {self.rate} outside (0, 1]")

    @property
    def sigma(self) -> float:
        return math.sqrt(1.0 / (2.0 * float(self.rate) * 10.0 ** (self.ebn0_db / 10.0)))

    def llr(self, y: np.ndarray) -> np.ndarray:
        return 2.0 * y / self.sigma ** 2


@dataclass(frozen=True)
class StopRule:
    min_frame_errors: int = 100
    max_frames: int = 10_000_000

    def __post_init__(self) -> None:
        if self.max_frames < 1 or self.min_frame_errors < 1:
            raise ValueError("stop rule needs positive max_frames and min_frame_errors")


@dataclass(frozen=True)
class PointResult:
    rate: Fraction
    ebn0_db: float
    m: int
    frames: int
    frame_errors: int
    bit_errors: int
    undetected: int
    total_iters: int
    k: int
    seed: int
    schedule: str

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else float("nan")

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.frames * self.k) if self.frames else float("nan")

    @property
    def mean_iters(self) -> float:
        return self.total_iters / self.frames if self.frames else float("nan")

    def fer_ci(self, level: float = 0.95) -> tuple[float, float]:
        return clopper_pearson(self.frame_errors, self.frames, level)

    def row(self) -> dict:
        lo, hi = self.fer_ci()
        return {"rate": str(self.rate), "ebn0_db": f"{self.ebn0_db:.4f}", "frames": self.frames,
                "frame_errors": self.frame_errors, "bit_errors": self.bit_errors,
                "fer": f"{self.fer:.6e}", "ber": f"{self.ber:.6e}",
                "mean_iters": f"{self.mean_iters:.3f}", "seed": self.seed, "m": self.m,
                "undetected": self.undetected, "fer_ci_low": f"{lo:.6e}",
                "fer_ci_high": f"{hi:.6e}", "schedule": self.schedule}


def clopper_pearson(errors: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval."""
    if trials <= 0:
        return 0.0, 1.0
    a = 1.0 - level
    lo = 0.0 if errors == 0 else float(beta.ppf(a / 2, errors, trials - errors + 1))
    hi = 1.0 if errors == trials else float(beta.ppf(1 - a / 2, errors + 1, trials - errors))
    return lo, hi


def frame_generator(seed: int, frame: int) -> np.random.Generator:
    """Counter-based stream of one frame."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(frame)]))


def draw_frame(seed: int, frame: int, k: int, n_tx: int) -> tuple[np.ndarray, np.ndarray]:
    """Information bits and unit-variance noise for one frame."""
    rng = frame_generator(seed, frame)
    info = rng.integers(0, 2, k, dtype=np.uint8)
    noise = rng.standard_normal(n_tx)
    return info, noise


@dataclass(frozen=True)
class _Job:
    code: codec.SparseParityCheck
    plan: codec.EncoderPlan
    m: int
    channel: ChannelConfig
    schedule: str
    max_iter: int


def _run_frames(job: _Job, start: int, stop: int) -> tuple[int, int, int, int]:
    code, plan = job.code, job.plan
    n_tx = code.n_tx(job.m)
    count = stop - start
    if count <= 0:
        return 0, 0, 0, 0
    info = np.empty((count, plan.k), dtype=np.uint8)
    noise = np.empty((count, n_tx))
    for i in range(count):
        info[i], noise[i] = draw_frame(job.channel.seed, start + i, plan.k, n_tx)
    cw = codec.encode(plan, info)
    tx = codec.select_transmit(cw, code, job.m)
    y = (1.0 - 2.0 * tx) + job.channel.sigma * noise
    out = codec.decode(code, job.channel.llr(y), job.m, job.schedule, job.max_iter)
    wrong = out.hard[:, plan.info_positions] != info
    frame_err = wrong.any(axis=1)
    undetected = frame_err & out.converged
    return (int(frame_err.sum()), int(wrong.sum()), int(undetected.sum()),
            int(out.iterations.sum()))


def run_point(code: codec.SparseParityCheck, plan: codec.EncoderPlan, m: int,
              channel: ChannelConfig, stop: StopRule = StopRule(), schedule: str = "flooding",
              max_iter: int = 100, workers: int = 1, batch_frames: int = BATCH_FRAMES
              ) -> PointResult:
    """Simulate one (rate point, Eb/N0) pair until the stop rule fires.

    The rule is checked after each batch of ``batch_frames`` frames, so a
    run may overshoot ``min_frame_errors`` but never ``max_frames``.
    """
    job = _Job(code, plan, m, channel, schedule, max_iter)
    frames = errors = bits = undetected = iters = 0
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while frames < stop.max_frames and errors < stop.min_frame_errors:
            end = min(frames + batch_frames, stop.max_frames)
            if pool is None:
                parts = [_run_frames(job, frames, end)]
            else:
                edges = np.linspace(frames, end, workers + 1).astype(int)
                parts = list(pool.map(_run_frames, [job] * workers, edges[:-1], edges[1:]))
            for fe, be, ue, it in parts:
                errors += fe
                bits += be
                undetected += ue
                iters += it
            frames = end
            log.debug("Eb/N0 %.3f m=%d: %d/%d frame errors", channel.ebn0_db, m, errors, frames)
    finally:
        if pool is not None:
            pool.shutdown()
    return PointResult(channel.rate, channel.ebn0_db, m, frames, errors, bits, undetected, iters,
                       plan.k, channel.seed, schedule)


def code_rate(code: codec.SparseParityCheck, plan: codec.EncoderPlan, m: int) -> Fraction:
    return Fraction(plan.k, code.n_tx(m))


def parse_grid(text: str) -> list[float]:
    """``"a:step:b"`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = [float(t) for t in text.split(":")]
        if len(parts) != 3 or parts[1] <= 0:
            raise ValueError(f"bad grid {text!r}; expected start:step:stop")
        a, step, b = parts
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        return [round(a + i * step, 10) for i in range(max(n, 0))]
    return [float(t) for t in text.split(",")]


def sweep(code: codec.SparseParityCheck, plan: codec.EncoderPlan, ms: Sequence[int],
          ebn0_grid: Iterable[float], stop: StopRule = StopRule(), seed: int = 0,
          schedule: str = "flooding", max_iter: int = 100, workers: int = 1,
          ) -> list[PointResult]:
    """Run every (m, Eb/N0) pair, rates in the given order and Eb/N0 ascending."""
    grid = sorted(float(e) for e in ebn0_grid)
    out = []
    for m in ms:
        rate = code_rate(code, plan, m)
        for ebn0 in grid:
            out.append(run_point(code, plan, m, ChannelConfig(ebn0, rate, seed), stop, schedule,
                                 max_iter, workers))
    return out


def write_csv(path, points: Sequence[PointResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for p in points:
            writer.writerow(p.row())


def required_ebn0(points: Sequence[PointResult], target_fer: float) -> float:
    """Eb/N0 where the FER curve crosses ``target_fer`` (log-linear interpolation).

    Returns ``nan`` when the curve does not straddle the target.
    """
    pts = sorted((p.ebn0_db, p.fer) for p in points if p.frames)
    for (e0, f0), (e1, f1) in zip(pts, pts[1:]):
        if f0 >= target_fer >= f1 and f1 > 0:
            if f0 == f1:
                return e0
            t = (math.log10(f0) - math.log10(target_fer)) / (math.log10(f0) - math.log10(f1))
            return e0 + t * (e1 - e0)
    return float("nan")


@dataclass(frozen=True)
class GapRow:
    rate: Fraction
    required_db: float
    limit_db: float

    @property
    def gap_db(self) -> float:
        return self.required_db - self.limit_db


def gap_report(required: dict, limits: dict) -> list[GapRow]:
    """Gap between a required Eb/N0 (or threshold) and the Shannon limit, per rate."""
    req = {Fraction(r): float(v) for r, v in required.items()}
    lim = {Fraction(r): float(v) for r, v in limits.items()}
    if set(req) != set(lim):
        raise ValueError("required and limit tables cover different rates")
    return [GapRow(r, req[r], lim[r]) for r in sorted(req, reverse=True)]


__all__ = ["ChannelConfig", "StopRule", "PointResult", "GapRow", "clopper_pearson",
           "frame_generator", "draw_frame", "run_point", "sweep", "write_csv", "parse_grid",
           "required_ebn0", "gap_report", "code_rate"]
