"""Command-line entry point ``pbrl``.

Exit codes: 0 success, 2 invalid input or failed validation, 3 a regenerated
table differs from the printed one by more than the tolerance (``--strict``).
Every file written by a subcommand gets a ``<file>.manifest.json`` sidecar
holding the package version, the subcommand, its arguments and the SHA-256 of
each input file.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from pbrl import __version__, channel_sim, codec, optimizer, rca, tables
from pbrl.lifting import (AceSchedule, LiftingError, LiftStats, QcMatrix, cpeg_lift, direct_lift,
                          girth_scan, prelift, read_alist, write_alist)
from pbrl.protograph import PbrlFamily, ProtographError, Protomatrix, assemble, validate

log = logging.getLogger("pbrl")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DELTA = 3


class CliError(Exception):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, args: argparse.Namespace, inputs=()) -> Path:
    """Sidecar describing how ``out`` was produced (no timestamps, so runs compare equal)."""
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
              if k not in ("func",)}
    doc = {"tool": "pbrl", "version": __version__, "command": args.command, "arguments": params,
           "inputs": {str(p): _sha256(p) for p in inputs if p is not None}}
    path = Path(f"{out}.manifest.json")
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _emit_csv(rows: list[dict], columns, out, args, inputs=()) -> None:
    if out is None:
        writer = csv.DictWriter(sys.stdout, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
        return
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    write_manifest(out, args, inputs)


def _load_family(path) -> PbrlFamily:
    return PbrlFamily.load(path)


def _parse_ints(text: str | None) -> tuple[int, ...]:
    if not text:
        return ()
    return tuple(int(t) for t in text.replace(" ", "").split(",") if t)


# ---------------------------------------------------------------------------
# subcommands


def cmd_threshold(args) -> int:
    if args.family:
        fam = _load_family(args.family)
        ms = range(fam.num_lt + 1) if args.m is None or args.all_rates else [args.m]
        items = [(m, assemble(fam, m), fam.punctured) for m in ms]
        source = args.family
    else:
        pm = Protomatrix.from_text(Path(args.pm).read_text())
        items = [(None, pm, frozenset(_parse_ints(args.punctured)))]
        source = args.pm
    rows = []
    for m, proto, punct in items:
        res = rca.threshold(proto, punct, n_iter=args.iters, stop=args.stop,
                            precision_db=args.precision)
        limit = rca.shannon_limit_ebn0(res.rate)
        rows.append({"m": "" if m is None else m, "rate": str(res.rate),
                     "threshold_db": f"{res.ebn0_db:.4f}", "shannon_db": f"{limit:.4f}",
                     "gap_db": f"{res.ebn0_db - limit:.4f}"})
    _emit_csv(rows, ("m", "rate", "threshold_db", "shannon_db", "gap_db"), args.out, args, [source])
    return EXIT_OK


def cmd_optimize(args) -> int:
    precode = Protomatrix.from_text(Path(args.precode).read_text())
    seed_rows = None
    if args.seed_rows:
        seed_rows = [list(_parse_ints(r)) for r in args.seed_rows.split(";")]
    policy = optimizer.ExtensionPolicy(max_entry=args.max_entry, punct_rule=args.policy,
                                       target_rows=args.rows, candidate_cap=args.candidate_cap,
                                       punct_max=args.punct_max,
                                       schedule=_parse_ints(args.schedule), seed=args.seed,
                                       threads=args.threads)
    fam, trace = optimizer.build_family(precode, _parse_ints(args.punctured), policy,
                                        name=args.name, seed_rows=seed_rows)
    fam.save(args.out)
    write_manifest(args.out, args, [args.precode])
    if args.trace:
        trace.save(args.trace)
        write_manifest(args.trace, args, [args.precode])
    for step in trace.steps:
        print(f"{step.rate}\t{step.best_threshold_db:.4f}\t{step.best_row}")
    return EXIT_OK


def cmd_lift(args) -> int:
    stats = LiftStats()
    if args.ace == "published":
        schedule = AceSchedule(girth_floor=args.girth_floor)
    elif args.ace == "published+fallback":
        schedule = AceSchedule.with_fallback(args.girth_floor)
    else:
        schedule = AceSchedule.parse(args.ace or "", args.girth_floor)
    inputs = [args.family]
    if args.prelifted:
        pre = QcMatrix.load(args.prelifted)
        inputs.append(args.prelifted)
    else:
        fam = _load_family(args.family)
        proto = assemble(fam, fam.num_lt if args.m is None else args.m)
        if args.z1:
            pre = prelift(proto, args.z1, seed=args.seed)
        else:
            qc = direct_lift(proto, args.z, schedule, args.seed, args.max_restarts, stats)
            pre = None
    if args.prelifted or args.z1:
        qc = cpeg_lift(pre, args.z, schedule, args.seed, args.max_restarts, stats,
                       precode_rows=args.precode_rows, precode_girth=args.precode_girth)
    qc.save(args.out)
    write_manifest(args.out, args, inputs)
    print(f"restarts {stats.restarts}; levels {json.dumps(stats.level_use, sort_keys=True)}")
    return EXIT_OK


def _load_graph(args):
    if args.code.endswith(".alist"):
        return read_alist(Path(args.code).read_text())
    return QcMatrix.load(args.code)


def cmd_girth(args) -> int:
    graph = _load_graph(args)
    rate_cols = ()
    if args.family and isinstance(graph, QcMatrix):
        fam = _load_family(args.family)
        g = codec.lift_group(graph, fam)
        n_lt = min(graph.cols // g - fam.n_precode, fam.num_lt)
        rate_cols = tuple((g * (fam.r_precode + m), g * (fam.n_precode + m))
                          for m in range(n_lt + 1))
    rep = girth_scan(graph, max_len=args.max_len, count=not args.no_count, rate_cols=rate_cols)
    print(f"girth\t{rep.girth_text()}")
    for length, count in sorted(rep.cycle_counts.items()):
        print(f"cycles_{length}\t{count}")
    for m, (key, val) in enumerate(sorted(rep.per_rate.items())):
        print(f"m={m}\tgirth {val if val else 'inf'}")
    return EXIT_OK


def _code_and_plan(args):
    fam = _load_family(args.family)
    qc = QcMatrix.load(args.code)
    code = codec.expand(qc, fam)
    return fam, code, codec.build_encoder(code)


def cmd_encode(args) -> int:
    fam, code, plan = _code_and_plan(args)
    if args.info:
        info = codec.read_bits(args.info)
    else:
        info = np.array([channel_sim.draw_frame(args.seed, f, plan.k, 0)[0]
                         for f in range(args.random)], dtype=np.uint8)
    cw = codec.encode(plan, info)
    out = cw if args.full else codec.select_transmit(cw, code, args.m)
    codec.write_bits(args.out, out)
    write_manifest(args.out, args, [args.code, args.family, args.info])
    print(f"k {plan.k}; frames {len(info)}; bits per frame {out.shape[1]}")
    return EXIT_OK


def cmd_decode(args) -> int:
    fam, code, plan = _code_and_plan(args)
    llr = codec.read_llr(args.llr, code.n_tx(args.m))
    res = codec.decode(code, llr, args.m, args.schedule, args.max_iter)
    bits = res.hard if args.full else res.hard[:, plan.info_positions]
    codec.write_bits(args.out, bits)
    write_manifest(args.out, args, [args.code, args.family, args.llr])
    print(f"frames {len(llr)}; converged {int(res.converged.sum())}; "
          f"mean iterations {res.iterations.mean():.2f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    fam, code, plan = _code_and_plan(args)
    ms = _parse_ints(args.m)
    grid = channel_sim.parse_grid(args.ebn0)
    stop = channel_sim.StopRule(args.min_errors, int(float(args.max_frames)))
    points = channel_sim.sweep(code, plan, ms, grid, stop, args.seed, args.schedule,
                               args.max_iter, args.threads)
    channel_sim.write_csv(args.out, points)
    write_manifest(args.out, args, [args.code, args.family])
    for p in points:
        print(f"m={p.m}\tEb/N0 {p.ebn0_db:.3f}\tFER {p.fer:.3e} ({p.frame_errors}/{p.frames})")
    return EXIT_OK


def cmd_export(args) -> int:
    inputs = [args.family, args.code]
    if args.format == "pm":
        if not args.family:
            raise CliError("--format pm needs --family")
        fam = _load_family(args.family)
        m = fam.num_lt if args.m is None else args.m
        text = assemble(fam, m).to_text()
    elif args.format == "qc":
        if not args.code:
            raise CliError("--format qc needs --code")
        qc = QcMatrix.load(args.code)
        if args.family and args.m is not None:
            fam = _load_family(args.family)
            g = codec.lift_group(qc, fam)
            qc = qc.submatrix(g * (fam.r_precode + args.m), g * (fam.n_precode + args.m))
        text = qc.to_text()
    else:
        if not args.code:
            raise CliError("--format alist needs --code")
        qc = QcMatrix.load(args.code)
        if args.family:
            fam = _load_family(args.family)
            text = write_alist(codec.expand(qc, fam, args.m).h)
        else:
            text = write_alist(qc.expand())
    Path(args.out).write_text(text)
    write_manifest(args.out, args, inputs)
    return EXIT_OK


def cmd_tables(args) -> int:
    which = tables.TABLE_IDS if args.which == "all" else (args.which,)
    required = {}
    if args.sweep:
        pts = _read_sweep(args.sweep)
        by_rate: dict[Fraction, list] = {}
        for p in pts:
            by_rate.setdefault(p.rate, []).append(p)
        required = {r: channel_sim.required_ebn0(v, args.target_fer) for r, v in by_rate.items()}
    rows = []
    exceeded = False
    for w in which:
        for row in tables.regenerate(w, required if w in tables.SIMULATION_TABLES else None):
            if w not in tables.SIMULATION_TABLES and row.within(args.tol) is False:
                exceeded = True
            if abs(row.shannon_delta_db) > tables.SHANNON_TOL_DB:
                exceeded = True
            rows.append(row.as_dict())
    _emit_csv(rows, tables.CSV_COLUMNS, args.out, args, [args.sweep])
    if args.strict and exceeded:
        log.error("reproduction delta exceeds tolerance")
        return EXIT_DELTA
    return EXIT_OK


def _read_sweep(path) -> list[channel_sim.PointResult]:
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.append(channel_sim.PointResult(Fraction(r["rate"]), float(r["ebn0_db"]), int(r["m"]),
                                               int(r["frames"]), int(r["frame_errors"]),
                                               int(r["bit_errors"]), int(r["undetected"]), 0, 1,
                                               int(r["seed"]), r["schedule"]))
    return out


def cmd_validate(args) -> int:
    fam = _load_family(args.family)
    report = validate(fam)
    for v in report.violations():
        print(v)
    if args.code:
        codec.expand(QcMatrix.load(args.code), fam)
    return EXIT_OK if report.ok else EXIT_INVALID


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pbrl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pbrl {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("threshold", help="RCA decoding thresholds")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--family", help="PBRL family file (.pbrl)")
    src.add_argument("--pm", help="protomatrix file (.pm)")
    s.add_argument("--punctured", help="punctured columns for --pm, comma separated")
    s.add_argument("--m", type=int, help="single rate point (default: every rate)")
    s.add_argument("--all-rates", action="store_true", help="every rate point (the default)")
    s.add_argument("--rca-iters", "--iters", dest="iters", type=int, default=rca.DEFAULT_ITERS)
    s.add_argument("--rca-stop", dest="stop", type=float, default=rca.DEFAULT_STOP)
    s.add_argument("--precision-db", "--precision", dest="precision", type=float,
                   default=rca.DEFAULT_PRECISION_DB)
    s.add_argument("--out")
    s.set_defaults(func=cmd_threshold)

    s = sub.add_parser("optimize", help="greedy LT-row extension")
    s.add_argument("--precode", required=True, help="precode protomatrix (.pm)")
    s.add_argument("--punctured", default="")
    s.add_argument("--rows", type=int, required=True, help="total number of LT rows")
    s.add_argument("--punct-rule", "--policy", dest="policy", default="forbid-parallel",
                   choices=optimizer.PUNCT_RULES)
    s.add_argument("--max-entry", type=int, default=1, choices=(1, 2))
    s.add_argument("--punct-max", type=int, default=2)
    s.add_argument("--schedule", help="punctured-column entries per row for per-row-schedule")
    s.add_argument("--seed-rows", help="fixed leading rows, e.g. '2,0,0,0,0,0,0,0;1,1,1,1,1,1,1,1'")
    s.add_argument("--candidate-cap", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--name", default="")
    s.add_argument("--out", required=True)
    s.add_argument("--trace")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("lift", help="circulant lifting (direct or two-stage)")
    s.add_argument("--family", required=True)
    s.add_argument("--z2", "--z", dest="z", type=int, required=True,
                   help="circulant size of the final stage")
    s.add_argument("--m", type=int, help="lift only the first m LT rows (default: all)")
    s.add_argument("--z1", type=int, help="first-stage lifting factor for a two-stage lift")
    s.add_argument("--prelifted", help="existing first-stage QC matrix to lift further")
    s.add_argument("--ace", help="'published', 'published+fallback' or 'd:eta@budget,...' "
                   "(default: girth only)")
    s.add_argument("--girth", "--girth-floor", dest="girth_floor", type=int, default=8)
    s.add_argument("--precode-rows", type=int, default=0)
    s.add_argument("--precode-girth", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-restarts", type=int, default=50)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_lift)

    s = sub.add_parser("girth", help="girth and short-cycle counts")
    s.add_argument("--code", required=True, help=".qc or .alist file")
    s.add_argument("--family", help="family file for per-rate girth")
    s.add_argument("--max-len", type=int, default=8)
    s.add_argument("--no-count", action="store_true", help="girth only, skip cycle counts")
    s.set_defaults(func=cmd_girth)

    for name, func in (("encode", cmd_encode), ("decode", cmd_decode)):
        s = sub.add_parser(name, help=f"{name} frames")
        s.add_argument("--code", required=True)
        s.add_argument("--family", required=True)
        s.add_argument("--m", type=int, required=True)
        s.add_argument("--full", action="store_true", help="every variable, not just the sent bits")
        s.add_argument("--out", required=True)
        if name == "encode":
            g = s.add_mutually_exclusive_group(required=True)
            g.add_argument("--info", help="text file, one frame of 0/1 per line")
            g.add_argument("--random", type=int, help="number of random frames")
            s.add_argument("--seed", type=int, default=0)
        else:
            s.add_argument("--llr", required=True, help="little-endian float32 LLRs")
            s.add_argument("--schedule", default="flooding", choices=codec.SCHEDULES)
            s.add_argument("--max-iter", type=int, default=100)
        s.set_defaults(func=func)

    s = sub.add_parser("simulate", help="BI-AWGN FER/BER sweep")
    s.add_argument("--code", required=True)
    s.add_argument("--family", required=True)
    s.add_argument("--m", required=True, help="rate points, comma separated")
    s.add_argument("--ebn0", required=True, help="'start:step:stop' or comma list, dB")
    s.add_argument("--min-errors", type=int, default=100)
    s.add_argument("--max-frames", default="1e7")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--schedule", default="flooding", choices=codec.SCHEDULES)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("export", help="convert codes and protomatrices")
    s.add_argument("--format", required=True, choices=("alist", "qc", "pm"))
    s.add_argument("--code")
    s.add_argument("--family")
    s.add_argument("--m", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("tables", help="regenerate the published tables")
    s.add_argument("which", choices=tables.TABLE_IDS + ("all",))
    s.add_argument("--strict", action="store_true")
    s.add_argument("--tol", type=float, default=tables.DEFAULT_TOL_DB)
    s.add_argument("--sweep", help="simulate CSV supplying required Eb/N0 for tables V/VI")
    s.add_argument("--target-fer", type=float, default=1e-5)
    s.add_argument("--out")
    s.set_defaults(func=cmd_tables)

    s = sub.add_parser("validate", help="check a family (and optionally a code lifting it)")
    s.add_argument("--family", required=True)
    s.add_argument("--code")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("fixture", help="print the path of a bundled fixture")
    s.add_argument("name", choices=tables.FIXTURE_NAMES)
    s.add_argument("--suffix", default=".pbrl", choices=(".pbrl", ".qc", ".pm"))
    s.set_defaults(func=lambda a: print(tables.fixture_path(a.name, a.suffix)) or EXIT_OK)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ProtographError, codec.CodecError, LiftingError, optimizer.OptimizerError,
            rca.RcaError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"pbrl: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
