"""Command-line entry point: ``ulflex <subcommand> [options]``.

Payloads go to stdout as JSON (or CSV where ``--format csv`` applies), logs
go to stderr. Exit status: 0 on success (an infeasible verdict is a
success), 1 on domain errors (with an error JSON on stdout), 2 on usage
errors. Set ``FLEX_LOG=DEBUG|INFO|WARNING`` for verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

from . import bench, disagg, flexcore, ingest, polytope
from .errors import FlexError, Infeasible
from .flexcore import EVParams, ULFlex, Window

log = logging.getLogger("ulflex")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _read_json(path: str):
    if path == "-":
        text = sys.stdin.read()
    else:
        text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FlexError(f"{path}: invalid JSON ({exc})") from None


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _window(args) -> Window:
    if args.window_T is None:
        raise UsageError("--window-T is required for EV parameter input")
    return Window(args.window_T, args.dt_hours)


def _timestamp(text: str) -> datetime:
    try:
        return ingest.parse_timestamp(text)
    except ValueError:
        raise UsageError(f"bad ISO-8601 timestamp {text!r}") from None


def _window_spec(args) -> ingest.WindowSpec:
    if args.window_start is None or args.window_end is None or args.window_T is None:
        raise UsageError("--window-start, --window-end and --window-T are required")
    return ingest.WindowSpec(
        _timestamp(args.window_start), _timestamp(args.window_end), args.window_T
    )


def _as_uls(doc, args) -> list[ULFlex]:
    """Interpret a JSON document as one or more UL sets."""
    if isinstance(doc, list):
        return [ul for item in doc for ul in _as_uls(item, args)]
    if "u_kwh" in doc:
        return [ULFlex.from_dict(doc)]
    if "evs" in doc:
        return disagg.Fleet.from_dict(doc).uls
    if "p_min_kw" in doc:
        return [flexcore.ul_from_ev(EVParams.from_dict(doc), _window(args))]
    raise FlexError("document is neither a UL set, EV parameters nor a fleet")


def _load_ul(path: str, args) -> ULFlex:
    uls = _as_uls(_read_json(path), args)
    if len(uls) != 1:
        raise FlexError(f"{path}: expected a single UL set, found {len(uls)}")
    return uls[0]


# ------------------------------------------------------------ subcommands


def cmd_ul_from_ev(args):
    out = []
    for path in args.inputs:
        doc = _read_json(path)
        if isinstance(doc, dict) and "evs" in doc:
            out += [ul.to_dict() for ul in disagg.Fleet.from_dict(doc).uls]
            continue
        items = doc if isinstance(doc, list) else [doc]
        w = _window(args)
        out += [flexcore.ul_from_ev(EVParams.from_dict(d), w).to_dict() for d in items]
    return out[0] if len(out) == 1 else out


def cmd_validate(args):
    ul = _load_ul(args.ul, args)
    return flexcore.validate_ul(ul, tol=args.tolerance).to_dict()


def cmd_aggregate(args):
    uls = [ul for path in args.inputs for ul in _as_uls(_read_json(path), args)]
    w = _window(args) if not uls else None
    return flexcore.minkowski_sum(uls, window=w, tol=args.tolerance).to_dict()


def cmd_check(args):
    doc = _read_json(args.ul)
    signal = _floats(args.signal)
    if isinstance(doc, dict) and "rows" in doc:
        h = polytope.HRep.from_dict(doc)
        slack = polytope.hrep_slack(h, signal)
        bad = np.flatnonzero(slack < -args.tolerance)
        return {
            "feasible": bool(bad.size == 0),
            "violations": [
                {"kind": str(h.sign[i]), "k": int(h.card[i]), "bitmask": int(h.bitmask[i]),
                 "slack": float(slack[i])}
                for i in bad
            ],
        }
    ul = _load_ul(args.ul, args) if not isinstance(doc, dict) else _as_uls(doc, args)[0]
    return flexcore.check_feasible_ordered(signal, ul, tol=args.tolerance).to_dict()


def cmd_hrep(args):
    h = polytope.build_hrep(_load_ul(args.ul, args), cap_T=args.cap_T)
    return h.to_csv() if args.format == "csv" else h.to_dict()


def cmd_vertices(args):
    vs = polytope.canonical_vertices(_load_ul(args.ul, args))
    out = {"canonical": vs.to_list(), "expanded_count": vs.expanded_count}
    if args.expand:
        out["vertices"] = [
            v.tolist()
            for v in polytope.enumerate_permutations(vs, limit=args.limit, exhaustive=True)
        ]
    return out


def cmd_support(args):
    ul = _load_ul(args.ul, args)
    return {"support": polytope.support(ul, _floats(args.direction))}


def _load_fleet(path: str, args) -> disagg.Fleet:
    doc = _read_json(path)
    if isinstance(doc, dict) and "evs" in doc:
        return disagg.Fleet.from_dict(doc)
    items = doc if isinstance(doc, list) else [doc]
    return disagg.Fleet(tuple(EVParams.from_dict(d) for d in items), _window(args))


def cmd_disaggregate(args):
    fleet = _load_fleet(args.fleet, args)
    try:
        parts = disagg.disaggregate(_floats(args.signal), fleet, solver=args.solver,
                                    tol=args.tolerance)
    except Infeasible as exc:
        return {"feasible": False, "violations": [v._asdict() for v in exc.violations]}
    return {"feasible": True, "schedules_kw": [p.tolist() for p in parts]}


def cmd_max_capacity(args):
    fleet = _load_fleet(args.fleet, args)
    out = {"N": len(fleet), "T": fleet.window.T}
    if args.method in ("direct", "both"):
        tau, sched = bench.max_capacity_direct(fleet, args.solver, args.prefix_bounds)
        out["tau_direct_kw"] = tau
        if args.schedules:
            out["schedules_kw"] = sched.tolist()
    if args.method in ("ul", "both"):
        out["tau_ul_kw"] = bench.max_capacity_ul(fleet, args.solver, args.cap_T)
    return out


def cmd_ingest(args):
    w = _window_spec(args)
    txs, rejects = ingest.load_transactions(args.csv)
    evs, discarded = ingest.project_all(txs, w)
    if args.rejects:
        Path(args.rejects).write_text(json.dumps(rejects, indent=2))
    log.info("%d sessions read, %d rejected, %d discarded", len(txs), len(rejects), discarded)
    doc = ingest.fleet_document(evs, w)
    doc["summary"] = {"read": len(txs), "rejected": len(rejects), "discarded": discarded,
                      "kept": len(evs)}
    return doc


def cmd_synth(args):
    w = _window_spec(args)
    txs = ingest.synth_fleet(args.n, w, profile=args.profile, seed=args.seed)
    if args.format == "csv":
        return ingest.transactions_to_csv(txs)
    evs, _ = ingest.project_all(txs, w)
    return ingest.fleet_document(evs, w)


def cmd_bench(args):
    cfg = bench.BenchConfig(
        N=_ints(args.N),
        T=_ints(args.T),
        window_hours=args.window_hours,
        method=args.method,
        seed=args.seed,
        solver=args.solver,
        repetitions=args.repetitions,
        warmup=not args.no_warmup,
        cap_T=args.cap_T,
        measure_rss=args.measure_rss,
        parallel=args.parallel,
    )
    records, report = bench.run_benchmark(cfg)
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_text(bench.records_to_csv(records))
        (out / "report.json").write_text(bench.report_to_json(report))
        log.info("wrote %s and %s", out / "results.csv", out / "report.json")
    if args.format == "csv":
        return bench.records_to_csv(records)
    return json.loads(bench.report_to_json(report))


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--window-T", type=int, default=None, help="intervals in the window")
    common.add_argument("--dt-hours", type=float, default=1.0, help="interval length (h)")
    common.add_argument("--tolerance", type=float, default=flexcore.DEFAULT_TOL,
                        help="absolute tolerance on energies/powers")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--cap-T", type=int, default=polytope.DEFAULT_CAP_T,
                        help="largest T allowed for the H-representation")
    common.add_argument("--output", help="write the payload to this file instead of stdout")
    common.add_argument("--solver", default="auto", help="LP solver: auto, simplex or highs")

    parser = argparse.ArgumentParser(
        prog="ulflex", description="Exact EV fleet flexibility aggregation (UL-flexibility)."
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=fn)
        return p

    p = add("ul-from-ev", cmd_ul_from_ev, "UL parameters of EVs (EVParams or fleet JSON)")
    p.add_argument("inputs", nargs="+", metavar="EV.json")

    p = add("validate", cmd_validate, "check the structural properties of a UL set")
    p.add_argument("ul", nargs="?", default="-", metavar="UL.json")

    p = add("aggregate", cmd_aggregate, "Minkowski sum of UL sets / EVs / fleets")
    p.add_argument("inputs", nargs="*", metavar="FILE.json")

    p = add("check", cmd_check, "feasibility of a signal against a UL set or H-rep")
    p.add_argument("--signal", required=True, help="comma-separated powers (kW)")
    p.add_argument("--ul", default="-", help="UL, EV or H-rep JSON (default stdin)")

    p = add("hrep", cmd_hrep, "H-representation of a UL set")
    p.add_argument("--ul", default="-")

    p = add("vertices", cmd_vertices, "canonical vertices (optionally all permutations)")
    p.add_argument("--ul", default="-")
    p.add_argument("--expand", action="store_true", help="list every vertex")
    p.add_argument("--limit", type=int, default=100_000)

    p = add("support", cmd_support, "support function value in a direction")
    p.add_argument("--ul", default="-")
    p.add_argument("--direction", required=True, help="comma-separated direction")

    p = add("disaggregate", cmd_disaggregate, "split an aggregate signal over a fleet")
    p.add_argument("--signal", required=True)
    p.add_argument("--fleet", default="-")

    p = add("max-capacity", cmd_max_capacity, "largest constant power floor of a fleet")
    p.add_argument("--fleet", default="-")
    p.add_argument("--method", choices=("direct", "ul", "both"), default="both")
    p.add_argument("--prefix-bounds", action="store_true",
                   help="direct model: cap every cumulative prefix by e_max")
    p.add_argument("--schedules", action="store_true", help="include per-EV schedules")

    p = add("ingest", cmd_ingest, "project a session CSV onto a window (fleet JSON)")
    p.add_argument("csv")
    p.add_argument("--window-start")
    p.add_argument("--window-end")
    p.add_argument("--rejects", help="write the rejects report JSON here")

    p = add("synth", cmd_synth, "synthetic sessions (CSV) or projected fleet (JSON)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--window-start")
    p.add_argument("--window-end")
    p.add_argument("--profile", choices=("default", "min-power", "paper-example"),
                   default="default")

    p = add("bench", cmd_bench, "direct vs UL max-capacity benchmark")
    p.add_argument("--N", default="100,1000,10000,100000")
    p.add_argument("--T", default="1,2,4")
    p.add_argument("--method", choices=("direct", "ul", "both"), default="both")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--window-hours", type=float, default=1.0)
    p.add_argument("--no-warmup", action="store_true")
    p.add_argument("--measure-rss", action="store_true")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--output-dir")
    p.set_defaults(solver="highs")
    return parser


def _emit(payload, args) -> None:
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2)
    if not text.endswith("\n"):
        text += "\n"
    if args.output:
        Path(args.output).write_text(text)
        log.info("wrote %s", args.output)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("FLEX_LOG", "WARNING").upper(),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        payload = args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits 2
    except (FlexError, FileNotFoundError, ValueError, KeyError) as exc:
        if isinstance(exc, FlexError):
            err = exc.to_dict()
        elif isinstance(exc, KeyError):
            err = {"error": "SchemaMismatch", "message": f"missing field {exc}"}
        else:
            err = {"error": type(exc).__name__, "message": str(exc)}
        sys.stdout.write(json.dumps(err) + "\n")
        log.error("%s", err.get("message"))
        return 1
    _emit(payload, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
