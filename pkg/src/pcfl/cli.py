"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
Numbers on stdout carry 6 significant digits; files keep full precision.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from .baselines import SCHEMES, run_baseline
from .cafl import DEFAULT_EPSILON, solve_cafl
from .cofl import solve_cofl
from .experiment import ExperimentConfig, run_experiment
from .model import (
    DEFAULT_ALPHA,
    SCHEMA_VERSION,
    GameInstance,
    InstanceFormatError,
    InvalidParameterError,
    StrategyProfile,
)
from .oracle import verify_ne
from .popgen import PopulationSpec, generate
from .threshold import optimize_threshold

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _short(obj: Any) -> Any:
    if isinstance(obj, float):
        return float(f"{obj:.6g}")
    if isinstance(obj, dict):
        return {k: _short(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_short(v) for v in obj]
    return obj


def _emit(doc: dict[str, Any], out: str | None) -> None:
    if out:
        Path(out).write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps(_short(doc), indent=2))


def _profile_csv(inst: GameInstance, batchsizes, labels=None, digits: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "batchsize"] + (["type"] if labels else []))
    for pos, pid in enumerate(inst.ids):
        b = float(batchsizes[pos])
        row = [int(pid), f"{b:.6g}" if digits else repr(b)]
        if labels:
            row.append(labels[pos].value)
        w.writerow(row)
    return buf.getvalue()


def _load_instance(path: str, b_th: float | None = None) -> GameInstance:
    inst = GameInstance.load(path)
    if b_th is not None:
        inst = inst.with_threshold(b_th)
    return inst


def cmd_solve(args) -> int:
    inst = _load_instance(args.instance, args.b_th)
    if args.game == "cofl":
        if inst.b_th is not None:
            inst = inst.with_threshold(None)
        sol = solve_cofl(inst, trace=args.trace)
        doc = {"game": "cofl", **sol.result.to_dict(inst), "f_o_at_critical": sol.f_o_at_critical}
        if args.trace:
            doc["trace"] = [dict(zip(("rank", "f_o", "beta", "exceeds"), t)) for t in sol.trace]
    else:
        if inst.b_th is None:
            raise InvalidParameterError("the threshold game needs b_th (in the instance or via --b-th)")
        sol = solve_cafl(inst, args.epsilon, trace=args.trace)
        doc = {
            "game": "cafl",
            **sol.result.to_dict(inst),
            "b_th": sol.b_th,
            "removed_order": list(sol.removed_order),
            "equilibrium_property": sol.equilibrium_property,
            "search_epsilon": sol.search_epsilon,
        }
        if args.trace:
            doc["trace"] = list(sol.trace)
    if args.format == "csv":
        res = sol.result
        if args.out:
            Path(args.out).write_text(_profile_csv(inst, res.profile.batchsizes, res.type_labels))
        sys.stdout.write(_profile_csv(inst, res.profile.batchsizes, res.type_labels, digits=True))
    else:
        _emit(doc, args.out)
    return EXIT_OK


def cmd_optimize(args) -> int:
    inst = _load_instance(args.instance)
    sweep = optimize_threshold(inst, args.epsilon, jobs=args.jobs)
    columns = ("b_th", "total_utility", "global_batchsize", "contributors", "removed")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for e in sweep.entries:
                w.writerow([e.b_th, repr(e.total_utility), repr(e.global_batchsize), e.contributors, e.removed])
    best = sweep.best
    print(json.dumps(_short({
        "schema_version": SCHEMA_VERSION,
        "best_b_th": sweep.best_b_th,
        "total_utility": best.total_utility,
        "global_batchsize": best.global_batchsize,
        "contributors": best.contributors,
        "removed": best.removed,
        "thresholds": len(sweep.entries),
    }), indent=2))
    return EXIT_OK


def cmd_baseline(args) -> int:
    inst = _load_instance(args.instance).with_threshold(None)
    profile, tu = run_baseline(args.scheme, inst)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "scheme": args.scheme,
        "profile": {"batchsizes": profile.to_dict(inst), "global_batchsize": profile.global_batchsize},
        "total_utility": tu,
        "contributors": int((profile.batchsizes > 0).sum()),
    }
    _emit(doc, args.out)
    return EXIT_OK


def _read_profile(path: str, inst: GameInstance) -> tuple[StrategyProfile, list[int]]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError("profile", f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise InstanceFormatError("profile", "expected a JSON object")
    removed = [int(r) for r in doc.get("removed", [])]
    body = doc.get("profile", doc)
    values = body.get("batchsizes") if isinstance(body, dict) else None
    if not isinstance(values, dict):
        raise InstanceFormatError("profile.batchsizes", "expected an object mapping id to batchsize")
    return StrategyProfile.from_mapping(inst, values), removed


def cmd_verify(args) -> int:
    inst = _load_instance(args.instance, args.b_th)
    profile, removed = _read_profile(args.profile, inst)
    report = verify_ne(inst, profile, args.grid, args.margin, exclude=removed)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "passed": report.passed,
        "max_gain": report.max_gain,
        "worst_id": report.worst(),
        "excluded": removed,
        "gains": {str(int(i)): float(g) for i, g in zip(report.ids, report.gains)},
    }
    print(json.dumps(_short(doc), indent=2))
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.out_dir:
        cfg = ExperimentConfig(**{**cfg.__dict__, "out_dir": args.out_dir})
    result = run_experiment(cfg, args.jobs)
    cols = ("k", "hq_fraction", "scheme", "global_batchsize", "total_utility", "contributors", "b_th",
            "batchsize_growth")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(cols)
    for row in result.summary:
        w.writerow([f"{row[c]:.6g}" if isinstance(row[c], float) else row[c] for c in cols])
    return EXIT_OK


def cmd_generate(args) -> int:
    low, high = args.b_max_range
    spec = PopulationSpec(args.k, args.hq_fraction, (low, high), seed=args.seed, alpha=args.alpha)
    inst = generate(spec)
    if args.b_th is not None:
        inst = inst.with_threshold(args.b_th)
    doc = inst.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    else:
        print(json.dumps(doc, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    jobs = os.cpu_count() or 1
    p = _Parser(prog="pcfl", description="Equilibria of self-organised federated learning games.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="equilibrium of one game")
    s.add_argument("game", choices=("cofl", "cafl"), help="cofl: no threshold; cafl: threshold game")
    s.add_argument("--instance", required=True, help="instance JSON")
    s.add_argument("--b-th", type=float, help="threshold batchsize (overrides the instance)")
    s.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="bisection tolerance (cafl)")
    s.add_argument("--out", help="write full-precision output here")
    s.add_argument("--trace", action="store_true", help="include the search trace")
    s.add_argument("--format", choices=("json", "csv"), default="json", help="output format")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("optimize-threshold", help="sweep integer thresholds 1..floor(min b_max)")
    o.add_argument("--instance", required=True, help="instance JSON")
    o.add_argument("--out", help="CSV with one row per threshold")
    o.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="bisection tolerance")
    o.add_argument("--jobs", type=int, default=jobs, help="worker processes (default: logical cores)")
    o.set_defaults(func=cmd_optimize)

    b = sub.add_parser("baseline", help="comparison scheme")
    b.add_argument("--scheme", required=True, choices=sorted(SCHEMES), help="which scheme")
    b.add_argument("--instance", required=True, help="instance JSON")
    b.add_argument("--out", help="write full-precision output here")
    b.set_defaults(func=cmd_baseline)

    v = sub.add_parser("verify", help="grid check that a profile is an equilibrium")
    v.add_argument("--instance", required=True, help="instance JSON")
    v.add_argument("--profile", required=True, help="solve output or {\"batchsizes\": {id: value}}")
    v.add_argument("--b-th", type=float, help="threshold batchsize (overrides the instance)")
    v.add_argument("--grid", type=int, default=10_000, help="grid points per participant")
    v.add_argument("--margin", type=float, default=1e-6, help="allowed relative gain")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("experiment", help="seeded batch experiment from a JSON config")
    e.add_argument("--config", required=True, help="experiment config JSON")
    e.add_argument("--out-dir", help="override the config's out_dir")
    e.add_argument("--jobs", type=int, default=jobs, help="worker processes (default: logical cores)")
    e.set_defaults(func=cmd_experiment)

    g = sub.add_parser("generate", help="draw a seeded population")
    g.add_argument("--k", type=int, required=True, help="population size")
    g.add_argument("--hq-fraction", type=float, required=True, help="share of high-quality participants")
    g.add_argument("--seed", type=int, required=True, help="RNG seed")
    g.add_argument("--b-max-range", type=float, nargs=2, default=(30.0, 150.0), metavar=("LOW", "HIGH"))
    g.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="energy coefficient")
    g.add_argument("--b-th", type=float, help="store a threshold in the instance")
    g.add_argument("--out", help="write the instance here instead of stdout")
    g.set_defaults(func=cmd_generate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        build_parser().error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (InvalidParameterError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
    return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
