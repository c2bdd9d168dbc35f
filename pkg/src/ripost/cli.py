"""Command-line front end.

Subcommands: ingest, decompose, query, gen-workload, eval, sweep,
convergence-report. Exit status 0 on success, 2 for configuration or input
errors, 3 for ingestion errors, 4 for an internal budget violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .decomposer import ConvergenceReport, DecompositionConfig, decompose
from .errors import ConfigError, FormatError, RipostError
from .evaluation import (
    EvalReport,
    compute_r_rmse,
    compute_rmse,
    generate_workload,
    load_workload,
    save_workload,
)
from .mechanisms import NoiseMode
from .tensor import ColumnSpec, ingest_csv, load_domain_file, load_tensor, save_tensor
from .view import answer, load_view, make_view, save_view

log = logging.getLogger("ripost")

SWEEPABLE = {"epsilon", "alpha", "beta", "gamma", "theta1", "theta2", "series_k", "skip_k"}


def _load_config(args) -> DecompositionConfig:
    raw = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "noise_off", False):
        raw["noise_mode"] = NoiseMode.NOISE_OFF.value
    if getattr(args, "workers", None):
        raw["workers"] = args.workers
    return DecompositionConfig.from_dict(raw)


def _write_csv(path, header, rows) -> None:
    fh = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def _parse_bins(items) -> dict[str, int]:
    out = {}
    for item in items or []:
        col, _, n = item.partition("=")
        try:
            out[col] = int(n)
        except ValueError:
            raise ConfigError(f"--bins expects COLUMN=COUNT, got {item!r}") from None
    return out


def cmd_ingest(args) -> int:
    domain = load_domain_file(args.domain) if args.domain else {}
    for col, n in _parse_bins(args.bins).items():
        domain.setdefault(col, ColumnSpec(bins=n))
    t = ingest_csv(args.csv, args.group_by.split(","), domain=domain)
    save_tensor(t, args.out)
    if t.domain_inferred:
        log.warning("domain bounds were inferred from the data; this is not privacy-accounted")
    log.info("tensor %s with %d rows written to %s", t.domain.shape, t.total, args.out)
    return 0


def cmd_decompose(args) -> int:
    cfg = _load_config(args)
    unsafe = cfg.noise_mode is not NoiseMode.STANDARD
    if unsafe and not args.allow_unsafe:
        raise ConfigError("noise is disabled; refusing to write a view without --allow-unsafe")
    tensor = load_tensor(args.tensor)
    result = decompose(tensor, cfg)
    view = make_view(tensor, result.leaves, cfg.epsilon, cfg.noise_mode.value, cfg.digest())
    save_view(view, args.out)

    report = EvalReport(
        histogram=result.report.histogram(),
        mixed_fraction=result.report.mixed_fraction,
        leaf_count=len(result.leaves),
        budget_slack=result.ledger.slack_summary(),
    )
    if args.workload:
        report.rmse["ripost"] = compute_rmse(view, tensor, load_workload(args.workload))
    sidecar = report.to_json()
    sidecar["config"] = cfg.to_dict()
    # true per-leaf AE: server-side only, kept out of the view file
    sidecar["trace"] = result.report.to_json()
    report_path = args.report or f"{args.out}.report.json"
    Path(report_path).write_text(json.dumps(sidecar, indent=1), encoding="utf-8")
    log.info("%d leaves; view %s, report %s", len(result.leaves), args.out, report_path)
    return 0


def cmd_query(args) -> int:
    view = load_view(args.view, allow_unsafe=args.allow_unsafe)
    w = load_workload(args.workload)
    _write_csv(args.out, ["query", "answer"], [(i, repr(answer(view, q))) for i, q in enumerate(w.queries)])
    return 0


def cmd_gen_workload(args) -> int:
    if args.tensor:
        domain = load_tensor(args.tensor).domain
    else:
        domain = load_view(args.view, allow_unsafe=True).domain
    save_workload(generate_workload(domain, args.count, args.seed), args.out)
    return 0


def cmd_eval(args) -> int:
    tensor = load_tensor(args.tensor)
    w = load_workload(args.workload)
    rows = []
    ref_rmse = None
    if args.reference:
        ref_rmse = compute_rmse(load_view(args.reference, args.allow_unsafe), tensor, w)
    for path in args.view:
        rmse = compute_rmse(load_view(path, args.allow_unsafe), tensor, w)
        r = "" if ref_rmse is None else repr(compute_r_rmse(rmse, ref_rmse))
        rows.append((path, repr(rmse), r))
    _write_csv(args.out, ["view", "rmse", "r_rmse"], rows)
    return 0


def _sweep_one(job):
    tensor, queries, base, param, value, seed = job
    cfg = DecompositionConfig.from_dict({**base, param: value, "seed": seed})
    res = decompose(tensor, cfg)
    view = make_view(tensor, res.leaves, cfg.epsilon, cfg.noise_mode.value)
    return param, value, seed, compute_rmse(view, tensor, queries), len(res.leaves)


def _grid_value(param: str, text: str):
    try:
        return int(text) if param == "skip_k" else float(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {param}") from None


def cmd_sweep(args) -> int:
    if args.param not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {args.param!r}; choose from {sorted(SWEEPABLE)}")
    base = _load_config(args)
    values = [_grid_value(args.param, v) for v in args.values.split(",")]
    base_dict = base.to_dict()
    base_dict.pop("workers")
    for v in values:
        DecompositionConfig.from_dict({**base_dict, args.param: v})  # fail fast, exit 2
    tensor = load_tensor(args.tensor)
    queries = load_workload(args.workload).queries
    jobs = [
        (tensor, queries, base_dict, args.param, v, base.seed + rep)
        for v in values
        for rep in range(args.reps)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    _write_csv(
        args.out,
        ["param", "value", "seed", "rmse", "leaf_count"],
        [(p, v, s, repr(r), n) for p, v, s, r, n in rows],
    )
    return 0


def cmd_convergence_report(args) -> int:
    try:
        doc = json.loads(Path(args.trace).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read {args.trace}: {exc}") from exc
    if not isinstance(doc, dict) or "trace" not in doc:
        raise FormatError(
            f"{args.trace} has no decomposition trace. The report needs true per-leaf AE, "
            "which only exists in the server-side report written by `decompose`, not in a view."
        )
    report = ConvergenceReport.from_json(doc["trace"])
    _write_csv(args.out, ["depth", "count_ae_zero", "count_ae_positive"], report.histogram())
    print(f"mixed_fraction={report.mixed_fraction!r}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ripost", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="group-by COUNT a CSV file into a tensor")
    s.add_argument("--csv", required=True)
    s.add_argument("--group-by", required=True, help="comma-separated column names")
    s.add_argument("--bins", action="append", metavar="COL=N", help="equi-width bins for a numeric column")
    s.add_argument("--domain", help="JSON file: column -> {start, end} or {bins}")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    def config_flags(s):
        s.add_argument("--config")
        s.add_argument("--seed", type=int)
        s.add_argument("--noise-off", action="store_true", help="testing only: disables all noise")

    s = sub.add_parser("decompose", help="build a private view from a tensor")
    s.add_argument("--tensor", required=True)
    config_flags(s)
    s.add_argument("--out", required=True)
    s.add_argument("--report", help="sidecar report path (default: OUT.report.json)")
    s.add_argument("--workload", help="optional workload for an RMSE entry in the report")
    s.add_argument("--workers", type=int)
    s.add_argument("--allow-unsafe", action="store_true")
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("query", help="answer a workload against a view")
    s.add_argument("--view", required=True)
    s.add_argument("--workload", required=True)
    s.add_argument("--out")
    s.add_argument("--allow-unsafe", action="store_true")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("gen-workload", help="generate random range queries")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--tensor")
    g.add_argument("--view")
    s.add_argument("--count", type=int, default=3000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_workload)

    s = sub.add_parser("eval", help="RMSE of views against the exact tensor")
    s.add_argument("--tensor", required=True)
    s.add_argument("--workload", required=True)
    s.add_argument("--view", action="append", required=True)
    s.add_argument("--reference", help="view whose RMSE is the R-RMSE denominator")
    s.add_argument("--out")
    s.add_argument("--allow-unsafe", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="vary one hyperparameter over seeds")
    s.add_argument("--tensor", required=True)
    s.add_argument("--workload", required=True)
    config_flags(s)
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma-separated grid")
    s.add_argument("--reps", type=int, default=20)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("convergence-report", help="per-depth leaf counts split by AE > 0")
    s.add_argument("--trace", required=True, help="report sidecar written by decompose")
    s.add_argument("--out")
    s.set_defaults(func=cmd_convergence_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "sweep" and args.reps < 1:
        print("error: --reps must be positive", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except RipostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
