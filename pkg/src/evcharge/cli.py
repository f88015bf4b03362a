"""Command-line entry point.

Every artifact starts with the tool version and the fully resolved
scenario: ``#``-prefixed lines in CSV files and a ``header`` record in
line-delimited JSON files.  Exit codes: 0 success, 1 domain error,
2 configuration error, 3 ledger verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections.abc import Iterable, Sequence
from pathlib import Path

from . import __version__
from .config import ConfigError, ScenarioConfig, echo, load_config, to_dict, with_overrides
from .domain import EVChargeError
from .engine import RunResult, run_monte_carlo
from .ledger import verify_records
from .metrics import (
    DEFAULT_Q_GRID,
    compare_solvers,
    compliance_curve,
    heat_map_rows,
    index_charging_time,
    index_distance,
    index_energy_price,
    mean_wait_steps,
    weight_sweep,
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_CONFIG = 2
EXIT_VERIFY = 3

log = logging.getLogger("evcharge")


class VerificationFailed(Exception):
    pass


# -- artifact writers ------------------------------------------------------------


def _header_lines(cfg: ScenarioConfig) -> list[str]:
    return [f"evcharge {__version__}"] + echo(cfg).splitlines()


def write_csv(path: Path, cfg: ScenarioConfig, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for line in _header_lines(cfg):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def write_jsonl(path: Path, cfg: ScenarioConfig, lines: Iterable[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"header": {"tool": "evcharge", "version": __version__, "config": to_dict(cfg)}}
    with path.open("w") as fh:
        fh.write(json.dumps(header, separators=(",", ":"), sort_keys=True) + "\n")
        for line in lines:
            fh.write(line + "\n")


def read_csv_rows(path: Path) -> list[dict[str, str]]:
    """Read a CSV artifact, skipping its ``#`` header."""
    with Path(path).open() as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def read_jsonl_records(path: Path) -> list[dict]:
    """Read a JSONL artifact, skipping its header record."""
    out = []
    with Path(path).open() as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if isinstance(rec, dict) and "header" in rec and len(rec) == 1:
                continue
            out.append(rec)
    return out


def _opt(x):
    return "" if x is None else x


VEHICLE_COLUMNS = [
    "run", "seed", "vehicle_id", "spawn_s", "x", "y", "node", "request_kwh",
    "alpha_time", "alpha_price", "alpha_dist", "assigned", "station", "defected",
    "wait_steps", "cost", "distance", "travel_time_s", "arrival_s",
    "charge_start_s", "charge_end_s", "energy_kwh", "res_kwh", "price_eur",
]  # fmt: skip


def _vehicle_rows(k: int, run: RunResult):
    for v in run.vehicles:
        yield [
            k, run.seed, v.vehicle_id, v.spawn, v.x, v.y, _opt(v.node), v.request_kwh, *v.weights,
            v.assigned, v.station, int(v.defected), v.wait_steps, v.cost, v.distance, v.travel_time_s,
            _opt(v.arrival), _opt(v.charge_start), _opt(v.charge_end), v.energy_kwh, v.res_kwh, v.price_eur,
        ]  # fmt: skip


def _timeseries_rows(k: int, run: RunResult):
    for j, t in enumerate(run.sample_times):
        for i, sid in enumerate(run.station_ids):
            yield [
                k, int(t), sid, int(run.queue_length[j, i]), float(run.queued_kwh[j, i]),
                float(run.renewable_kw[j, i]),
            ]  # fmt: skip


# -- commands ----------------------------------------------------------------------


def _load(args) -> ScenarioConfig:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config: no such file {str(path)!r}")
    cfg = load_config(path)
    if args.set:
        cfg = with_overrides(cfg, args.set)
    return cfg


def _outdir(args, cfg: ScenarioConfig) -> Path:
    return Path(args.output if args.output is not None else cfg.outputs.directory)


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _outdir(args, cfg)
    log.info("running %d Monte Carlo runs from seed %d", cfg.monte_carlo.n_runs, cfg.monte_carlo.base_seed)
    runs = run_monte_carlo(cfg, workers=args.workers)
    reports = set(cfg.outputs.reports)
    summary = []
    for k, r in enumerate(runs):
        done = r.completed
        summary.append([
            k, r.seed, len(r.vehicles), len(done), index_charging_time(r) if done else "",
            index_energy_price(r) if done else "", index_distance(r) if r.vehicles else "",
            mean_wait_steps(r) if r.vehicles else "",
        ])  # fmt: skip
    i_ct, i_ep, i_d = index_charging_time(runs), index_energy_price(runs), index_distance(runs)
    summary.append(["all", "", sum(len(r.vehicles) for r in runs), sum(len(r.completed) for r in runs),
                    i_ct, i_ep, i_d, mean_wait_steps(runs)])  # fmt: skip
    if "summary" in reports:
        write_csv(out / "summary.csv", cfg,
                  ["run", "seed", "vehicles", "completed", "i_ct_min", "i_ep_eur_per_kwh", "i_d", "wait_steps"],
                  summary)  # fmt: skip
        write_csv(out / "participation.csv", cfg, ["station", "x", "y", "participation", "kind", "generated_kwh"],
                  [(sid, x, y, p, kind, g) for (sid, x, y, p), kind, g
                   in zip(heat_map_rows(runs), runs[0].station_kinds, runs[0].generated_kwh)])  # fmt: skip
    if "vehicles" in reports:
        for k, r in enumerate(runs):
            write_csv(out / "vehicles" / f"run_{k:03d}.csv", cfg, VEHICLE_COLUMNS, _vehicle_rows(k, r))
    if "timeseries" in reports:
        write_csv(out / "timeseries.csv", cfg,
                  ["run", "time_s", "station", "queue_length", "queued_kwh", "renewable_kw"],
                  (row for k, r in enumerate(runs) for row in _timeseries_rows(k, r)))  # fmt: skip
    if "controller" in reports and cfg.compliance.mode == "closed_loop":
        write_csv(out / "controller.csv", cfg, ["run", "window", "time_s", "q_measured", "q_model", "bond"],
                  ([k, t.window, t.time, t.q_measured, t.q_true, t.bond]
                   for k, r in enumerate(runs) for t in r.controller_trace))  # fmt: skip
    if "ledger" in reports and cfg.ledger.enabled:
        for k, r in enumerate(runs):
            write_jsonl(out / "ledger" / f"run_{k:03d}.jsonl", cfg, r.ledger.dump_lines())
    print(f"i_ct {i_ct:.4f} min")
    print(f"i_ep {i_ep:.4f} EUR/kWh")
    print(f"i_d {i_d:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    log.info("sweeping weight grid with step %g", cfg.weights.sweep_step)
    rows = weight_sweep(cfg, workers=args.workers)
    write_csv(_outdir(args, cfg) / "sweep.csv", cfg,
              ["alpha_time", "alpha_price", "alpha_dist", "i_ct_min", "i_ep_eur_per_kwh", "i_d"],
              ([r.alpha_time, r.alpha_price, r.alpha_dist, r.i_ct, r.i_ep, r.i_d] for r in rows))  # fmt: skip
    best = min(rows, key=lambda r: r.i_ct)
    print(f"{len(rows)} weight tuples; lowest i_ct {best.i_ct:.4f} min at "
          f"({best.alpha_time:g}, {best.alpha_price:g}, {best.alpha_dist:g})")  # fmt: skip
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    rep = compare_solvers(cfg, workers=args.workers)
    out = _outdir(args, cfg)
    write_csv(out / "compare_summary.csv", cfg, ["metric", "value"], [
        ["centralized_i_ct_min", rep.centralized_ict],
        ["decentralized_i_ct_min", rep.decentralized_ict],
        ["ratio", rep.ratio],
        ["rmse_min", rep.rmse_min],
        ["mean_wait_steps", rep.mean_wait_steps],
        ["n_assignments", rep.n_assignments],
    ])  # fmt: skip
    write_csv(out / "compare_series.csv", cfg, ["time_s", "centralized_min", "decentralized_min"],
              zip(rep.sample_times.tolist(), rep.centralized_series.tolist(),
                  rep.decentralized_series.tolist()))  # fmt: skip
    print(f"centralized i_ct {rep.centralized_ict:.4f} min")
    print(f"decentralized i_ct {rep.decentralized_ict:.4f} min (ratio {rep.ratio:.4f})")
    print(f"series RMSE {rep.rmse_min:.4f} min; mean green-signal wait {rep.mean_wait_steps:.3f} steps")
    return EXIT_OK


def _q_grid(text: str | None) -> tuple[float, ...]:
    if text is None:
        return DEFAULT_Q_GRID
    try:
        grid = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"--q: cannot parse {text!r}") from None
    if not grid or any(not 0.0 <= q <= 1.0 for q in grid):
        raise ConfigError("--q: compliance levels must lie in [0, 1]")
    return grid


def cmd_compliance_curve(args) -> int:
    cfg = _load(args)
    cfg = with_overrides(cfg, {"monte_carlo.n_runs": args.runs})
    points = compliance_curve(cfg, _q_grid(args.q), workers=args.workers)
    write_csv(_outdir(args, cfg) / "compliance_curve.csv", cfg, ["q", "i_ct_min", "stderr_min", "n_runs"],
              ([p.q, p.i_ct, p.stderr, p.n_runs] for p in points))  # fmt: skip
    for p in points:
        print(f"Q={p.q:g}: i_ct {p.i_ct:.4f} +/- {p.stderr:.4f} min")
    return EXIT_OK


def cmd_validate_config(args) -> int:
    cfg = _load(args)
    sys.stdout.write(echo(cfg))
    return EXIT_OK


def cmd_replay_ledger(args) -> int:
    path = Path(args.dump)
    if not path.is_file():
        raise ConfigError(f"dump: no such file {str(path)!r}")
    try:
        records = read_jsonl_records(path)
    except json.JSONDecodeError as exc:
        raise VerificationFailed(f"malformed ledger dump: {exc}") from None
    problems = verify_records(records)
    if problems:
        for p in problems:
            print(f"VIOLATION {p}")
        raise VerificationFailed(f"{len(problems)} violation(s) in {len(records)} transactions")
    print(f"OK {len(records)} transactions: acyclic, conserving, settlements sound")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evcharge", description="EV charging-station assignment simulator")
    p.add_argument("--version", action="version", version=f"evcharge {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario(name: str, func, help_: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="scenario YAML file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-path override (repeatable)")
        sp.add_argument("-o", "--output", help="output directory (default: outputs.directory)")
        sp.add_argument("-j", "--workers", type=int, default=1, help="parallel Monte Carlo workers")
        sp.set_defaults(func=func)
        return sp

    scenario("run", cmd_run, "Monte Carlo run of one scenario")
    scenario("sweep", cmd_sweep, "evaluate every convex weight tuple on the grid")
    scenario("compare", cmd_compare, "centralized vs decentralized solver on shared seeds")
    cc = scenario("compliance-curve", cmd_compliance_curve, "mean charging time against compliance level")
    cc.add_argument("--q", help="comma-separated compliance levels (default 0,0.25,0.5,0.75,1)")
    cc.add_argument("--runs", type=int, default=50, help="Monte Carlo runs per level (default 50)")
    v = sub.add_parser("validate-config", help="validate a scenario and print it with defaults resolved")
    v.add_argument("config")
    v.add_argument("--set", action="append", metavar="KEY=VALUE")
    v.set_defaults(func=cmd_validate_config)
    r = sub.add_parser("replay-ledger", help="re-verify a ledger dump")
    r.add_argument("dump", help="ledger JSONL dump")
    r.set_defaults(func=cmd_replay_ledger)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VerificationFailed as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (EVChargeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
