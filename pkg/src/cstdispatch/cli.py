"""Command-line front end.

Every command writes into a fresh timestamped directory below the configured
output directory and leaves a ``manifest.json`` there echoing the resolved
configuration, the command line and all seeds.

Exit codes: 0 success, 1 solver failure or limit, 2 usage or configuration
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from .bench import CATEGORIES, PK, EvaluationReport, evaluate_plan, sensitivity_csv, sensitivity_h2, sensitivity_svg
from .config import BUNDLED, RunConfig
from .data import build_two_day_windows, bundled_history_path, load_weather_csv, partition_history
from .errors import ConfigError, CstDispatchError, SolverError
from .formulation import DispatchPlan, build_deterministic, build_smilp, extract_dispatch_plan
from .heuristics import heuristic_1, heuristic_2, heuristic_3
from .milp import solve, write_mps
from .sampling import build_ecdf, stratified_sample
from .simulator import simulate

log = logging.getLogger("cstdispatch")

EXIT_OK, EXIT_SOLVER, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
MODES = ("smilp", "deterministic", "h1", "h2", "h3")


class UsageError(CstDispatchError):
    exit_code = EXIT_USAGE


# --- shared plumbing -------------------------------------------------------------------

class Run:
    def __init__(self, args, cfg: RunConfig):
        self.args = args
        self.cfg = cfg
        self.started = datetime.now()
        if args.run_dir:
            self.dir = Path(args.run_dir)
        else:
            stamp = self.started.strftime("%Y%m%dT%H%M%S_%f")
            self.dir = Path(cfg.raw["output_dir"]) / f"{stamp}_{args.command}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.outputs = []
        self.extra = {}

    def write(self, name, text):
        p = self.dir / name
        p.write_text(text)
        self.outputs.append(name)
        return p

    def finish(self, status="ok"):
        manifest = {
            "version": __version__,
            "command": self.args.command,
            "argv": sys.argv[1:],
            "started": self.started.isoformat(),
            "finished": datetime.now().isoformat(),
            "status": status,
            "config_path": self.cfg.path,
            "config": self.cfg.resolved(),
            "seeds": {"global": self.cfg.raw["seed"], "sampling": self.cfg.raw["sampling"]["seed"]},
            "outputs": self.outputs,
            **self.extra,
        }
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=1, default=str))


def _input_file(path, what):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def load_history(cfg: RunConfig):
    """All two-day windows of the configured month (ids = chronological position) and the partition."""
    data = cfg.raw["data"]
    path = bundled_history_path() if data["path"] == BUNDLED else _input_file(data["path"], "weather file")
    db = load_weather_csv(path, data.get("schema") or {})
    windows = build_two_day_windows(db, data["month"])
    if not windows:
        raise ConfigError(f"no two-day windows in month {data['month']}")
    part = partition_history(windows, cfg.raw["partition"])
    return windows, part


def _prices_for(cfg, windows):
    w = windows[0]
    return cfg.prices(w.dt_hours, len(w)).prices


def _category_pairs(cfg, windows, part, category, manifest_path=None):
    if category == "sampling":
        return [(i, windows[i]) for i in sorted(part.sampling_indices)]
    if category == "testing":
        pairs = [(i, windows[i]) for i in sorted(part.testing_indices)]
        if not pairs:
            raise ConfigError("the partition leaves the testing set empty")
        return pairs
    if category == "scenario":
        if manifest_path is None:
            raise UsageError("category 'scenario' needs --manifest")
        return _manifest_pairs(windows, manifest_path)
    raise UsageError(f"unknown category {category!r}")


def _manifest_pairs(windows, path):
    m = _read_json(_input_file(path, "scenario manifest"))
    try:
        ids = [int(i) for i in m["window_ids"]]
        starts = m["start_timestamps"]
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"{path}: not a scenario manifest") from None
    out = []
    for wid, st in zip(ids, starts):
        if not 0 <= wid < len(windows) or windows[wid].start_timestamp.isoformat() != st:
            raise ConfigError(f"{path}: window {wid} ({st}) does not match the configured history")
        out.append((wid, windows[wid]))
    return out


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _load_plan(path):
    d = _read_json(_input_file(path, "plan file"))
    try:
        return DispatchPlan.from_dict(d.get("plan", d))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


# --- commands --------------------------------------------------------------------------

def cmd_sample(run: Run):
    cfg = run.cfg
    windows, part = load_history(cfg)
    pairs = [(i, windows[i]) for i in sorted(part.sampling_indices)]
    ecdf = build_ecdf(pairs, cfg.plant, cfg.options.loss, cfg.options.efficiency)
    n_s, seed = cfg.raw["sampling"]["n_s"], cfg.raw["sampling"]["seed"]
    if n_s > len(ecdf):
        raise ConfigError(f"n_s={n_s} exceeds the {len(ecdf)} sampling windows")
    space = stratified_sample(ecdf, n_s, seed)
    manifest = space.manifest()
    manifest["month"] = cfg.raw["data"]["month"]
    run.write("scenarios.json", json.dumps(manifest, indent=1))
    run.write("ecdf.csv", ecdf.to_csv())
    log.info("sampled windows %s", space.window_ids)
    print(run.dir / "scenarios.json")


def cmd_optimize(run: Run):
    cfg, args = run.cfg, run.args
    windows, part = load_history(cfg)
    prices = _prices_for(cfg, windows)
    pcfg = cfg.planning(args.jobs)
    plant, costs = cfg.plant, cfg.costs
    t0 = time.perf_counter()
    log_info = {"mode": args.mode}

    if args.mode in ("smilp", "deterministic"):
        pairs = _manifest_pairs(windows, args.manifest) if args.manifest else None
        if pairs is None:
            raise UsageError(f"mode {args.mode} needs --manifest")
        if args.mode == "deterministic":
            if args.scenario is not None:
                if not 0 <= args.scenario < len(pairs):
                    raise UsageError(f"--scenario must lie in 0..{len(pairs) - 1}")
                pairs = [pairs[args.scenario]]
            elif len(pairs) != 1:
                raise UsageError("deterministic mode needs a one-scenario manifest or --scenario")
        cropped = [(w, pcfg.crop(t)) for w, t in pairs]
        tb = time.perf_counter()
        if args.mode == "smilp":
            model, ix = build_smilp(plant, costs, cropped, prices, pcfg.options)
        else:
            model, ix = build_deterministic(plant, costs, cropped[0][1], prices, pcfg.options)
        log_info["build_s"] = time.perf_counter() - tb
        run.write("model.mps", write_mps(model))
        run.write("index_map.json", ix.to_json())
        sol = solve(model, pcfg.solver)
        log_info.update(status=sol.status, objective=sol.objective_value, mip_gap=sol.mip_gap,
                        solve_s=sol.runtime_s, backend=sol.backend, message=sol.message,
                        scenario_ids=[w for w, _ in pairs], shape=list(model.shape))
        if not sol.ok:
            run.write("solve_log.json", json.dumps(log_info, indent=1, default=str))
            raise SolverError(f"solve ended with status {sol.status}: {sol.message}")
        plan = extract_dispatch_plan(sol, ix, plant)
    else:
        samp = [(i, windows[i]) for i in sorted(part.sampling_indices)]
        if args.mode == "h1":
            if not args.manifest:
                raise UsageError("mode h1 needs --manifest")
            plan, table = heuristic_1(plant, costs, _manifest_pairs(windows, args.manifest), prices, pcfg)
            run.write("candidates.csv", table.to_csv())
        elif args.mode == "h2":
            size = args.subset_size or cfg.raw["heuristics"]["h2_subset_size"]
            plan, table = heuristic_2(plant, costs, samp, prices, pcfg, subset_size=size)
            run.write("candidates.csv", table.to_csv())
            log_info["subset_size"] = size or len(samp)
        else:
            plan = heuristic_3(plant, costs, samp, prices, pcfg, seed=cfg.raw["seed"])
        log_info["status"] = "ok"
    log_info["wall_clock_s"] = time.perf_counter() - t0
    run.write("plan.json", json.dumps({"mode": args.mode, "plan": plan.to_dict()}, indent=1))
    run.write("solve_log.json", json.dumps(log_info, indent=1, default=str))
    print(run.dir / "plan.json")


def cmd_simulate(run: Run):
    cfg, args = run.cfg, run.args
    plan = _load_plan(args.plan)
    windows, part = load_history(cfg)
    if args.window is not None:
        if not 0 <= args.window < len(windows):
            raise UsageError(f"--window must lie in 0..{len(windows) - 1}")
        pairs = [(args.window, windows[args.window])]
    else:
        pairs = _category_pairs(cfg, windows, part, args.category, args.manifest)
    prices = _prices_for(cfg, windows)
    pcfg = cfg.planning(args.jobs)
    if plan.horizon != len(prices):
        raise ConfigError(f"plan covers {plan.horizon} steps but the configured horizon has {len(prices)}")
    out = []
    for wid, tr in pairs:
        res = simulate(cfg.plant, cfg.costs, plan, pcfg.crop(tr), prices, pcfg.options)
        run.write(f"trace_{wid}.csv", res.to_csv())
        out.append({"window_id": wid, "start": tr.start_timestamp.isoformat(),
                    **res.breakdown.to_dict(), "events": res.event_counts()})
    profits = [o["profit"] for o in out]
    summary = {"records": out, "mean_profit": float(np.mean(profits))}
    run.write("profit.json", json.dumps(summary, indent=1))
    print(json.dumps({"mean_profit": summary["mean_profit"], "n": len(out)}))


def _parse_plan_args(items):
    plans = {}
    for it in items:
        if it == PK:
            plans["PK"] = PK
            continue
        name, sep, path = it.partition("=")
        if not sep:
            name, path = Path(it).parent.name or Path(it).stem, it
        if name in plans:
            raise UsageError(f"duplicate plan name {name!r}")
        plans[name] = _load_plan(path)
    return plans


def cmd_bench(run: Run):
    cfg, args = run.cfg, run.args
    if args.category not in CATEGORIES:
        raise UsageError(f"unknown category {args.category!r}; choose from {', '.join(CATEGORIES)}")
    plans = _parse_plan_args(args.plans)
    windows, part = load_history(cfg)
    pairs = _category_pairs(cfg, windows, part, args.category, args.manifest)
    prices = _prices_for(cfg, windows)
    pcfg = cfg.planning(args.jobs)
    records = {}
    for name, src in plans.items():
        if src != PK and src.horizon != len(prices):
            raise ConfigError(f"plan {name} covers {src.horizon} steps, horizon has {len(prices)}")
        records[name] = evaluate_plan(cfg.plant, cfg.costs, src, pairs, prices, pcfg)
    report = EvaluationReport.from_records(records, args.category)
    run.write("report.json", report.to_json())
    run.write("report.txt", report.to_text())
    run.write("records.csv", report.to_csv())
    run.write("profit.svg", report.to_svg())
    run.extra["identity_residual"] = report.max_identity_residual()
    print(report.to_text(), end="")


def cmd_sensitivity(run: Run):
    cfg, args = run.cfg, run.args
    windows, part = load_history(cfg)
    samp = [(i, windows[i]) for i in sorted(part.sampling_indices)]
    test = [(i, windows[i]) for i in sorted(part.testing_indices)]
    if not test:
        raise ConfigError("the partition leaves the testing set empty")
    sizes = args.sizes or cfg.raw["heuristics"]["sensitivity_sizes"]
    if list(sizes) != sorted(sizes):
        raise UsageError("sizes must be ascending")
    rows = sensitivity_h2(cfg.plant, cfg.costs, samp, test, _prices_for(cfg, windows), cfg.planning(args.jobs), sizes)
    run.write("sensitivity.csv", sensitivity_csv(rows))
    run.write("sensitivity.svg", sensitivity_svg(rows))
    print(sensitivity_csv(rows), end="")


COMMANDS = {"sample": cmd_sample, "optimize": cmd_optimize, "simulate": cmd_simulate,
            "bench": cmd_bench, "sensitivity": cmd_sensitivity}


# --- argument parsing ------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults apply when omitted)")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--run-dir", help="exact run directory instead of a timestamped one")
    common.add_argument("--jobs", type=int, default=None, help="worker processes (default: logical cores)")
    common.add_argument("--seed", type=int, default=None, help="global seed override")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cstdispatch", description="Dispatch planning for a solar tower plant with storage")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="draw a stratified scenario space")
    s.add_argument("--month", type=int)
    s.add_argument("--n-s", type=int, dest="n_s")
    s.add_argument("--sampling-seed", type=int)

    o = sub.add_parser("optimize", parents=[common], help="build and solve a planning model")
    o.add_argument("--manifest", help="scenario manifest from 'sample'")
    o.add_argument("--mode", choices=MODES, default="smilp")
    o.add_argument("--scenario", type=int, help="scenario position for deterministic mode")
    o.add_argument("--subset-size", type=int, help="most recent windows used by h2")
    o.add_argument("--time-limit", type=float)
    o.add_argument("--backend", choices=("highs", "highspy", "cbc"))

    m = sub.add_parser("simulate", parents=[common], help="simulate a plan on historical windows")
    m.add_argument("--plan", required=True)
    g = m.add_mutually_exclusive_group(required=True)
    g.add_argument("--window", type=int, help="window id")
    g.add_argument("--category", help="scenario, sampling or testing")
    m.add_argument("--manifest")

    b = sub.add_parser("bench", parents=[common], help="evaluate plans on a weather category")
    b.add_argument("plans", nargs="+", help="NAME=plan.json entries, or 'pk'")
    b.add_argument("--category", required=True)
    b.add_argument("--manifest")

    v = sub.add_parser("sensitivity", parents=[common], help="Heuristic-2 subset-size sweep")
    v.add_argument("--sizes", type=int, nargs="+")
    return p


def _config(args):
    cfg = RunConfig.load(_input_file(args.config, "config file")) if args.config else RunConfig.from_dict()
    over = {"output_dir": args.out, "seed": args.seed}
    if args.command == "sample":
        over.update({"data.month": args.month, "sampling.n_s": args.n_s, "sampling.seed": args.sampling_seed})
    if args.command == "optimize":
        over.update({"solver.time_limit_s": args.time_limit, "solver.backend": args.backend})
    return cfg.with_overrides(**over)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs is None:
        args.jobs = os.cpu_count() or 1
    elif args.jobs < 1:
        parser.error("--jobs must be positive")
    run = None
    try:
        cfg = _config(args)
        run = Run(args, cfg)
        COMMANDS[args.command](run)
        run.finish()
        return EXIT_OK
    except CstDispatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        code = EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    if run is not None:
        try:
            run.finish(status=f"failed (exit {code})")
        except OSError:
            pass
    return code


if __name__ == "__main__":
    sys.exit(main())
