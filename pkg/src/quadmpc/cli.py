"""Command-line entry points: run, sweep, regret, verify.

Exit codes: 0 on success, 1 on configuration errors, 2 when any run in a
sweep (or the single run) ends in the failed state.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import (
    ScenarioConfig,
    config_to_json,
    load_config,
    unflatten_config,
    with_overrides,
)
from .errors import InvalidConfig
from .harness import dynamic_regret, export, run_scenario, summary_dict


def _add_common(p):
    p.add_argument("--config", required=True, help="path to a flat-JSON config")
    p.add_argument("--out-dir", default="out", help="output directory")
    p.add_argument(
        "--format",
        default="csv,summary",
        help="comma-separated outputs: csv,summary,svg",
    )
    p.add_argument("--seed", type=int, default=None, help="override learner seed")


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_overrides(cfg, {"learner.seed": args.seed})
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    log = run_scenario(cfg)
    paths = export(log, args.out_dir, formats=args.format.split(","))
    for p in paths:
        print(p)
    print(f"{cfg.name} [{cfg.variant}]: {log.status}")
    return 0 if log.status == "completed" else 2


def cmd_sweep(args) -> int:
    """Sweep file: {"base": {flat config}, "runs": [{"name":..., "overrides": {...}}]}."""
    with open(args.config, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    if not isinstance(spec, dict) or "runs" not in spec:
        raise InvalidConfig("sweep file needs 'base' and 'runs' entries")
    base = unflatten_config(spec.get("base", {})).validate()

    jobs = []
    for entry in spec["runs"]:
        cfg = with_overrides(base, entry.get("overrides", {}))
        cfg.name = entry.get("name", cfg.name)
        jobs.append(cfg)

    results = []
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(run_scenario, jobs))
    else:
        results = [run_scenario(cfg) for cfg in jobs]

    any_failed = False
    table = []
    for log in results:
        export(log, args.out_dir, formats=args.format.split(","))
        s = summary_dict(log)
        metrics = s.get("metrics", {})
        overall = metrics.get("overall_cm", float("nan"))
        table.append((log.config.name, log.config.variant, log.status, overall))
        if log.status != "completed":
            any_failed = True
    width = max(len(t[0]) for t in table) if table else 10
    print(f"{'name':<{width}}  {'variant':<11}  {'status':<9}  overall_cm")
    for name, variant, status, overall in table:
        print(f"{name:<{width}}  {variant:<11}  {status:<9}  {overall:.2f}")
    return 2 if any_failed else 0


def cmd_regret(args) -> int:
    cfg = _load(args)
    clair = with_overrides(cfg, {"variant": "clairvoyant"})
    log = run_scenario(cfg)
    clair_log = run_scenario(clair)
    regret = dynamic_regret(log, clair_log)
    n = min(len(log.records), len(clair_log.records))
    export(log, args.out_dir, formats=args.format.split(","),
           extra={"dynamic_regret": regret, "regret_per_step": regret / max(n, 1)})
    export(clair_log, args.out_dir, formats=args.format.split(","))
    print(f"dynamic regret over {n} steps: {regret:.6g} ({regret / max(n, 1):.6g}/step)")
    return 0 if log.status == "completed" and clair_log.status == "completed" else 2


def cmd_verify(args) -> int:
    """Fast built-in oracle and property checks (subset of the test suite)."""
    from . import verify as _verify

    ok = _verify.run_all(quick=args.quick)
    return 0 if ok else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadmpc",
        description="Adaptive quadruped locomotion scenarios: run, sweep, regret, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="execute a matrix of scenarios")
    _add_common(p_sweep)
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p_sweep.set_defaults(func=cmd_sweep)

    p_regret = sub.add_parser("regret", help="run a scenario and its clairvoyant twin")
    _add_common(p_regret)
    p_regret.set_defaults(func=cmd_regret)

    p_verify = sub.add_parser("verify", help="run built-in oracle/property checks")
    p_verify.add_argument("--quick", action="store_true", help="smaller instances")
    p_verify.set_defaults(func=cmd_verify)

    p_show = sub.add_parser("show-config", help="print the default config")
    p_show.set_defaults(func=lambda a: (print(config_to_json(ScenarioConfig())), 0)[1])

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfig as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
