"""Command line: ``logsoblab run|emit|registry``.

    logsoblab run --scenario E2 --seed 0 --out results
    logsoblab run --config my_e5.json --out results
    logsoblab run --scenario E1 --fit-constants [--override]
    logsoblab emit --scenario E4 --out e4.json      # resolved config (defaults filled in)
    logsoblab registry                              # list frozen constants

``run`` exits 0 iff every assertion of every requested scenario passes.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError
from .registry import Registry
from .report import emit_tables
from .scenarios import DEFAULTS, ScenarioConfig, load_config, run_scenario

CONFIG_SCHEMA = """\
Config files are JSON objects:
  scenario    one of E1..E6
  seed        nonnegative integer (required; no clock-derived seeds)
  params      object; keys must be parameters of that scenario (see `logsoblab emit`)
  tolerances  optional object of named tolerance overrides (z_max, n_sigma)
  out         optional output directory
"""


def _build_config(args, sid: str | None) -> dict:
    d = load_config(args.config) if args.config else {}
    if sid is not None:
        if d.get("scenario") not in (None, sid):
            d = {k: v for k, v in d.items() if k != "params"}
        d["scenario"] = sid
    if args.seed is not None:
        d["seed"] = args.seed
    d.setdefault("seed", 0)
    return d


def _scenarios(args) -> list:
    if args.scenario == "all":
        return sorted(DEFAULTS)
    if args.scenario:
        return [args.scenario]
    if args.config:
        return [load_config(args.config).get("scenario")]
    raise ConfigError("give --scenario or --config")


def cmd_run(args) -> int:
    reg = Registry(args.registry, mode="fit" if args.fit_constants else "assert", override=args.override)
    ok = True
    for sid in _scenarios(args):
        cfg = ScenarioConfig.from_dict(_build_config(args, sid))
        rep = run_scenario(cfg, reg, workers=args.workers)
        out = Path(args.out or cfg.out or "results") / cfg.scenario
        emit_tables(rep, out)
        for line in rep.lines():
            print(line)
        n_pass = sum(a.passed for a in rep.assertions)
        print(f"== {cfg.scenario}: {n_pass}/{len(rep.assertions)} assertions passed, {len(rep.errors)} errors, "
              f"{rep.runtime:.1f} s, outputs in {out}")
        ok &= rep.passed
    if args.fit_constants:
        reg.save()
        print(f"registry {reg.path} version {reg.version}")
    return 0 if ok else 1


def cmd_emit(args) -> int:
    if args.schema:
        print(CONFIG_SCHEMA)
        return 0
    cfg = ScenarioConfig.from_dict(_build_config(args, _scenarios(args)[0]))
    text = json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_registry(args) -> int:
    reg = Registry(args.registry)
    print(f"# {reg.path} version {reg.version}")
    for r in reg.table():
        print(f"{r['name']:28s} {r['kind']:6s} value={r['value']:.6g} observed={r['observed']:.6g} "
              f"scenario={r['scenario']} config={r['config_hash']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="logsoblab", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--scenario", type=str, default=None, help="E1..E6 or 'all'")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed (default 0)")
        p.add_argument("--out", type=str, default=None, help="output directory (run) or file (emit)")

    r = sub.add_parser("run", help="run scenarios, write CSV/JSON/gnuplot outputs")
    common(r)
    r.add_argument("--fit-constants", action="store_true", help="fit and store universal constants")
    r.add_argument("--override", action="store_true", help="allow refitting frozen constants")
    r.add_argument("--registry", type=str, default=None, help="constants registry JSON")
    r.add_argument("--workers", type=int, default=1, help="process pool size for sub-tasks")
    r.set_defaults(fn=cmd_run)
    e = sub.add_parser("emit", help="write the resolved config of a scenario")
    common(e)
    e.add_argument("--schema", action="store_true", help="print the config schema")
    e.set_defaults(fn=cmd_emit)
    g = sub.add_parser("registry", help="list the frozen constants")
    g.add_argument("--registry", type=str, default=None)
    g.set_defaults(fn=cmd_registry)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
