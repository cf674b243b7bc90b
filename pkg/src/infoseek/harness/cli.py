"""Command line entry point: ``infoseek run|sweep|plot|list-presets``."""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import yaml

from ..core import ContractViolation
from .config import ConfigError, build_config, parse_config, parse_range
from .plots import PLOT_KINDS, emit_plot
from .sweep import SweepSpec, list_presets, load_preset, run_sweep

OUT_ENV = "INFOSEEK_OUT"


def _out_dir(args, default: str) -> Path:
    # flag beats environment beats config
    return Path(args.out or os.environ.get(OUT_ENV) or default)


def _seeds(args, default):
    if args.seeds is not None:
        return parse_range(args.seeds)
    if args.seed is not None:
        return [args.seed]
    return default


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"{item}: expected key=value")
        out[key] = yaml.safe_load(val)
    return out


def _report(results) -> int:
    failed = [r for r in results if r.status != "ok"]
    for r in results:
        lt = "not reached" if r.learning_time is None else r.learning_time
        point = " ".join(f"{k}={v}" for k, v in r.point.items() if k != "traceback")
        print(f"{r.label:10s} seed={r.seed:<4d} {point} learning_time={lt} status={r.status}")
    if failed:
        print(f"{len(failed)} of {len(results)} runs failed", file=sys.stderr)
        return 1
    return 0


def cmd_run(args) -> int:
    text = Path(args.config).read_text() if args.config else ""
    cfg = parse_config(text)
    if args.set:
        from .config import with_overrides
        cfg = with_overrides(cfg, _overrides(args.set))
    spec = SweepSpec(cfg, {}, _seeds(args, cfg.run["seeds"]), name="run")
    out = _out_dir(args, cfg.run["out"])
    results = run_sweep(spec, out, args.parallelism)
    print(f"wrote {out / 'aggregate.csv'}")
    return _report(results)


def cmd_sweep(args) -> int:
    if args.preset:
        spec = load_preset(args.preset)
    elif args.config:
        spec = SweepSpec.from_yaml(Path(args.config).read_text(), Path(args.config).stem)
    else:
        raise ConfigError("sweep: give --preset NAME or --config PATH")
    seeds = _seeds(args, None)
    if seeds is not None:
        spec = SweepSpec(spec.base, spec.axes, seeds, spec.cap, spec.name, spec.description)
    out = _out_dir(args, str(Path(spec.base.run["out"]) / spec.name))
    results = run_sweep(spec, out, args.parallelism)
    print(f"wrote {out / 'aggregate.csv'}")
    return _report(results)


def cmd_plot(args) -> int:
    path = emit_plot(args.csv, args.kind, args.output, args.title or "")
    print(f"wrote {path}")
    return 0


def cmd_list(args) -> int:
    for name in list_presets():
        spec = load_preset(name)
        n = len(spec.cells()) * len(spec.seeds)
        print(f"{name:28s} {n:5d} runs  {' '.join(spec.description.split())}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="infoseek", description="Run exploration experiments and plot results.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--seed", type=int, help="single seed")
        sp.add_argument("--seeds", help="seed range A..B or list A,B,C")
        sp.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else the config's run.out)")
        sp.add_argument("--parallelism", type=int, default=1, help="worker processes")

    run = sub.add_parser("run", help="run one config over its seeds")
    common(run)
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a sweep spec or a named preset")
    common(sweep)
    sweep.add_argument("--preset", help="name of a bundled preset")
    sweep.set_defaults(func=cmd_sweep)

    plot = sub.add_parser("plot", help="render an aggregate CSV as SVG")
    plot.add_argument("csv")
    plot.add_argument("--kind", required=True, choices=sorted(PLOT_KINDS))
    plot.add_argument("--output", "-o", help="SVG path (default: next to the CSV)")
    plot.add_argument("--title")
    plot.set_defaults(func=cmd_plot)

    lp = sub.add_parser("list-presets", help="show bundled sweep presets")
    lp.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ContractViolation, OSError, yaml.YAMLError) as exc:
        print(f"infoseek: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
