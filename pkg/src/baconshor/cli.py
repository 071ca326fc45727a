"""Command-line entry point ``bslab``.

Subcommands::

    bslab simulate config.yaml [--out DIR] [--workers N]
    bslab analytics config.yaml
    bslab sweep config.yaml --axis correlator.T_R=12,16,20 [--axis ...] --out DIR
    bslab fit DIR [--discard 0.1]
    bslab plotdata DIR

Exit status is 0 on success, 2 for configuration errors and 3 for
numerical failures.  ``BSLAB_WORKERS`` overrides the worker count.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .campaign import ConfigError, fit_campaign
from .config import load_config
from .sweep import evaluate_analytics, plotdata_from_campaign, run_sweep, write_json, write_table
from .tomography import TomographyError
from .trajectory import NumericalError

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=1, default=float))


def cmd_simulate(args) -> int:
    from .campaign import run_campaign

    over = {}
    if args.out:
        over["output"] = {"dir": args.out}
    if args.workers:
        over["simulation"] = {"workers": args.workers}
    if args.seed is not None:
        over.setdefault("simulation", {})["seed"] = args.seed
    cfg = load_config(args.config, over)
    if cfg.mode == "analytics":
        raise ConfigError(f"{args.config}: mode is analytics; use the analytics command")
    res = run_campaign(cfg)
    _print_json({"engine": res.engine, "fits": res.fits, "predictions": res.predictions,
                 "final_survival": float(res.survival[-1]), "output_dir": cfg.output_dir})
    return 0


def cmd_analytics(args) -> int:
    cfg = load_config(args.config)
    out = evaluate_analytics(cfg)
    if args.out:
        write_json(out, Path(args.out) / "analytics.json")
    _print_json(out)
    return 0


def cmd_sweep(args) -> int:
    text = Path(args.config).read_text()
    rows = run_sweep(text, args.axis, source=args.config, output_dir=args.out)
    if not args.out:
        write_table(rows, Path("/dev/stdout"))
    else:
        print(f"wrote {len(rows)} rows to {Path(args.out) / 'sweep.csv'}")
    return 0


def _load_summary(directory: str) -> dict:
    path = Path(directory) / "campaign.json"
    if not path.exists():
        raise ConfigError(f"{path}: no campaign output found")
    with open(path) as fh:
        return json.load(fh)


def cmd_fit(args) -> int:
    s = _load_summary(args.dir)
    times = np.asarray(s["times"])
    chi = np.asarray(s["chi_real"]) + 1j * np.asarray(s["chi_imag"])
    fits = fit_campaign(times, np.asarray(s["survival"]), np.asarray(s["survival_err"]), chi, args.discard)
    write_json(fits, Path(args.dir) / "fits.json")
    _print_json({"fits": fits, "predictions": s.get("predictions", {})})
    return 0


def cmd_plotdata(args) -> int:
    s = _load_summary(args.dir)
    write_json(plotdata_from_campaign(s), Path(args.dir) / "plotdata.json")
    print(f"wrote {Path(args.dir) / 'plotdata.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bslab", description="Continuous error detection campaigns")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="run a Monte Carlo or projective campaign")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (overrides output.dir)")
    s.add_argument("--workers", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)
    a = sub.add_parser("analytics", help="evaluate closed-form predictions")
    a.add_argument("config")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analytics)
    w = sub.add_parser("sweep", help="evaluate a config over a parameter grid")
    w.add_argument("config")
    w.add_argument("--axis", action="append", required=True,
                   help="key.path=v1,v2,... or key.path=linspace(a,b,n); repeat for a grid")
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)
    f = sub.add_parser("fit", help="refit rates of a finished campaign")
    f.add_argument("dir")
    f.add_argument("--discard", type=float, default=0.1)
    f.set_defaults(func=cmd_fit)
    d = sub.add_parser("plotdata", help="emit plot series for a finished campaign")
    d.add_argument("dir")
    d.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TomographyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
