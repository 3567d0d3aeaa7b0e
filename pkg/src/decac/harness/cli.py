"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 assumption-validation
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import AssumptionViolation, ConfigError, DecacError, MixingError
from .config import load_config
from .runner import (
    SchemaError,
    ablation_kc,
    compare_algorithms,
    emit_plot_data,
    run_experiment,
    validate,
    validation_failed,
)

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_IO = 0, 2, 3, 4


def _parser():
    p = argparse.ArgumentParser(prog="decac", description="Decentralized actor-critic experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one configured experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")

    a = sub.add_parser("ablate-kc", help="repeat an experiment over consensus periods")
    a.add_argument("--config", required=True)
    a.add_argument("--values", default="1,5,10,20")
    a.add_argument("--out")

    c = sub.add_parser("compare", help="compare algorithms on a shared environment")
    c.add_argument("--configs", required=True, help="comma-separated config files")
    c.add_argument("--out")

    d = sub.add_parser("plotdata", help="long-format plot data from aggregate files")
    d.add_argument("--in", dest="indir", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--y", default="running_reward")

    v = sub.add_parser("validate", help="check modelling assumptions at the initial policy")
    v.add_argument("--config", required=True)
    return p


def _run(args):
    if args.command == "run":
        paths, agg = run_experiment(load_config(args.config), args.out, args.seed)
        print(f"wrote {len(paths)} run file(s) and {agg}")
    elif args.command == "ablate-kc":
        try:
            values = [int(x) for x in args.values.split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --values {args.values!r}") from exc
        print(f"wrote {ablation_kc(load_config(args.config), values, args.out)}")
    elif args.command == "compare":
        files = [f.strip() for f in args.configs.split(",") if f.strip()]
        configs = [load_config(f) for f in files]
        print(f"wrote {compare_algorithms(configs, [Path(f).stem for f in files], args.out)}")
    elif args.command == "plotdata":
        indir = Path(args.indir)
        if not indir.is_dir():
            raise OSError(f"input directory {indir} does not exist")
        files = sorted(indir.rglob("aggregate.csv"))
        names = [str(f.parent.relative_to(indir)) if f.parent != indir else indir.name for f in files]
        print(f"wrote {emit_plot_data(files, args.out, args.y, names)}")
    elif args.command == "validate":
        checks = validate(load_config(args.config))
        for c in checks:
            status = "ok" if c.ok else ("FAIL" if c.fatal else "warn")
            print(f"{status:4s} {c.name}: {c.detail}")
        return EXIT_ASSUMPTION if validation_failed(checks) else EXIT_OK
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return _run(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (AssumptionViolation, MixingError) as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (ConfigError, DecacError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
