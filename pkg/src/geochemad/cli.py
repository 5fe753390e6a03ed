"""Command line entry point: ``geochemad {run,gridmap,synth,inspect}``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric or
training error. ``GEOCHEMAD_OUTPUT_DIR`` sets the default output directory
for ``run`` (and ``synth`` when ``--out`` is omitted).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import OUTPUT_ENV
from .errors import ConfigError, DataError, NumericError, ShapeError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("geochemad")


def exit_code(exc: BaseException) -> int:
    """Map an exception (or the cause of a stage error) to an exit status."""
    cause = getattr(exc, "cause", exc)
    if isinstance(cause, (ConfigError, FileNotFoundError)):
        return EXIT_CONFIG
    if isinstance(cause, (NumericError, ShapeError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(cause, (DataError, ValueError, OSError)):
        return EXIT_DATA
    return EXIT_NUMERIC


def _run(args) -> int:
    from .config import load_config
    from .pipeline import cmd_run, config_summary

    cfg = load_config(args.config)
    if args.out:
        from dataclasses import replace

        cfg = replace(cfg, output=replace(cfg.output, dir=Path(args.out)))
    if args.no_figures:
        from dataclasses import replace

        cfg = replace(cfg, output=replace(cfg.output, figures=False))
    if args.dry_run:
        print(json.dumps(config_summary(cfg), indent=2))
        return EXIT_OK
    result = cmd_run(cfg, jobs=args.jobs)
    width = max(len(n) for n in result.reports)
    print(f"{'detector':<{width}}  mean AUC  var AUC   mean AP   DTD")
    for name, rep in result.reports.items():
        agg = rep.aggregates()
        print(f"{name:<{width}}  {agg['auc_mean']:.4f}    {agg['auc_var']:.2e}  {agg['ap_mean']:.4f}    {rep.dtd:.4g}")
    print(f"artifacts written to {result.out_dir}")
    return EXIT_OK


def _gridmap(args) -> int:
    from .pipeline import cmd_gridmap

    params = {}
    if args.method == "idw":
        params["power"] = args.power
    paths = cmd_gridmap(args.scored, args.out, args.cell_size, args.method, args.deposits, args.nx, **params)
    for label, p in paths.items():
        print(f"{label}: {p}")
    return EXIT_OK


def _synth(args) -> int:
    from .pipeline import cmd_synth

    out = args.out or os.environ.get(OUTPUT_ENV) or "."
    paths = cmd_synth(args.config, out, args.prefix, args.seed)
    for label, p in paths.items():
        print(f"{label}: {p}")
    return EXIT_OK


def _inspect(args) -> int:
    from .pipeline import cmd_inspect

    stats = cmd_inspect(args.survey)
    if args.json:
        print(json.dumps(stats, indent=2))
        return EXIT_OK
    print(f"samples (N)            {stats['n_samples']}")
    print(f"elements (C)           {stats['n_elements']}")
    print(f"extent x               {stats['x_min']:.6f} .. {stats['x_max']:.6f}")
    print(f"extent y               {stats['y_min']:.6f} .. {stats['y_max']:.6f}")
    print(f"avg sampling distance  {stats['avg_sampling_distance']:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geochemad", description="Geochemical anomaly detection benchmark.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a pipeline config end to end")
    r.add_argument("config", help="YAML pipeline config")
    r.add_argument("--out", help="override output.dir")
    r.add_argument("--jobs", type=int, default=1, help="fit detectors concurrently (opt-in)")
    r.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    r.add_argument("--dry-run", action="store_true", help="validate and print the parsed config")
    r.set_defaults(func=_run)

    g = sub.add_parser("gridmap", help="rasterise a scored CSV to an ESRI ASCII grid")
    g.add_argument("scored", help="scored CSV written by 'run'")
    g.add_argument("out", help="output .asc path")
    g.add_argument("--cell-size", type=float, help="cell size in coordinate units [avg sampling distance]")
    g.add_argument("--nx", type=int, help="cells along the longer side (alternative to --cell-size)")
    g.add_argument("--method", choices=("idw", "kriging"), default="idw")
    g.add_argument("--power", type=float, default=2.0, help="IDW power")
    g.add_argument("--deposits", help="deposit CSV; writes a second grid counting deposits per cell")
    g.set_defaults(func=_gridmap)

    s = sub.add_parser("synth", help="generate a synthetic survey with planted deposits")
    s.add_argument("--config", help="YAML mapping of SynthConfig fields")
    s.add_argument("--out", help="output directory")
    s.add_argument("--prefix", default="synth")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=_synth)

    i = sub.add_parser("inspect", help="print survey statistics")
    i.add_argument("survey", help="survey CSV")
    i.add_argument("--json", action="store_true")
    i.set_defaults(func=_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an exit status
        stage = getattr(exc, "stage", None)
        prefix = f"error in stage '{stage}'" if stage else "error"
        print(f"{prefix}: {getattr(exc, 'cause', exc)}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
