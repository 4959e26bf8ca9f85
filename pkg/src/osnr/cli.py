"""Command-line entry point: ``run``, ``parse-case``, ``plot-data`` and ``cost-probe``.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure
with partial results on disk.
"""
import argparse
import json
import logging
import sys

from .bench import (QUANTITIES, ExperimentConfig, cost_probe, emit_plotdata, read_config,
                    resolve_case, run_experiment)
from .errors import OsnrError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="osnr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a seeded experiment and write a result bundle")
    r.add_argument("--config", help="INI file with an [experiment] section")
    r.add_argument("--experiment", choices=("track", "opf", "root-demo"))
    r.add_argument("--case", help="case file path or bundled fixture name (opf)")
    r.add_argument("--n", type=int)
    r.add_argument("--m", type=int)
    r.add_argument("--T", type=int)
    r.add_argument("--rho", type=float, action="append", help="sketch percentage; repeatable")
    r.add_argument("--algorithm", action="append", dest="algorithms",
                   help="osnr, ogd, onm (track/root-demo) or osnr_ec (opf); repeatable")
    r.add_argument("--runs", type=int)
    r.add_argument("--seed", type=int, dest="base_seed")
    r.add_argument("--eta", type=float)
    r.add_argument("--alpha-rule", dest="alpha_rule")
    r.add_argument("--out")
    r.add_argument("--jobs", type=int)
    r.add_argument("--record-decisions", action="store_true", default=None)

    c = sub.add_parser("parse-case", help="validate a MATPOWER case file and print a summary")
    c.add_argument("case")

    d = sub.add_parser("plot-data", help="emit a long-format table from a result bundle")
    d.add_argument("bundle")
    d.add_argument("quantity", help=f"one of {', '.join(QUANTITIES)}")
    d.add_argument("-o", "--output")

    k = sub.add_parser("cost-probe", help="time one sketched step for several sketch sizes")
    k.add_argument("--n", type=int, default=800)
    k.add_argument("--rho", type=float, action="append")
    k.add_argument("--steps", type=int, default=50)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("-o", "--output")
    return p


_OVERRIDES = ("experiment", "case", "n", "m", "T", "algorithms", "runs", "base_seed", "eta",
              "alpha_rule", "out", "jobs", "record_decisions")


def config_from_args(args):
    kw = read_config(args.config) if args.config else {}
    for key in _OVERRIDES:
        value = getattr(args, key)
        if value is not None:
            kw[key] = tuple(value) if key == "algorithms" else value
    if args.rho:
        kw["rhos"] = tuple(args.rho)
    return ExperimentConfig(**kw)


def _cmd_run(args):
    try:
        cfg = config_from_args(args)
        bundle = run_experiment(cfg)
    except (OsnrError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = json.loads((bundle / "manifest.json").read_text(encoding="utf-8"))
    failures = manifest["failures"]
    for f in failures:
        print(f"run failed: {f['algorithm']} rho={f['rho']} seed={f['seed']} "
              f"at round {f['round']}: {f['error']}", file=sys.stderr)
    print(f"wrote {bundle}")
    return EXIT_RUNTIME if failures else EXIT_OK


def _cmd_parse_case(args):
    try:
        case = resolve_case(args.case)
    except (OsnrError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for key, value in case.summary().items():
        print(f"{key}: {value}")
    return EXIT_OK


def _cmd_plot_data(args):
    try:
        text = emit_plotdata(args.bundle, args.quantity, out=args.output)
    except OsnrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.output is None:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_cost_probe(args):
    if args.n < 1 or args.steps < 1 or any(not 0 < r <= 1 for r in args.rho or ()):
        print("error: need n >= 1, steps >= 1 and rho in (0, 1]", file=sys.stderr)
        return EXIT_CONFIG
    report = cost_probe(args.n, tuple(args.rho or (0.1, 1.0)), args.steps, args.seed)
    text = json.dumps(report, indent=2) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "parse-case": _cmd_parse_case,
               "plot-data": _cmd_plot_data, "cost-probe": _cmd_cost_probe}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
