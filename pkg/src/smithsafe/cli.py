"""Command line entry point: ``smithsafe run | sweep | validate``."""
import argparse
import dataclasses
import sys
from concurrent.futures import ThreadPoolExecutor

from .config import BUILTIN_SCENARIOS, resolve
from .errors import ConfigError, SimulationError
from .export import export_csv
from .metrics import compute_metrics
from .runner import run_scenario

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

SWEEP_PARAMS = ("alpha",)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # One-line reason, usage exit code.
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser():
    config_help = f"YAML file or builtin scenario ({', '.join(BUILTIN_SCENARIOS)})"
    p = _Parser(prog="smithsafe", description="Delayed differential-drive tracking with a safe-heading filter.")
    p.add_argument("--backend", choices=("python", "compiled"), default=None,
                   help="simulation kernel (default: compiled when built)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="simulate a scenario and print metrics")
    run.add_argument("config", help=config_help)
    run.add_argument("--out", metavar="CSV", help="write the full trace to this file")
    run.add_argument("--metrics", action="store_true",
                     help="print the metrics summary (default when --out is not given)")

    sweep = sub.add_parser("sweep", help="rerun a scenario over one parameter and print max_t B")
    sweep.add_argument("config", help=config_help)
    sweep.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sweep.add_argument("--values", required=True, help="comma-separated values, e.g. 0.5,1,2,4")
    sweep.add_argument("--jobs", type=int, default=1, help="simulations to run concurrently")

    val = sub.add_parser("validate", help="check a config without simulating")
    val.add_argument("config", help=config_help)
    return p


def _parse_values(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values: not a comma-separated list of numbers: {text!r}") from None
    if not values:
        raise ConfigError("--values: empty list")
    return values


def _with_alpha(cfg, alpha):
    if cfg.safety is None:
        raise ConfigError("sweep --param alpha needs a scenario with a safety section")
    return cfg.replace(safety=dataclasses.replace(cfg.safety, alpha_per_s=alpha)).validate()


def _cmd_run(args, out):
    cfg = resolve(args.config)
    trace = run_scenario(cfg, args.backend)
    if args.out:
        export_csv(trace, args.out)
    if args.metrics or not args.out:
        if len(trace) == 0:
            print("samples=0", file=out)
        else:
            for line in compute_metrics(trace, cfg).as_lines():
                print(line, file=out)


def _cmd_sweep(args, out):
    cfg = resolve(args.config)
    configs = [_with_alpha(cfg, a) for a in _parse_values(args.values)]

    def b_max(c):
        trace = run_scenario(c, args.backend)
        return compute_metrics(trace, c).b_max

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(b_max, configs))
    for c, b in zip(configs, results):
        print(f"alpha={c.safety.alpha_per_s:.9g} b_max={'none' if b is None else format(b, '.9g')}", file=out)


def _cmd_validate(args, out):
    cfg = resolve(args.config)
    print(f"ok {cfg.name} steps={cfg.n_steps}", file=out)


def main(argv=None, out=None):
    out = out or sys.stdout
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "validate": _cmd_validate}[args.command]
    try:
        handler(args, out)
    except ConfigError as exc:
        print(f"smithsafe: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as exc:
        print(f"smithsafe: simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"smithsafe: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
