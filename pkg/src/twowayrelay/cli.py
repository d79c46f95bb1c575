"""Command-line entry point: ``twowayrelay <subcommand> [options]``.

Exit codes: 0 on success, 2 on a validation error, 3 on a runtime error.
"""
from __future__ import annotations

import argparse
import math
import sys

from .harness import (
    ConfigValidationError,
    ExperimentConfig,
    load_config_file,
    preset,
    preset_names,
    run,
)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 2 is argparse's default too, but keep it explicit
        raise _ArgumentError(message)


def _floats(n: int | None = None):
    def parse(text: str) -> tuple[float, ...]:
        values = tuple(float(v) for v in text.split(",") if v.strip())
        if n is not None and len(values) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers")
        return values

    return parse


def _db_range(text: str) -> tuple[float, ...]:
    """``lo:hi:step`` (inclusive) or a comma-separated list."""
    if ":" not in text:
        return _floats()(text)
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo:hi:step") from None
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError("need step > 0 and hi >= lo")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return tuple(lo + i * step for i in range(count))


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--config", help="flat key = value file; flags override its values")
    p.add_argument("--preset", help="start from a named preset")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twowayrelay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("region", help="rate-region vertices and boundary")
    _common(p)
    p.add_argument("--caps", type=_floats(4), help="c_ad,c_db,c_bd,c_da")
    p.add_argument("--protocol", choices=["all", "tdmh", "mlnc", "plnc", "hull"])
    p.add_argument("--boundary-points", type=int)

    p = sub.add_parser("gain", help="coding gain against the traffic ratio")
    _common(p)
    p.add_argument("--caps", type=_floats(4))
    p.add_argument("--mu-min", type=float)
    p.add_argument("--mu-max", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--topology", help="topology file (used when --caps is absent)")
    p.add_argument("--snr-db", type=float, help="mean SNR of a half-distance link")
    p.add_argument("--trials", type=int, help="fading draws")
    p.add_argument("--num-relays", type=int)
    p.add_argument("--ab-distance", type=float)
    p.add_argument("--relay-spread", type=float)

    p = sub.add_parser("schedule", help="queue simulation of an opportunistic scheduler")
    _common(p)
    p.add_argument("--protocol", choices=["omlnc", "oplnc"])
    p.add_argument("--caps", type=_floats(4))
    p.add_argument("--rate-a", type=float, help="packets per unit time at A")
    p.add_argument("--rate-b", type=float)
    p.add_argument("--packet-bits", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--max-events", type=int)
    p.add_argument("--sample-every", type=int)
    p.add_argument("--min-batch", type=int)

    p = sub.add_parser("dmt", help="outage curve and diversity slope")
    _common(p)
    p.add_argument("--protocol", choices=["tdmh", "mlnc", "plnc"])
    p.add_argument("--coop", choices=["all", "select-bc", "select-relay"])
    p.add_argument("--relays", type=int, dest="num_relays")
    p.add_argument("--m", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--lf", type=float)
    p.add_argument("--lb", type=float)
    p.add_argument("--snr-db", type=_db_range, dest="snr_db_grid", help="lo:hi:step in dB")
    p.add_argument("--trials", type=int)
    p.add_argument("--method", choices=["auto", "mc", "is"])

    p = sub.add_parser("lemma-check", help="empirical checks of the exponential tail bounds")
    _common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--sigmas", type=_floats(), dest="lemma_sigmas")
    p.add_argument("--thetas", type=_floats(), dest="lemma_thetas")

    sub.add_parser("preset-list", help="list preset names")
    return parser


_NOT_FIELDS = {"command", "config", "preset"}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    kind = args.command
    if args.preset:
        config = preset(args.preset)
        if config.kind != kind:
            raise ConfigValidationError({"preset": f"{args.preset!r} is a {config.kind} preset"})
    else:
        config = ExperimentConfig(kind)
        if kind == "schedule":
            config = config.replace(protocol="omlnc")
        elif kind == "dmt":
            config = config.replace(protocol="tdmh")
    if args.config:
        config = load_config_file(args.config, config)
    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_FIELDS and v is not None}
    return config.replace(**overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "preset-list":
        for name in preset_names():
            print(name)
        return EXIT_OK
    try:
        config = config_from_args(args)
        manifest = run(config)
    except ConfigValidationError as exc:
        for name, message in exc.errors.items():
            print(f"invalid {name}: {message}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for name in manifest.outputs:
        print(f"wrote {config.out}/{name}")
    s = manifest.summary
    if config.kind == "dmt":
        d_hat = "nan" if s.get("d_hat") is None else f"{s['d_hat']:.4f}"
        se = "nan" if s.get("stderr") is None else f"{s['stderr']:.4f}"
        theory = "nan" if s.get("d_theory") is None else f"{s['d_theory']:.4f}"
        print(f"d_hat={d_hat} stderr={se} d_theory={theory}")
    for warning in manifest.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
