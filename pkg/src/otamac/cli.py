"""``ota-mac`` command line.

Exit codes: 0 success, 2 configuration error, 3 overflow-guard rejection.
"""

from __future__ import annotations

import argparse
import sys

from .exceptions import GuardOverflow, InvalidConfig
from .harness import ExperimentConfig, format_results, load_config, run_experiment, write_results
from .schemes import make_analog_params, select_params_uq, select_params_wz

EXIT_CONFIG = 2
EXIT_OVERFLOW = 3


def _b_list(text):
    try:
        return tuple(float(x) for x in text.split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid B list {text!r}") from None


def _add_common(p):
    p.add_argument("--scheme", choices=("uq", "wz", "analog"))
    p.add_argument("--k", dest="K", type=int)
    p.add_argument("--d", dest="d", type=int)
    p.add_argument("--snr-db", dest="snr_db", type=float)
    p.add_argument("--b", dest="B", type=_b_list, help="comma-separated list of norm bounds")
    p.add_argument("--c2", type=float)
    p.add_argument("--n", dest="N", type=int, help="channel-use budget used in parameter selection")


def build_parser():
    parser = argparse.ArgumentParser(prog="ota-mac", description="Over-the-air aggregation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured experiment and write results")
    run.add_argument("--config", help="flat TOML file with ExperimentConfig keys")
    _add_common(run)
    run.add_argument("--mode", choices=("mean-estimation", "psgd"))
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", dest="master_seed", type=int)
    run.add_argument("--sigma-prime", dest="sigma_prime", type=float)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", dest="output")
    run.add_argument("--format", choices=("csv", "dat"))

    params = sub.add_parser("params", help="print the selected scheme parameters")
    _add_common(params)
    return parser


def _config_from_args(args):
    keys = ("mode", "scheme", "K", "d", "snr_db", "B", "c2", "N", "runs", "master_seed",
            "sigma_prime", "workers", "output", "format")
    overrides = {k: getattr(args, k, None) for k in keys}
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def _cmd_run(args):
    cfg = _config_from_args(args)
    rows = run_experiment(cfg)
    if cfg.output:
        write_results(rows, cfg.output, cfg.format)
    else:
        sys.stdout.write(format_results(rows, cfg.format))
    return 0


def _cmd_params(args):
    scheme = args.scheme or "uq"
    K = args.K or 500
    d = args.d or 32
    snr = 10.0 ** ((50.0 if args.snr_db is None else args.snr_db) / 10.0)
    B = (args.B or (1.0,))[0]
    N = args.N or d
    if scheme == "uq":
        p = select_params_uq(K, d, snr, N, B)
    elif scheme == "wz":
        p = select_params_wz(K, d, snr, N, B, 1.0 if args.c2 is None else args.c2)
    else:
        p = make_analog_params(K, d, B)
    fields = ("scheme", "K", "d", "v", "p", "p_prime", "w", "w_prime", "M", "I", "ell", "r", "r_prime")
    for name in fields:
        print(f"{name} = {getattr(p, name)!r}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_params(args)
    except GuardOverflow as exc:
        print(f"ota-mac: overflow guard: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except (InvalidConfig, FileNotFoundError) as exc:
        print(f"ota-mac: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
