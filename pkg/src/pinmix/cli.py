"""Command-line surface: exact equilibrium sampling, small-instance exact
reports, and the mixing experiment sweep.

Exit codes: 0 success, 2 usage or config error, 3 resource cap exceeded,
4 internal invariant violation (an order-preservation observer or an
exact-mode assertion fired).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .dynamics.clocks import derive_seed
from .exact import ENUMERATION_CAP, catalan, exact_report
from .experiments import (ConfigError, ExperimentConfig, load_config,
                          resolve_threads, run_mixing_experiment)
from .statespace import EquilibriumSampler, ModelParams, format_path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RESOURCE = 3
EXIT_INVARIANT = 4


def _add_common(p):
    p.add_argument("--seed", type=int, default=1, help="master seed")
    p.add_argument("--threads", type=int, default=0,
                   help="worker processes (default: PINMIX_THREADS or cpu count)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pinmix",
                                 description="corner-flip pinning dynamics laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw exact equilibrium paths")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", default="", help="output file (default: stdout)")
    _add_common(p)

    p = sub.add_parser("exact", help="small-instance exact report")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--times", default="", help="comma-separated time grid")
    p.add_argument("--censor", action="store_true",
                   help="include the censored-window TV comparison")
    p.add_argument("--cap", type=int, default=ENUMERATION_CAP)
    p.add_argument("--out", default="", help="output file (default: stdout)")
    _add_common(p)

    p = sub.add_parser("mix", help="mixing experiment sweep")
    p.add_argument("--config", default="", help="flat key = value config file")
    p.add_argument("--L", default="", help="comma-separated L list")
    p.add_argument("--lambda", dest="lam", default="", help="comma-separated lambda list")
    p.add_argument("--replicas", type=int, default=0)
    p.add_argument("--horizon", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--M", type=int, default=0)
    p.add_argument("--out-dir", default="")
    _add_common(p)
    return ap


def cmd_sample(args) -> int:
    if args.L < 2 or args.L % 2 != 0:
        print("error: L must be even and >= 2", file=sys.stderr)
        return EXIT_USAGE
    if args.lam < 0:
        print("error: lambda must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    if args.count < 1:
        print("error: count must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    sampler = EquilibriumSampler(ModelParams(args.L, args.lam))
    rng = np.random.default_rng(derive_seed(args.seed, 0x5A))
    lines = [format_path(sampler.sample(rng)) for _ in range(args.count)]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_exact(args) -> int:
    if args.L < 2 or args.L % 2 != 0:
        print("error: L must be even and >= 2", file=sys.stderr)
        return EXIT_USAGE
    if args.L > args.cap:
        states = catalan(args.L // 2)
        est_gb = states * (args.L + 1) * 8 / 1e9
        print(f"error: L={args.L} exceeds the enumeration cap {args.cap}: "
              f"{states:,} states, ~{est_gb:.2f} GB of path storage "
              f"(raise --cap at your own risk)", file=sys.stderr)
        return EXIT_RESOURCE
    times = None
    if args.times:
        times = [float(v) for v in args.times.split(",") if v.strip()]
    report = exact_report(args.L, args.lam, times=times, censor=args.censor,
                          cap=args.cap)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_mix(args) -> int:
    try:
        if args.config:
            config = load_config(args.config)
        else:
            config = ExperimentConfig()
        updates = {}
        if args.L:
            updates["L_values"] = tuple(int(v) for v in args.L.split(","))
        if args.lam:
            updates["lambdas"] = tuple(float(v) for v in args.lam.split(","))
        if args.replicas:
            updates["replicas"] = args.replicas
        if args.horizon:
            updates["horizon"] = args.horizon
        if args.delta:
            updates["delta"] = args.delta
        if args.epsilon:
            updates["epsilon"] = args.epsilon
        if args.beta:
            updates["beta"] = args.beta
        if args.eta:
            updates["eta"] = args.eta
        if args.M:
            updates["M"] = args.M
        if args.out_dir:
            updates["out_dir"] = args.out_dir
        if args.seed != 1:
            updates["master_seed"] = args.seed
        if args.threads:
            updates["threads"] = args.threads
        if updates:
            from dataclasses import replace
            config = replace(config, **updates)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result = run_mixing_experiment(config)
    for f in result["files"]:
        print(f)
    if not result["complete"]:
        print("interrupted: partial results flushed, manifest marked incomplete",
              file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sample":
            code = cmd_sample(args)
        elif args.command == "exact":
            code = cmd_exact(args)
        else:
            code = cmd_mix(args)
    except AssertionError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        code = EXIT_INVARIANT
    except MemoryError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        code = EXIT_RESOURCE
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
