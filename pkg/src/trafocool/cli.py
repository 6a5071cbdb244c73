"""Command line driver.

Subcommands: ``run`` a configuration, ``verify`` the built-in check battery,
``sweep`` fan configurations, ``compare`` two result directories.

Exit codes: 0 run completed (including iteration-limit stops), 1 verification
failure, 2 configuration problem, 3 diverged.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def _set_threads(n):
    """Pin worker threads; must run before numpy first loads its BLAS."""
    if n is None:
        n = os.environ.get("TRAFOCOOL_THREADS")
    if n is None:
        return
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="trafocool",
        description="steady buoyant-flow and conjugate-heat solver for "
                    "fan-cooled transformer enclosures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configuration file")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--log-every", type=int, default=None,
                       help="print residuals every N iterations")
    p_run.add_argument("--quiet", action="store_true")

    p_ver = sub.add_parser("verify", help="run the verification battery")
    p_ver.add_argument("--level", choices=("coarse", "full"), default="full")
    p_ver.add_argument("--threads", type=int, default=None)

    p_sweep = sub.add_parser("sweep", help="run several fan counts")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--fans", required=True,
                         help="comma-separated fan counts, e.g. 2,4")
    p_sweep.add_argument("--flow-mode", choices=("per-fan", "total"),
                         default=None)
    p_sweep.add_argument("--out", default="sweep_out")
    p_sweep.add_argument("--threads", type=int, default=None)
    p_sweep.add_argument("--log-every", type=int, default=None)
    p_sweep.add_argument("--quiet", action="store_true")

    p_cmp = sub.add_parser("compare", help="compare two result directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    return parser


def _load_case(path):
    from .config import emit_config, load_config, to_case
    cfg = load_config(path)
    case, geom = to_case(cfg)
    return cfg, case, geom, emit_config(cfg)


def _run_one(cfg, case, geom, echo, outdir, quiet, log_every):
    from .cases import transformer_metrics
    from .solver import run_steady
    from .vtk_io import write_bundle

    if log_every is not None:
        case.controls.log_every = log_every
    log = (lambda msg: None) if quiet else print
    result = run_steady(case, log=log)
    metrics = transformer_metrics(result, geom)
    write_bundle(result, outdir, metrics=metrics, config_text=echo,
                 fields=cfg.get("output.fields",
                                ("T", "p", "k", "eps", "mu_t", "velocity")))
    if not quiet:
        print(f"{case.name}: {result.status} after {result.iterations} "
              f"iterations ({result.runtime_s:.1f} s)")
        print(f"  peak winding T "
              f"{metrics['peak_winding_temperature_k'] - 273.15:.2f} C, "
              f"outlet rise {metrics['outlet_delta_t_k']:+.2f} K, "
              f"channel flux share "
              f"{metrics['mid_height_channel_flux_ratio']:.3f}")
        print(f"  results in {outdir}")
    return result, metrics


def cmd_run(args):
    _set_threads(args.threads)
    from .cases import CaseError
    from .config import ConfigError

    try:
        cfg, case, geom, echo = _load_case(args.config)
    except (ConfigError, CaseError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = args.out or f"{case.name}_out"
    result, _ = _run_one(cfg, case, geom, echo, outdir, args.quiet,
                         args.log_every)
    if result.status == "diverged":
        print(f"run diverged: {result.message}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_verify(args):
    _set_threads(args.threads)
    from .cases import run_battery

    print(f"verification battery, level {args.level}")
    rows = run_battery(args.level, log=print)
    n_pass = sum(r["passed"] for r in rows)
    print(f"{n_pass}/{len(rows)} checks passed")
    return EXIT_OK if n_pass == len(rows) else EXIT_VERIFY_FAILED


def cmd_sweep(args):
    _set_threads(args.threads)
    from .cases import CaseError, format_comparison
    from .config import ConfigError, emit_config, to_case

    try:
        from .config import load_config
        base = load_config(args.config)
        counts = [int(tok) for tok in args.fans.split(",") if tok.strip()]
        if not counts:
            raise ConfigError("--fans lists no counts")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    runs = []
    for n in counts:
        cfg = dict(base)
        cfg["transformer.fan_count"] = n
        if args.flow_mode is not None:
            cfg["transformer.flow_mode"] = args.flow_mode
        cfg["case.name"] = f"{base.get('case.name', 'transformer')}_fans{n}"
        try:
            case, geom = to_case(cfg)
        except (ConfigError, CaseError) as exc:
            print(f"configuration error for {n} fans: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        outdir = os.path.join(args.out, f"fans_{n}")
        result, metrics = _run_one(cfg, case, geom, emit_config(cfg), outdir,
                                   args.quiet, args.log_every)
        runs.append((n, result, metrics))

    reports = []
    for (na, _, ma), (nb, _, mb) in zip(runs, runs[1:]):
        reports.append(format_comparison(ma, mb))
    report = "\n\n".join(reports)
    if report:
        print(report)
        with open(os.path.join(args.out, "comparison.txt"), "w") as fh:
            fh.write(report + "\n")
    with open(os.path.join(args.out, "sweep_summary.json"), "w") as fh:
        json.dump({f"fans_{n}": m for n, _, m in runs}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    if any(r.status == "diverged" for _, r, _ in runs):
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_compare(args):
    from .cases import format_comparison

    metrics = []
    for d in (args.dir_a, args.dir_b):
        path = os.path.join(d, "summary.json")
        try:
            with open(path) as fh:
                summary = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"cannot read {path}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if "metrics" not in summary:
            print(f"{path} holds no case metrics", file=sys.stderr)
            return EXIT_CONFIG
        metrics.append(summary["metrics"])
    print(format_comparison(metrics[0], metrics[1]))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "run": cmd_run,
        "verify": cmd_verify,
        "sweep": cmd_sweep,
        "compare": cmd_compare,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
