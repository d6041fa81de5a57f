"""Command-line surface.

Subcommands: gen, estimate, sweep, sigma-bench, mse-check, verify, bounds.
Exit codes: 0 success, 1 failed audit or numerical failure, 2 I/O problems,
64 usage and validation problems.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import analysis, experiments
from .errors import ConfigError, NumericalFailure
from .estimator import (
    estimate_unknown_sigma,
    estimate_with_sigma,
    write_report_json,
)
from .metric import relative_error
from .model import (
    CLOUD_STREAM,
    SeedSpec,
    read_batch_meta,
    read_cloud_csv,
    regenerate_batch,
    sample_cloud,
    write_batch_meta,
    write_cloud_csv,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_IO = 2
EXIT_USAGE = 64


def _fmt(value: float) -> str:
    """12 significant digits: the stable human-readable format."""
    return format(float(value), ".12g")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------- #
# Subcommands
# --------------------------------------------------------------------------- #

def cmd_gen(args) -> int:
    if args.sigma < 0:
        raise ConfigError(f"--sigma must be nonnegative, got {args.sigma}")
    if args.n < 1:
        raise ConfigError(f"--n must be positive, got {args.n}")
    cloud = sample_cloud(args.d, args.k, SeedSpec(args.seed, CLOUD_STREAM),
                         unit_frobenius=args.unit_frobenius)
    # The meta file stores an absolute cloud path so `estimate` resolves it
    # from any working directory.
    cloud_path = os.path.abspath(args.out_cloud)
    write_cloud_csv(cloud, cloud_path)
    write_batch_meta(args.out_meta, d=args.d, k=args.k, sigma=args.sigma,
                     n=args.n, master_seed=args.seed, cloud_csv=cloud_path,
                     unit_frobenius=args.unit_frobenius)
    print(f"wrote {cloud_path} and {args.out_meta}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    meta = read_batch_meta(args.meta)
    cloud = read_cloud_csv(meta["cloud_csv"])
    batch = regenerate_batch(meta, cloud)
    if args.sigma_known:
        report = estimate_with_sigma(batch, float(meta["sigma"]))
    else:
        report = estimate_unknown_sigma(batch)
    write_cloud_csv(report.cloud_estimate, args.out)
    write_report_json(report, args.out + ".json")
    rho_rel = relative_error(cloud, report.cloud_estimate)
    print(f"rho_rel={_fmt(rho_rel)} sigma_hat={_fmt(report.sigma_used)} "
          f"eigengap={_fmt(report.eigengap)}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = (experiments.load_sweep_config(args.config)
              if args.config else experiments.SweepConfig())
    result = experiments.run_phase_transition(config, threads=args.threads)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "grid.csv")
    experiments.write_grid_csv(result, path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_sigma_bench(args) -> int:
    if args.config:
        cfg = experiments.load_sigma_bench_config(args.config)
    else:
        cfg = {"d": 3, "k": 100, "sigma": 1.0, "n_grid": (100, 1000, 10000),
               "repetitions": 100, "master_seed": 0}
    rows = experiments.run_sigma_benchmark(**cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "sigma_bench.csv")
    experiments.write_sigma_csv(rows, path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_mse_check(args) -> int:
    if args.config:
        cfg = experiments.load_mse_config(args.config)
    else:
        cfg = {"d": 2, "k": 10, "sigma_list": (2.0,), "n_list": (100,),
               "trials": 2000, "master_seed": 0, "sampler": "direct",
               "unit_frobenius": True}
    result = experiments.run_mse_validation(**cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "mse.csv")
    experiments.write_mse_csv(result, path)
    low = _fmt(result.slope_low) if result.slope_low is not None else "nan"
    high = _fmt(result.slope_high) if result.slope_high is not None else "nan"
    print(f"wrote {path}")
    print(f"slope_low={low} slope_high={high}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.config:
        cfg = experiments.load_verify_config(args.config)
    else:
        cfg = {"trials": 1000, "master_seed": 0}
    records = experiments.run_stability_audit(cfg["trials"], cfg["master_seed"],
                                              inject_fault=args.inject_fault)
    for record in records:
        print(json.dumps(record.to_json(), sort_keys=True))
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        experiments.write_audit_jsonl(records,
                                      os.path.join(args.out_dir, "audits.jsonl"))
    return EXIT_OK if all(r.passed for r in records) else EXIT_FAILURE


# Formula registry: name -> (parameter names, int-valued parameters, evaluator).
_BOUNDS = {
    "gram_inversion": (("sigma_d", "gap"), (),
                       lambda p: analysis.gram_inversion_bound(p["sigma_d"], p["gap"])),
    "tu_lipschitz": (("sigma_d", "gap"), (),
                     lambda p: analysis.tu_lipschitz_bound(p["sigma_d"], p["gap"])),
    "gram_diff": (("opnorm_x1", "rho"), (),
                  lambda p: analysis.gram_diff_upper_bound(p["opnorm_x1"], p["rho"])),
    "concentration": (("d", "k", "n", "sigma", "opnorm_x", "delta"), ("d", "k", "n"),
                      lambda p: analysis.concentration_bound(
                          p["d"], p["k"], p["n"], p["sigma"],
                          p["opnorm_x"], p["delta"])),
    "gram_mse": (("d", "k", "n", "sigma", "frob2_x"), ("d", "k", "n"),
                 lambda p: analysis.expected_gram_mse(
                     p["d"], p["k"], p["n"], p["sigma"], p["frob2_x"])),
    "oracle_mse": (("d", "k", "n", "sigma"), ("d", "k", "n"),
                   lambda p: analysis.oracle_mle_mse(p["d"], p["k"], p["n"], p["sigma"])),
    "sign_test": (("norm_x", "sigma"), (),
                  lambda p: analysis.sign_test_error(p["norm_x"], p["sigma"])),
    "delta_l": (("d", "l", "rho"), ("d", "l"),
                lambda p: analysis.delta_l_bound(p["d"], p["l"], p["rho"])),
}


def _parse_params(text: str, names, int_names) -> dict:
    params = {}
    for item in text.split(","):
        if "=" not in item:
            raise ConfigError(f"--params items must look like name=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in names:
            raise ConfigError(f"unknown parameter {key!r} (expected: {', '.join(names)})")
        try:
            value = float(raw)
        except ValueError as exc:
            raise ConfigError(f"parameter {key}={raw!r} is not a number") from exc
        if key in int_names:
            if value != int(value):
                raise ConfigError(f"parameter {key} must be an integer, got {raw}")
            value = int(value)
        params[key] = value
    missing = [name for name in names if name not in params]
    if missing:
        raise ConfigError(f"missing parameters: {', '.join(missing)}")
    return params


def cmd_bounds(args) -> int:
    if args.formula not in _BOUNDS:
        raise ConfigError(
            f"unknown formula {args.formula!r} "
            f"(known: {', '.join(sorted(_BOUNDS))})"
        )
    names, int_names, evaluate = _BOUNDS[args.formula]
    result = evaluate(_parse_params(args.params, names, int_names))
    if isinstance(result, analysis.BoundReport):
        if not result.applicable:
            print("not_applicable")
            return EXIT_OK
        result = result.value
    print(_fmt(result))
    return EXIT_OK


# --------------------------------------------------------------------------- #
# Parser assembly
# --------------------------------------------------------------------------- #

def build_parser() -> _Parser:
    parser = _Parser(prog="gramcloud",
                     description="Point-cloud estimation from rotated noisy "
                                 "observations: generation, estimation, "
                                 "experiment sweeps, and bound verification.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen", help="generate a cloud and batch metadata")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-cloud", required=True)
    p.add_argument("--out-meta", required=True)
    p.add_argument("--unit-frobenius", action="store_true",
                   help="scale the cloud to unit Frobenius norm")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("estimate", help="regenerate a batch and estimate the cloud")
    p.add_argument("--meta", required=True)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--sigma-known", dest="sigma_known", action="store_true")
    mode.add_argument("--sigma-unknown", dest="sigma_known", action="store_false")
    p.add_argument("--out", required=True,
                   help="estimate CSV path; a JSON sidecar is written at <out>.json")
    p.set_defaults(func=cmd_estimate)

    for name, func, with_fault in (("sweep", cmd_sweep, False),
                                   ("sigma-bench", cmd_sigma_bench, False),
                                   ("mse-check", cmd_mse_check, False),
                                   ("verify", cmd_verify, True)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (defaults when omitted)")
        p.add_argument("--out-dir", required=(name != "verify"),
                       help="directory for result files")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes (affects the sweep; results are "
                            "identical for any value)")
        if with_fault:
            p.add_argument("--inject-fault", action="store_true",
                           help="deliberately break one bound so the audit "
                                "fails (tests the failure path)")
        p.set_defaults(func=func)

    p = sub.add_parser("bounds", help="evaluate one closed-form bound or formula")
    p.add_argument("--formula", required=True)
    p.add_argument("--params", required=True,
                   help="comma-separated name=value pairs")
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"gramcloud: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"gramcloud: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        # Covers the package's validation errors (dimension, degeneracy, PSD).
        print(f"gramcloud: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"gramcloud: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
