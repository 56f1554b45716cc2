"""Command-line entry points.

Subcommands
-----------
sample        draw systems, solve them, dump spectra/coefficients and zeros
density       compute the theory density only
compare       full pipeline: theory vs empirical zero statistics
kernel-check  run the Stirling-envelope and kernel-convergence invariants
convergence   per-N metric table over run.N_list

Exit codes: 0 success, 2 configuration error, 3 numeric failure-rate breach.
"""
from __future__ import annotations

import argparse
import sys

from . import harness
from .solver import SolverFailureRateError


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="TOML experiment configuration")
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.add_argument("--out", default=None, help="override output.dir")
    p.add_argument("--threads", type=int, default=None, help="override run.threads")
    p.add_argument("--verbose", action="store_true")


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.from_toml(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fewnomials", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sample", "density", "compare", "convergence"):
        _add_common(sub.add_parser(name))
    kc = sub.add_parser("kernel-check")
    kc.add_argument("--config", default=None, help="optional; unused by the invariant suite")
    kc.add_argument("--seed", type=int, default=123)
    kc.add_argument("--out", default=None)
    kc.add_argument("--threads", type=int, default=None)
    kc.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    try:
        if args.command == "kernel-check":
            return _kernel_check(args)
        cfg = _load(args)
        if args.command == "sample":
            paths = harness.dump_samples(cfg, cfg.out_dir)
        elif args.command == "density":
            paths = _density_only(cfg)
        elif args.command == "compare":
            report = harness.run_experiment(cfg)
            paths = harness.emit_report(report, cfg.out_dir)
            if args.verbose:
                for key in sorted(report.metrics):
                    print(f"{key} = {report.metrics[key]}")
        elif args.command == "convergence":
            report = harness.convergence_study(cfg)
            paths = harness.emit_report(report, cfg.out_dir)
        else:  # pragma: no cover
            parser.error(f"unknown command {args.command}")
        if args.verbose:
            for path in paths:
                print(f"wrote {path}")
        return 0
    except harness.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SolverFailureRateError, FileNotFoundError) as exc:
        if isinstance(exc, FileNotFoundError):
            print(f"configuration error: {exc}", file=sys.stderr)
            return 2
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


def _density_only(cfg: harness.ExperimentConfig) -> list:
    from pathlib import Path

    from . import potentials as pot

    N = cfg.N if cfg.N is not None else (cfg.N_list[-1] if cfg.N_list else None)
    if N is None:
        raise harness.ConfigError(["run.N required"])
    dens, corners = harness.theory_density(cfg, N)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "density.csv"]
    pot.density_to_csv(dens, paths[0])
    if corners is not None:
        paths.append(out / "corners.csv")
        pot.corners_to_csv(corners, paths[-1])
    metrics = out / "metrics.csv"
    with open(metrics, "w") as fh:
        fh.write("metric,value\n")
        fh.write(f"theory_total,{dens.total_mass:.17g}\n")
    paths.append(metrics)
    return paths


def _kernel_check(args) -> int:
    if args.out is not None:
        from pathlib import Path

        from .lattice import Spectrum, dilate_spectrum

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        base = Spectrum(points=((0,), (1,), (2,)), degree=2)
        spec = dilate_spectrum(base, 50)
        harness.dump_kernel_csv(spec, 100, out / "kernel.csv")
        print(f"wrote {out / 'kernel.csv'}")
    stirling = harness.stirling_envelope_check(seed=args.seed)
    print(
        f"stirling-envelopes: {'PASS' if stirling['passed'] else 'FAIL'} "
        f"(lower margin {stirling['worst_lower_margin']:.3f}, "
        f"upper margin {stirling['worst_upper_margin']:.3f}, "
        f"{stirling['checked']} exponent/point pairs)"
    )
    conv = harness.kernel_convergence_check()
    for row in conv["rows"]:
        print(f"kernel N={row['N']:4d}: sup error {row['sup_error']:.3e} <= bound {row['bound']:.3e}")
    print(f"kernel-convergence monotone: {'PASS' if conv['monotone'] else 'FAIL'}")
    print(f"kernel-convergence bounded:  {'PASS' if conv['within_bound'] else 'FAIL'}")
    ok = stirling["passed"] and conv["monotone"] and conv["within_bound"]
    return 0 if ok else 3


if __name__ == "__main__":
    raise SystemExit(main())
