"""Command line interface: ``python -m compest <subcommand> ...``.

Failures exit with status 2 and a single JSON line on stderr of the form
``{"error": "<ExceptionType>", "message": "..."}``.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .bounds import BoundCurve, BoundKind, zzb_curve, zzb_threshold
from .estimator import EstimatorConfig, estimate
from .signal_manifold import SinusoidManifold
from .measurement import (apply, load_matrix, load_measurements, philox, sample_matrix, save_matrix,
                          save_measurements)


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _common(p: argparse.ArgumentParser, trials: bool = False) -> None:
    p.add_argument("--config", help="TOML config file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--N", type=int, dest="N")
    p.add_argument("--snr-min", type=float, dest="snr_min_db")
    p.add_argument("--snr-max", type=float, dest="snr_max_db")
    p.add_argument("--snr-step", type=float, dest="snr_step_db")
    if trials:
        p.add_argument("--trials", type=int)


def _matrix_flags(p):
    p.add_argument("--M", type=int, nargs="+", dest="M_list", help="measurement counts")
    p.add_argument("--distribution", choices=["qpsk", "rademacher", "gaussian"])
    p.add_argument("--no-identity", action="store_false", dest="include_identity", default=None,
                   help="skip the Phi = I reference")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="compest", description="Compressive frequency estimation toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="CRB and ZZB curves, ZZB threshold, required M")
    _common(p)
    p.add_argument("--sigma2", type=float, nargs="+")

    p = sub.add_parser("zzb-threshold", help="detect the ZZB threshold")
    _common(p)
    p.add_argument("--input", help="bounds CSV to read instead of computing the ZZB")
    p.add_argument("--slope-tolerance", type=float, dest="slope_tolerance_zzb")
    p.add_argument("--window-db", type=float, dest="window_db")

    p = sub.add_parser("isometry", help="pairwise isometry deviation per M")
    _common(p)
    _matrix_flags(p)

    p = sub.add_parser("sufficiency", help="sufficient measurement counts")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, help="accepted for uniformity; the table is deterministic")
    p.add_argument("--N", type=int, dest="N")
    p.add_argument("--K", type=int, nargs="+", dest="suff_K")
    p.add_argument("--epsilon", type=float, nargs="+", dest="suff_epsilon")
    p.add_argument("--delta", type=float, nargs="+", dest="suff_delta")
    p.add_argument("--fail-prob", type=float, dest="suff_fail_prob")
    p.add_argument("--window", help="add single-sinusoid rows for this window family")

    p = sub.add_parser("estimate", help="two-stage estimate from a measurement file")
    p.add_argument("measurements", help=".npz written by 'simulate' or save_measurements")
    p.add_argument("--grid-factor", type=int, default=4)
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--no-clamp", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("montecarlo", help="RMSE versus effective SNR sweep")
    _common(p, trials=True)
    _matrix_flags(p)

    p = sub.add_parser("verify", help="re-parse output CSVs and validate their headers")
    p.add_argument("files", nargs="+")
    p.add_argument("--recompute", action="store_true", help="regenerate from the embedded config and compare")

    p = sub.add_parser("make-matrix", help="draw a measurement matrix and save it")
    p.add_argument("--distribution", default="qpsk")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="write a noisy single-sinusoid measurement file")
    p.add_argument("--matrix", help="matrix file; default draws one from --distribution/--M/--seed")
    p.add_argument("--distribution", default="qpsk")
    p.add_argument("--M", type=int, default=40)
    p.add_argument("--N", type=int, default=256)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--snr-db", type=float, required=True, help="effective SNR M/(N sigma^2) in dB")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return ap


_OVERRIDE_KEYS = ("seed", "trials", "N", "snr_min_db", "snr_max_db", "snr_step_db", "M_list", "distribution",
                  "include_identity", "sigma2", "slope_tolerance_zzb", "window_db", "suff_K",
                  "suff_epsilon", "suff_delta", "suff_fail_prob")


def _config(args) -> harness.ExperimentConfig:
    overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS if getattr(args, k, None) is not None}
    if args.config:
        return harness.ExperimentConfig.from_toml(args.config, overrides)
    return harness.ExperimentConfig.from_dict(overrides)


def _emit(text: str, out) -> None:
    if out:
        harness.write_text(out, text)
    else:
        sys.stdout.write(text)


def _info(obj) -> None:
    sys.stderr.write(json.dumps(obj) + "\n")


def cmd_bounds(args):
    cfg = _config(args)
    rep = harness.run_bounds_report(cfg)
    _emit(harness.bounds_csv(rep, cfg), args.out)
    _info({"threshold_db": rep.threshold_db, "required_M": rep.required_M, "rule": rep.rule})


def cmd_zzb_threshold(args):
    cfg = _config(args)
    if args.input:
        curves = [c for c in BoundCurve.from_csv(args.input) if c.kind is BoundKind.ZZB]
        if not curves:
            raise ValueError(f"{args.input} holds no ZZB curve")
        curve = curves[0]
    else:
        curve = zzb_curve(cfg.N, cfg.snr_grid())
    thr = zzb_threshold(curve, cfg.slope_tolerance_zzb, cfg.window_db)
    text = json.dumps({"threshold_db": thr, "N": curve.config.get("N", cfg.N),
                       "slope_tolerance": cfg.slope_tolerance_zzb, "window_db": cfg.window_db}) + "\n"
    _emit(text, args.out)


def cmd_isometry(args):
    cfg = _config(args)
    reports = harness.run_isometry_sweep(cfg)
    _emit(harness.isometry_csv(reports, cfg), args.out)


def cmd_sufficiency(args):
    cfg = _config(args)
    rows = harness.run_sufficiency_report(cfg.N, cfg.suff_K, cfg.suff_epsilon, cfg.suff_delta,
                                          cfg.suff_fail_prob, args.window)
    params = {"N": cfg.N, "K": cfg.suff_K, "epsilon": cfg.suff_epsilon, "delta": cfg.suff_delta,
              "fail_prob": cfg.suff_fail_prob, "window": args.window}
    _emit(harness.sufficiency_csv(rows, params), args.out)


def cmd_montecarlo(args):
    cfg = _config(args)
    curves = harness.run_rmse_sweep(cfg)
    _emit(harness.rmse_csv(curves, cfg), args.out)
    _info({"thresholds_db": {str(c.M): c.rmse_threshold_db for c in curves}})


def cmd_estimate(args):
    y, matrix, meta = load_measurements(args.measurements)
    manifold = SinusoidManifold(int(meta.get("N", matrix.cols)), meta.get("window", "ones"),
                                meta.get("normalization", "unit_modulus"))
    cfg = EstimatorConfig(args.grid_factor * manifold.n_samples, args.rounds, not args.no_clamp)
    res = estimate(y, matrix, manifold, cfg)
    out = {"omega_hat": res.omega_hat, "gain_hat": [res.gain_hat.real, res.gain_hat.imag],
           "coarse_omega": res.coarse_omega, "converged": res.converged, "clamped": res.clamped,
           "newton_trace": res.newton_trace}
    _emit(json.dumps(out) + "\n", args.out)


def cmd_verify(args):
    for path in args.files:
        summary = harness.verify_csv(path, args.recompute)
        print(json.dumps({"file": path, "ok": True, "kind": summary["kind"], "rows": summary["rows"],
                          "recomputed": args.recompute}))


def cmd_make_matrix(args):
    save_matrix(args.out, sample_matrix(args.distribution, args.M, args.N, args.seed))


def cmd_simulate(args):
    A = load_matrix(args.matrix) if args.matrix else sample_matrix(args.distribution, args.M, args.N, args.seed)
    manifold = SinusoidManifold(A.cols, "ones", "unit_modulus")
    sigma2 = A.rows / (A.cols * 10.0 ** (args.snr_db / 10.0))
    rng = philox(args.seed, A.rows, A.cols, 99)
    z = np.sqrt(sigma2 / 2.0) * (rng.standard_normal(A.rows) + 1j * rng.standard_normal(A.rows))
    y = apply(A, manifold.atoms(args.omega)) + z
    save_measurements(args.out, y, A, N=A.cols, window="ones", normalization="unit_modulus",
                      omega=args.omega, snr_db=args.snr_db, sigma2=sigma2, seed=args.seed)


COMMANDS = {
    "bounds": cmd_bounds, "zzb-threshold": cmd_zzb_threshold, "isometry": cmd_isometry,
    "sufficiency": cmd_sufficiency, "estimate": cmd_estimate, "montecarlo": cmd_montecarlo,
    "verify": cmd_verify, "make-matrix": cmd_make_matrix, "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one machine-readable line
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
