"""Experiment runner: Monte Carlo RMSE sweeps, isometry sweeps, bound reports.

Every CSV written here starts with a ``# config: {...}`` line holding the full
experiment configuration as JSON (including a ``kind`` tag naming the schema),
so :func:`verify_csv` can re-parse and validate any output file on its own.
"""
from __future__ import annotations

import io
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .bounds import (BoundCurve, crb_curve, required_measurements, slope_threshold, zzb_curve,
                     zzb_threshold)
from .estimator import EstimatorConfig, ProjectedColumns, estimate_batch, periodic_error
from .isometry import (IsometryReport, SamplerSpec, empirical_isometry, single_sinusoid_regime_constants,
                       sufficient_measurements_mixture, tangent_singular_value_closed_form)
from .signal_manifold import SinusoidManifold
from .measurement import identity_matrix, sample_matrix

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

IDENTITY_LABEL = "I"
MIN_TRIALS_FOR_THRESHOLD = 100

RMSE_HEADER = "M,snr_db,rmse_rad,trials"
BOUNDS_HEADER = "snr_db,value,kind"
ISOMETRY_HEADER = IsometryReport.CSV_HEADER
SUFFICIENCY_HEADER = "mode,N,K,epsilon,delta,fail_prob,M"
HEADERS = {"rmse": RMSE_HEADER, "bounds": BOUNDS_HEADER, "isometry": ISOMETRY_HEADER,
           "sufficiency": SUFFICIENCY_HEADER}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment's output.

    The SNR grid is the effective per-measurement SNR ``M/(N sigma^2)`` in dB,
    given either as ``snr_grid_db`` or as ``snr_min_db``/``snr_max_db``/``snr_step_db``.
    """

    N: int = 256
    M_list: list = field(default_factory=lambda: [10, 25, 40, 60, 256])
    include_identity: bool = True
    snr_min_db: float = -30.0
    snr_max_db: float = 10.0
    snr_step_db: float = 0.5
    snr_grid_db: list | None = None
    trials: int = 2000
    seed: int = 0
    window: str = "ones"
    normalization: str = "unit_modulus"
    distribution: str = "qpsk"
    grid_factor: int = 4
    newton_rounds: int = 3
    clamp: bool = True
    slope_tolerance_zzb: float = 0.01
    slope_tolerance_rmse: float = 0.02
    window_db: float = 6.0
    sigma2: list = field(default_factory=lambda: [1.0])
    isometry_floor_M: int = 40
    iso_grid_factor: int = 4
    iso_phases: int = 16
    iso_gain_ratios: int = 8
    suff_K: list = field(default_factory=lambda: [1, 2])
    suff_epsilon: list = field(default_factory=lambda: [0.25, 0.5])
    suff_delta: list = field(default_factory=lambda: [0.1])
    suff_fail_prob: float = 0.01
    out: str = "results"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.N < 2:
            raise ConfigError("N must be >= 2")
        if any(int(m) < 1 or int(m) > self.N for m in self.M_list):
            raise ConfigError(f"every M must lie in [1, N={self.N}]")
        grid = self.snr_grid()
        if grid.size == 0 or np.any(np.diff(grid) <= 0):
            raise ConfigError("snr grid must be nonempty and strictly ascending")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")

    def snr_grid(self) -> np.ndarray:
        if self.snr_grid_db is not None:
            return np.asarray(self.snr_grid_db, dtype=float)
        n = int(round((self.snr_max_db - self.snr_min_db) / self.snr_step_db))
        return self.snr_min_db + self.snr_step_db * np.arange(n + 1)

    def to_dict(self) -> dict:
        return asdict(self)

    def manifold(self) -> SinusoidManifold:
        return SinusoidManifold(self.N, self.window, self.normalization)

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(self.grid_factor * self.N, self.newton_rounds, self.clamp)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        flat = {}
        for key, value in data.items():
            # tables such as [estimator] are flattened
            items = value.items() if isinstance(value, dict) else [(key, value)]
            for k, v in items:
                if k not in names:
                    raise ConfigError(f"unknown config key {k!r}")
                flat[k] = v
        try:
            return cls(**flat)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_toml(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(data)

    def replace(self, **overrides) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in overrides.items() if v is not None})
        return type(self).from_dict(d)


# -- Monte Carlo RMSE ----------------------------------------------------------

@dataclass(eq=False)
class RmseCurve:
    M: int | str
    snr_grid_db: np.ndarray
    rmse: np.ndarray
    trials: np.ndarray
    rmse_threshold_db: float | None
    warning: str | None = None
    clamped_fraction: np.ndarray | None = None

    def mse(self) -> np.ndarray:
        return self.rmse**2


def _snr_key(snr_db: float) -> int:
    # millidecibels, offset to stay non-negative; draws at an SNR do not depend on the rest of the grid
    return int(round(snr_db * 1000.0)) + 1_000_000


def _trial_draws(seed: int, m_code: int, snr_key: int, n_trials: int, M: int):
    """Per-trial streams keyed by (seed, M, SNR key, trial index)."""
    omega = np.empty(n_trials)
    phase = np.empty(n_trials)
    noise = np.empty((n_trials, M), dtype=np.complex128)
    for t in range(n_trials):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, m_code, snr_key, t])))
        omega[t], phase[t] = rng.random(2) * (2 * np.pi)
        z = rng.standard_normal(2 * M)
        noise[t] = z[:M] + 1j * z[M:]
    return omega, phase, noise


def rmse_for_matrix(config: ExperimentConfig, matrix, label, m_code: int) -> RmseCurve:
    """Sweep the SNR grid for one measurement matrix."""
    manifold = config.manifold()
    ecfg = config.estimator_config()
    cache = ProjectedColumns(matrix, manifold, ecfg.resolved_grid_size(config.N))
    A = cache.operator
    M = A.shape[0]
    energy = manifold.energy
    snr = config.snr_grid()
    rmse = np.empty(snr.size)
    clamped = np.empty(snr.size)
    for i, s in enumerate(snr):
        # effective SNR M/(N sigma^2) for a signal of energy N, rescaled for other normalizations
        sigma2 = M * energy / (config.N * config.N * 10.0 ** (s / 10.0))
        omega, phase, z = _trial_draws(config.seed, m_code, _snr_key(s), config.trials, M)
        Y = (np.exp(1j * phase) * (A @ manifold.atoms(omega))).T + np.sqrt(sigma2 / 2.0) * z
        out = estimate_batch(Y, cache, ecfg.newton_rounds, ecfg.clamp, ecfg.clamp_spacings)
        err = periodic_error(out["omega"], omega)
        rmse[i] = np.sqrt(np.mean(err**2))
        clamped[i] = np.mean(out["clamped"])
    warning = None
    if config.trials < MIN_TRIALS_FOR_THRESHOLD:
        warning = f"only {config.trials} trials per point; threshold detection is unreliable"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    thr = slope_threshold(snr, np.maximum(rmse, 1e-300) ** 2, config.slope_tolerance_rmse, config.window_db)
    return RmseCurve(label, snr, rmse, np.full(snr.size, config.trials), thr, warning, clamped)


def run_rmse_sweep(config: ExperimentConfig) -> list[RmseCurve]:
    """One curve per M (same matrix at every SNR), plus the identity reference if enabled."""
    curves = []
    for M in config.M_list:
        A = sample_matrix(config.distribution, int(M), config.N, config.seed)
        curves.append(rmse_for_matrix(config, A, int(M), int(M)))
    if config.include_identity:
        curves.append(rmse_for_matrix(config, identity_matrix(config.N), IDENTITY_LABEL, 0))
    return curves


# -- isometry, bounds, sufficiency ----------------------------------------------

def run_isometry_sweep(config: ExperimentConfig) -> list[IsometryReport]:
    """Pairwise deviation extremes per M on the manifold ``{g e^{j phi} x(w)}``."""
    manifold = config.manifold()
    sampler = SamplerSpec("pairwise", config.iso_grid_factor, config.iso_phases, config.iso_gain_ratios)
    reports = []
    for M in config.M_list:
        A = sample_matrix(config.distribution, int(M), config.N, config.seed)
        reports.append(empirical_isometry(A, manifold, sampler))
    if config.include_identity:
        rep = empirical_isometry(identity_matrix(config.N), manifold, sampler)
        rep.M = IDENTITY_LABEL
        reports.append(rep)
    return reports


@dataclass(eq=False)
class BoundsReport:
    crb: BoundCurve
    zzb: BoundCurve
    threshold_db: float | None
    required_M: dict
    rule: str


def run_bounds_report(config: ExperimentConfig) -> BoundsReport:
    snr = config.snr_grid()
    zzb = zzb_curve(config.N, snr)
    crb = crb_curve(config.N, snr)
    thr = zzb_threshold(zzb, config.slope_tolerance_zzb, config.window_db)
    zzb.threshold_db = thr
    if thr is None:
        return BoundsReport(crb, zzb, None, {}, "no ZZB threshold on this grid")
    req = {float(s2): required_measurements(config.N, s2, thr) for s2 in config.sigma2}
    coef = required_measurements(config.N, 1.0, thr)
    rule = (f"ZZB threshold {thr:g} dB -> M > N sigma^2 10^(thr/10) = {coef:.4g} sigma^2; "
            f"with the isometry floor: M >= max{{{config.isometry_floor_M}, {coef:.4g} sigma^2}}")
    return BoundsReport(crb, zzb, thr, req, rule)


def run_sufficiency_report(N, K_list, epsilon_list, delta_list, fail_prob,
                           window: str | None = None) -> list[dict]:
    """Table of sufficient measurement counts.

    Rows cover pairwise and tangent-plane modes over the parameter grid. When
    ``window`` is given, single-sinusoid rows are added per epsilon: a close
    regime (tangent plane at eps/2, delta = sqrt(1 - tau chi)) and a far regime
    (pairwise, K=2, delta from the regime constants); the guarantee needs both.
    """
    rows = []
    for K in K_list:
        for eps in epsilon_list:
            for delta in delta_list:
                for mode in ("pairwise", "tangent_plane"):
                    m = sufficient_measurements_mixture(N, int(K), eps, delta, fail_prob, mode)
                    rows.append({"mode": mode, "N": N, "K": int(K), "epsilon": eps, "delta": delta,
                                 "fail_prob": fail_prob, "M": m})
    if window is not None:
        manifold = SinusoidManifold(N, window, "unit_energy")
        sig_t = tangent_singular_value_closed_form(manifold)
        for eps in epsilon_list:
            rc = single_sinusoid_regime_constants(manifold, eps)
            m_close = sufficient_measurements_mixture(N, 1, eps / 2, sig_t, fail_prob, "tangent_plane")
            m_far = sufficient_measurements_mixture(N, 2, eps, rc.sigma_signal_bound, fail_prob, "pairwise")
            rows.append({"mode": f"single_close[{window}]", "N": N, "K": 1, "epsilon": eps / 2,
                         "delta": sig_t, "fail_prob": fail_prob, "M": m_close})
            rows.append({"mode": f"single_far[{window}]", "N": N, "K": 2, "epsilon": eps,
                         "delta": rc.sigma_signal_bound, "fail_prob": fail_prob, "M": m_far})
            rows.append({"mode": f"single[{window}]", "N": N, "K": 1, "epsilon": eps,
                         "delta": rc.sigma_signal_bound, "fail_prob": fail_prob, "M": max(m_close, m_far)})
    return rows


# -- CSV output -----------------------------------------------------------------

def _config_line(kind: str, config: dict) -> str:
    return f"# config: {json.dumps({'kind': kind, **config}, sort_keys=True)}\n"


def rmse_csv(curves: list[RmseCurve], config: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(_config_line("rmse", config.to_dict()))
    thr = {str(c.M): c.rmse_threshold_db for c in curves}
    buf.write(f"# threshold_db: {json.dumps(thr)}\n")
    warn = [c.warning for c in curves if c.warning]
    if warn:
        buf.write(f"# warning: {warn[0]}\n")
    buf.write(RMSE_HEADER + "\n")
    for c in curves:
        for s, r, t in zip(c.snr_grid_db, c.rmse, c.trials):
            buf.write(f"{c.M},{float(s)!r},{float(r)!r},{int(t)}\n")
    return buf.getvalue()


def bounds_csv(report: BoundsReport, config: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(_config_line("bounds", config.to_dict()))
    thr = "none" if report.threshold_db is None else repr(float(report.threshold_db))
    buf.write(f"# threshold_db: {thr}\n")
    buf.write(f"# required_M: {json.dumps({repr(k): v for k, v in report.required_M.items()})}\n")
    buf.write(BOUNDS_HEADER + "\n")
    for curve in (report.crb, report.zzb):
        for s, v in zip(curve.snr_grid_db, curve.values):
            buf.write(f"{float(s)!r},{float(v)!r},{curve.kind.value}\n")
    return buf.getvalue()


def isometry_csv(reports: list[IsometryReport], config: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(_config_line("isometry", {**config.to_dict(), "sampler": reports[0].config if reports else {}}))
    buf.write(ISOMETRY_HEADER + "\n")
    for r in reports:
        buf.write(r.csv_row() + "\n")
    return buf.getvalue()


def sufficiency_csv(rows: list[dict], params: dict) -> str:
    buf = io.StringIO()
    buf.write(_config_line("sufficiency", params))
    buf.write(SUFFICIENCY_HEADER + "\n")
    cols = SUFFICIENCY_HEADER.split(",")
    for row in rows:
        buf.write(",".join(repr(float(row[c])) if isinstance(row[c], (float, np.floating)) else str(row[c]) for c in cols) + "\n")
    return buf.getvalue()


def write_text(path, text: str) -> Path:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


class VerificationError(ValueError):
    pass


def regenerate_csv(config: dict) -> str:
    """Rebuild an output file from its embedded ``# config:`` dictionary."""
    config = dict(config)
    kind = config.pop("kind")
    if kind == "sufficiency":
        rows = run_sufficiency_report(config["N"], config["K"], config["epsilon"], config["delta"],
                                      config["fail_prob"], config.get("window"))
        return sufficiency_csv(rows, config)
    config.pop("sampler", None)
    cfg = ExperimentConfig.from_dict(config)
    if kind == "rmse":
        return rmse_csv(run_rmse_sweep(cfg), cfg)
    if kind == "bounds":
        return bounds_csv(run_bounds_report(cfg), cfg)
    return isometry_csv(run_isometry_sweep(cfg), cfg)


def verify_csv(path_or_text, recompute: bool = False) -> dict:
    """Re-parse an output CSV and check its embedded config and schema.

    With ``recompute=True`` the output is regenerated from the embedded config
    and must match the file byte for byte.

    Returns a summary ``{"kind", "rows", "config"}``; raises
    :class:`VerificationError` on any inconsistency.
    """
    text = str(path_or_text)
    if "\n" not in text:
        text = Path(text).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# config: "):
        raise VerificationError("first line must be '# config: {...}'")
    try:
        config = json.loads(lines[0][len("# config: "):])
    except json.JSONDecodeError as exc:
        raise VerificationError(f"config line is not valid JSON: {exc}") from exc
    kind = config.get("kind")
    if kind not in HEADERS:
        raise VerificationError(f"unknown output kind {kind!r}")
    if kind != "sufficiency":
        try:
            ExperimentConfig.from_dict({k: v for k, v in config.items() if k not in ("kind", "sampler")})
        except (ConfigError, ValueError) as exc:
            raise VerificationError(f"embedded config does not validate: {exc}") from exc
    body = [ln for ln in lines[1:] if not ln.startswith("#") and ln.strip()]
    if not body or body[0] != HEADERS[kind]:
        raise VerificationError(f"expected header {HEADERS[kind]!r}")
    meta = {ln.split(":", 1)[0][2:]: ln.split(":", 1)[1].strip() for ln in lines[1:] if ln.startswith("# ")}
    ncol = len(HEADERS[kind].split(","))
    for i, row in enumerate(body[1:], start=1):
        parts = row.split(",")
        if len(parts) != ncol:
            raise VerificationError(f"row {i} has {len(parts)} fields, expected {ncol}")
        try:
            if kind == "rmse":
                float(parts[1]), float(parts[2]), int(parts[3])
                if parts[0] != IDENTITY_LABEL:
                    int(parts[0])
            elif kind == "bounds":
                float(parts[0]), float(parts[1])
                if parts[2] not in ("CRB", "ZZB"):
                    raise ValueError(parts[2])
            elif kind == "isometry":
                [float(p) for p in parts[1:]]
            else:
                int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4]), float(parts[5]), int(parts[6])
        except ValueError as exc:
            raise VerificationError(f"row {i} does not match the {kind} schema: {row!r}") from exc
    if kind in ("rmse", "bounds") and "threshold_db" not in meta:
        raise VerificationError("missing '# threshold_db:' line")
    if recompute:
        fresh = regenerate_csv(config)
        if fresh != text:
            diff = next((i for i, (a, b) in enumerate(zip(fresh.splitlines(), lines)) if a != b),
                        min(len(lines), len(fresh.splitlines())))
            raise VerificationError(f"recomputed output differs from the file at line {diff + 1}")
    return {"kind": kind, "rows": len(body) - 1, "config": config}
