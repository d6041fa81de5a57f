"""Seeded Monte-Carlo campaigns over the (sigma, N) plane.

Every trial's randomness comes from ``derive_seed(master_seed, cell, rep)``,
so results are a pure function of the configuration: schedules, thread
counts, and platforms do not change a single output bit. Results are
persisted as CSV with 17 significant digits (full float64 round-trip).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import analysis
from .errors import ConfigError, NumericalFailure
from .estimator import GramEstimate, estimate_from_gram, estimate_sigma, gram_mean
from .metric import procrustes_distance, relative_error
from .model import (
    Cloud,
    SeedSpec,
    absorb64,
    format_float,
    mix64,
    sample_cloud,
    sample_gram_mean,
    sample_observations,
)

# Reserved cell indices, outside the 32-bit range real grid cells occupy, so
# cloud draws and audit streams never collide with per-cell batch streams.
_CLOUD_CELL = 1 << 32
_AUDIT_CELL_BASE = 1 << 33

# Stream indices inside one derived SeedSpec.
_DRAW_STREAM = 0
_CELL_CLOUD_STREAM = 1


def derive_seed(master_seed: int, cell: int, repetition: int) -> SeedSpec:
    """Hash (master, cell, repetition) into an independent RNG stream.

    Pure 64-bit integer mixing (two absorption rounds of an avalanche hash),
    so the mapping is identical on every platform and distinct triples give
    distinct streams in practice.
    """
    key = absorb64(absorb64(mix64(master_seed), cell), repetition)
    return SeedSpec(master_seed=key, stream_index=_DRAW_STREAM)


# --------------------------------------------------------------------------- #
# Configuration
# --------------------------------------------------------------------------- #

def _default_sigma_grid() -> tuple[float, ...]:
    return tuple(float(v) for v in np.geomspace(1e-2, 1e2, 16))


def _default_n_grid() -> tuple[int, ...]:
    return tuple(int(round(v)) for v in np.geomspace(10, 1e5, 16))


@dataclass(frozen=True)
class SweepConfig:
    """Full description of one phase-transition sweep.

    ``sampler`` selects how batches are realized: "direct" materializes
    observations; "gram" draws the averaged Gram matrix from its exact law,
    which is distributionally identical and reaches batch sizes that could
    never be materialized. ``resample_cloud`` switches from one fixed cloud
    per sweep (the default) to a fresh cloud per repetition.
    """

    d: int = 3
    k: int = 100
    sigma_grid: tuple[float, ...] = ()
    n_grid: tuple[int, ...] = ()
    repetitions: int = 10
    master_seed: int = 0
    sigma_known: bool = True
    error_cap: float = 1.0
    resample_cloud: bool = False
    unit_frobenius: bool = True
    sampler: str = "direct"

    def __post_init__(self):
        if not self.sigma_grid:
            object.__setattr__(self, "sigma_grid", _default_sigma_grid())
        if not self.n_grid:
            object.__setattr__(self, "n_grid", _default_n_grid())
        object.__setattr__(self, "sigma_grid",
                           tuple(float(v) for v in self.sigma_grid))
        object.__setattr__(self, "n_grid", tuple(int(v) for v in self.n_grid))
        if self.d < 1 or self.k < self.d:
            raise ConfigError(f"need k >= d >= 1, got d={self.d}, k={self.k}")
        for name, grid in (("sigma_grid", self.sigma_grid), ("n_grid", self.n_grid)):
            if any(v <= 0 for v in grid):
                raise ConfigError(f"{name} entries must be positive")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(f"{name} must be strictly increasing")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.error_cap <= 0:
            raise ConfigError(f"error_cap must be positive, got {self.error_cap}")
        if self.sampler not in ("direct", "gram"):
            raise ConfigError(f"sampler must be 'direct' or 'gram', got {self.sampler!r}")

    @property
    def cells(self) -> int:
        return len(self.sigma_grid) * len(self.n_grid)

    def cell_coords(self, cell: int) -> tuple[float, int]:
        return (self.sigma_grid[cell // len(self.n_grid)],
                self.n_grid[cell % len(self.n_grid)])


def _load_json_record(path, allowed: dict) -> dict:
    """Read a flat JSON object, rejecting unknown keys with line numbers."""
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level value must be a JSON object")
    for key in data:
        if key not in allowed:
            pos = text.find(f'"{key}"')
            line = text.count("\n", 0, pos) + 1 if pos >= 0 else 1
            raise ConfigError(
                f"{path}: line {line}: unknown key {key!r} "
                f"(allowed: {', '.join(sorted(allowed))})"
            )
    out = {}
    for key, value in data.items():
        try:
            out[key] = allowed[key](value)
        except (TypeError, ValueError) as exc:
            pos = text.find(f'"{key}"')
            line = text.count("\n", 0, pos) + 1 if pos >= 0 else 1
            raise ConfigError(f"{path}: line {line}: bad value for {key!r}: {exc}") from exc
    return out


def _as_int(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeError(f"expected an integer, got {value!r}")
    return value


def _as_float(value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"expected a number, got {value!r}")
    return float(value)


def _as_bool(value) -> bool:
    if not isinstance(value, bool):
        raise TypeError(f"expected true/false, got {value!r}")
    return value


def _as_str(value) -> str:
    if not isinstance(value, str):
        raise TypeError(f"expected a string, got {value!r}")
    return value


def _as_float_list(value) -> tuple[float, ...]:
    if not isinstance(value, list) or not value:
        raise TypeError(f"expected a nonempty list of numbers, got {value!r}")
    return tuple(_as_float(v) for v in value)


def _as_int_list(value) -> tuple[int, ...]:
    if not isinstance(value, list) or not value:
        raise TypeError(f"expected a nonempty list of integers, got {value!r}")
    return tuple(_as_int(v) for v in value)


_SWEEP_KEYS = {
    "d": _as_int, "k": _as_int, "sigma_grid": _as_float_list,
    "n_grid": _as_int_list, "repetitions": _as_int, "master_seed": _as_int,
    "sigma_known": _as_bool, "error_cap": _as_float,
    "resample_cloud": _as_bool, "unit_frobenius": _as_bool, "sampler": _as_str,
}

_SIGMA_BENCH_KEYS = {
    "d": _as_int, "k": _as_int, "sigma": _as_float, "n_grid": _as_int_list,
    "repetitions": _as_int, "master_seed": _as_int,
}

_MSE_KEYS = {
    "d": _as_int, "k": _as_int, "sigma_list": _as_float_list,
    "n_list": _as_int_list, "trials": _as_int, "master_seed": _as_int,
    "sampler": _as_str, "unit_frobenius": _as_bool,
}

_VERIFY_KEYS = {"trials": _as_int, "master_seed": _as_int}


def load_sweep_config(path) -> SweepConfig:
    return SweepConfig(**_load_json_record(path, _SWEEP_KEYS))


def load_sigma_bench_config(path) -> dict:
    data = {"d": 3, "k": 100, "sigma": 1.0,
            "n_grid": (100, 1000, 10000), "repetitions": 100, "master_seed": 0}
    data.update(_load_json_record(path, _SIGMA_BENCH_KEYS))
    return data


def load_mse_config(path) -> dict:
    data = {"d": 2, "k": 10, "sigma_list": (2.0,), "n_list": (100,),
            "trials": 2000, "master_seed": 0, "sampler": "direct",
            "unit_frobenius": True}
    data.update(_load_json_record(path, _MSE_KEYS))
    return data


def load_verify_config(path) -> dict:
    data = {"trials": 1000, "master_seed": 0}
    data.update(_load_json_record(path, _VERIFY_KEYS))
    return data


# --------------------------------------------------------------------------- #
# Phase-transition sweep
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class GridRow:
    sigma: float
    n: int
    mean_rel_error: float
    std_rel_error: float
    repetitions: int


@dataclass(frozen=True)
class GridResult:
    config: SweepConfig
    rows: tuple[GridRow, ...]


def _estimate_once(cloud: Cloud, sigma: float, n: int, spec: SeedSpec,
                   sampler: str, sigma_known: bool) -> float:
    """One repetition: sample, estimate, return the relative error."""
    if sampler == "gram":
        m = GramEstimate.from_symmetric(
            sample_gram_mean(cloud, sigma, n, spec), require_psd=True)
    else:
        m = gram_mean(sample_observations(cloud, sigma, n, spec))
    if sigma_known:
        report = estimate_from_gram(m, sigma, cloud.d, n=n)
    else:
        sigma_hat = estimate_sigma(m, cloud.d)
        report = estimate_from_gram(m, sigma_hat, cloud.d,
                                    sigma_estimated=True, n=n)
    return relative_error(cloud, report.cloud_estimate)


def _phase_cell(task) -> GridRow:
    """Worker for one grid cell; must stay module-level so it pickles."""
    config, cell, cloud_entries = task
    sigma, n = config.cell_coords(cell)
    fixed = Cloud(cloud_entries) if cloud_entries is not None else None
    errors = []
    try:
        for rep in range(config.repetitions):
            spec = derive_seed(config.master_seed, cell, rep)
            if fixed is None:
                cloud = sample_cloud(config.d, config.k,
                                     spec.child(_CELL_CLOUD_STREAM),
                                     config.unit_frobenius)
            else:
                cloud = fixed
            err = _estimate_once(cloud, sigma, n, spec,
                                 config.sampler, config.sigma_known)
            errors.append(min(err, config.error_cap))
    except (ValueError, NumericalFailure):
        # Error marker row: repetitions=0 flags the aborted cell.
        return GridRow(sigma, n, math.nan, math.nan, 0)
    mean = float(np.mean(errors))
    std = float(np.std(errors, ddof=1)) if len(errors) > 1 else 0.0
    return GridRow(sigma, n, mean, std, len(errors))


def run_phase_transition(config: SweepConfig, threads: int = 1) -> GridResult:
    """Estimator error over the whole (sigma, N) grid.

    Per cell, ``repetitions`` independent batches are generated from derived
    seeds, errors are capped at ``error_cap`` and then averaged. The result
    is identical for any ``threads`` value: workers only evaluate the pure
    per-cell function, and rows are assembled in fixed cell order.
    """
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    if config.resample_cloud:
        entries = None
    else:
        entries = sample_cloud(config.d, config.k,
                               derive_seed(config.master_seed, _CLOUD_CELL, 0),
                               config.unit_frobenius).entries
    tasks = [(config, cell, entries) for cell in range(config.cells)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = tuple(pool.map(_phase_cell, tasks))
    else:
        rows = tuple(_phase_cell(task) for task in tasks)
    return GridResult(config=config, rows=rows)


GRID_CSV_HEADER = "sigma,n,mean_rel_error,std_rel_error,repetitions"


def write_grid_csv(result: GridResult, path) -> None:
    lines = [GRID_CSV_HEADER]
    for row in result.rows:
        lines.append(",".join([
            format_float(row.sigma), str(row.n),
            format_float(row.mean_rel_error), format_float(row.std_rel_error),
            str(row.repetitions),
        ]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


# --------------------------------------------------------------------------- #
# Noise-level estimation benchmark
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SigmaBenchRow:
    n: int
    mean_rel_err_sigma2: float
    std_rel_err_sigma2: float
    repetitions: int


def run_sigma_benchmark(d: int, k: int, sigma: float, n_grid, repetitions: int,
                        master_seed: int) -> tuple[SigmaBenchRow, ...]:
    """Relative error |sigma^2 - sigma_hat^2| / sigma^2 of the noise estimate
    across batch sizes, on one fixed cloud."""
    if k <= d:
        raise ConfigError(f"noise estimation needs k > d, got d={d}, k={k}")
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    if repetitions < 1:
        raise ConfigError(f"repetitions must be >= 1, got {repetitions}")
    n_grid = tuple(int(n) for n in n_grid)
    if not n_grid or any(n < 1 for n in n_grid):
        raise ConfigError("n_grid must be nonempty positive integers")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigError("n_grid must be strictly increasing")
    cloud = sample_cloud(d, k, derive_seed(master_seed, _CLOUD_CELL, 0))
    rows = []
    for cell, n in enumerate(n_grid):
        errs = []
        for rep in range(repetitions):
            spec = derive_seed(master_seed, cell, rep)
            m = gram_mean(sample_observations(cloud, sigma, n, spec))
            sigma_hat = estimate_sigma(m, d)
            errs.append(abs(sigma ** 2 - sigma_hat ** 2) / sigma ** 2)
        mean = float(np.mean(errs))
        std = float(np.std(errs, ddof=1)) if len(errs) > 1 else 0.0
        rows.append(SigmaBenchRow(n, mean, std, repetitions))
    return tuple(rows)


SIGMA_CSV_HEADER = "n,mean_rel_err_sigma2,std_rel_err_sigma2,repetitions"


def write_sigma_csv(rows, path) -> None:
    lines = [SIGMA_CSV_HEADER]
    for row in rows:
        lines.append(",".join([
            str(row.n), format_float(row.mean_rel_err_sigma2),
            format_float(row.std_rel_err_sigma2), str(row.repetitions),
        ]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


# --------------------------------------------------------------------------- #
# Moment-formula validation
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class MseRow:
    sigma: float
    n: int
    empirical_gram_mse: float
    formula_gram_mse: float
    empirical_rho2: float
    mc_stderr: float  # standard error of empirical_rho2


@dataclass(frozen=True)
class MseResult:
    """Per-(sigma, N) moments plus log-log slope diagnostics.

    ``slope_low`` fits log mean rho^2 against log sigma over the rows with
    sigma < 1, ``slope_high`` over sigma > 1; each is None with fewer than
    two distinct sigma values in its regime. Slopes are meaningful when N is
    held fixed within the regime.
    """

    rows: tuple[MseRow, ...]
    slope_low: float | None
    slope_high: float | None


def _fit_slope(points: list[tuple[float, float]]) -> float | None:
    xs = sorted({p[0] for p in points})
    if len(xs) < 2:
        return None
    logx = np.log([p[0] for p in points])
    logy = np.log([p[1] for p in points])
    return float(np.polyfit(logx, logy, 1)[0])


def run_mse_validation(d: int, k: int, sigma_list, n_list, trials: int,
                       master_seed: int, sampler: str = "direct",
                       unit_frobenius: bool = True) -> MseResult:
    """Empirical Gram MSE and estimation error against the closed forms.

    Each (sigma_list[j], n_list[j]) pair is one row; the paired-list shape
    lets a regime hold N fixed while sigma moves. The estimator runs with the
    true sigma (the known-noise algorithm).
    """
    if trials < 100:
        raise ConfigError(f"trials must be >= 100, got {trials}")
    sigma_list = tuple(float(s) for s in sigma_list)
    n_list = tuple(int(n) for n in n_list)
    if len(sigma_list) != len(n_list) or not sigma_list:
        raise ConfigError("sigma_list and n_list must be nonempty and equal length")
    if any(s <= 0 for s in sigma_list) or any(n < 1 for n in n_list):
        raise ConfigError("sigma_list entries must be positive, n_list >= 1")
    if sampler not in ("direct", "gram"):
        raise ConfigError(f"sampler must be 'direct' or 'gram', got {sampler!r}")
    cloud = sample_cloud(d, k, derive_seed(master_seed, _CLOUD_CELL, 0),
                         unit_frobenius)
    g = cloud.gram()
    frob2 = cloud.frobenius_norm() ** 2
    rows = []
    for cell, (sigma, n) in enumerate(zip(sigma_list, n_list)):
        gram_err2 = np.empty(trials)
        rho2 = np.empty(trials)
        for rep in range(trials):
            spec = derive_seed(master_seed, cell, rep)
            if sampler == "gram":
                m = GramEstimate.from_symmetric(
                    sample_gram_mean(cloud, sigma, n, spec), require_psd=True)
            else:
                m = gram_mean(sample_observations(cloud, sigma, n, spec))
            ghat = m.matrix - d * sigma ** 2 * np.eye(k)
            gram_err2[rep] = float(np.linalg.norm(ghat - g)) ** 2
            report = estimate_from_gram(m, sigma, d, n=n)
            rho2[rep] = procrustes_distance(cloud, report.cloud_estimate) ** 2
        rows.append(MseRow(
            sigma=sigma, n=n,
            empirical_gram_mse=float(gram_err2.mean()),
            formula_gram_mse=analysis.expected_gram_mse(d, k, n, sigma, frob2),
            empirical_rho2=float(rho2.mean()),
            mc_stderr=float(rho2.std(ddof=1) / math.sqrt(trials)),
        ))
    low = [(r.sigma, r.empirical_rho2) for r in rows
           if r.sigma < 1.0 and r.empirical_rho2 > 0]
    high = [(r.sigma, r.empirical_rho2) for r in rows
            if r.sigma > 1.0 and r.empirical_rho2 > 0]
    return MseResult(rows=tuple(rows), slope_low=_fit_slope(low),
                     slope_high=_fit_slope(high))


MSE_CSV_HEADER = "sigma,n,empirical_gram_mse,formula_gram_mse,empirical_rho2,mc_stderr"


def write_mse_csv(result: MseResult, path) -> None:
    lines = [MSE_CSV_HEADER]
    for row in result.rows:
        lines.append(",".join([
            format_float(row.sigma), str(row.n),
            format_float(row.empirical_gram_mse),
            format_float(row.formula_gram_mse),
            format_float(row.empirical_rho2),
            format_float(row.mc_stderr),
        ]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


# --------------------------------------------------------------------------- #
# Bound audits
# --------------------------------------------------------------------------- #

def run_stability_audit(trials: int, master_seed: int,
                        inject_fault: bool = False) -> tuple[analysis.AuditRecord, ...]:
    """Run every bound audit with derived seeds and collect their records.

    The probabilistic concentration audit runs ``trials`` trials per noise
    setting. ``inject_fault`` zeroes one bound so the audit must fail; it
    exists so the failure path of the verification pipeline is testable.
    """
    if trials < 100:
        raise ConfigError(f"trials must be >= 100, got {trials}")
    scale = 0.0 if inject_fault else 1.0
    seeds = [derive_seed(master_seed, _AUDIT_CELL_BASE + i, 0) for i in range(4)]
    return (
        analysis.audit_gram_inversion(trials, seeds[0], bound_scale=scale),
        analysis.audit_tu_lipschitz(trials, seeds[1]),
        analysis.audit_gram_diff(trials, seeds[2]),
        analysis.audit_bound_ordering(),
        analysis.audit_concentration(trials, seeds[3]),
    )


def write_audit_jsonl(records, path) -> None:
    with open(path, "w", newline="") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
