"""Ensemble execution and statistical verification.

Paths are independent by construction (counter-based seeds keyed on the path
index), so workers can run in any order at any parallel width; the reduction
is an ordered fold by path index and ensemble reports are bit-reproducible
for a fixed (master seed, config).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import (ProblemSpec, RegimeError, SolveOptions,
                       solve_direct, solve_rescaled)
from .noise import refine_path, sample_path
from .spectral import Field, h1_norm


@dataclass(frozen=True)
class EnsembleConfig:
    n_paths: int
    seed: int
    n_steps: int
    levels: int = 1
    observables: tuple = ("mass", "hamiltonian", "h1", "lp")
    width: int | None = None
    scheme: str = "direct"
    options: SolveOptions = SolveOptions(record_snapshots=False)


@dataclass
class EnsembleReport:
    times: np.ndarray
    per_path: dict            # observable -> (n_paths, n_times) array
    statuses: list            # TrajectoryStatus per path
    config: EnsembleConfig

    @property
    def n_paths(self) -> int:
        return self.config.n_paths

    @property
    def blowup_count(self) -> int:
        return sum(1 for s in self.statuses if s.kind != "finished")

    def mean(self, obs: str) -> np.ndarray:
        return np.nanmean(self.per_path[obs], axis=0)

    def variance(self, obs: str) -> np.ndarray:
        return np.nanvar(self.per_path[obs], axis=0, ddof=1)

    def stderr(self, obs: str) -> np.ndarray:
        return np.sqrt(self.variance(obs) / self.n_paths)

    def to_csv(self, path):
        names = list(self.per_path)
        header = ["t"]
        cols = [self.times]
        for obs in names:
            header += [f"{obs}_mean", f"{obs}_var", f"{obs}_ci3"]
            cols += [self.mean(obs), self.variance(obs), 3.0 * self.stderr(obs)]
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in zip(*cols):
                fh.write(",".join(repr(float(x)) for x in row) + "\n")


def _solver_for(scheme: str):
    if scheme == "direct":
        return solve_direct
    if scheme == "rescaled":
        return solve_rescaled
    raise ValueError(f"unknown scheme {scheme!r}")


_WORKER_CTX = {}


def _worker_init(x_values, spec, config, sup_over_time=False):
    _WORKER_CTX["x"] = Field(spec.grid, x_values)
    _WORKER_CTX["spec"] = spec
    _WORKER_CTX["config"] = config
    _WORKER_CTX["sup_over_time"] = sup_over_time


def _run_one_path(path_id: int):
    x = _WORKER_CTX["x"]
    spec: ProblemSpec = _WORKER_CTX["spec"]
    config: EnsembleConfig = _WORKER_CTX["config"]
    path = sample_path(spec.model, spec.T, config.n_steps, config.seed, path_id)
    for _ in range(config.levels - 1):
        path = refine_path(path)
    traj = _solver_for(config.scheme)(x, path, spec, config.options)
    n_times = config.n_steps * 2 ** (config.levels - 1) + 1
    out = {}
    for obs in config.observables:
        series = np.full(n_times, np.nan)
        got = traj.diagnostic(obs)
        series[:len(got)] = got
        out[obs] = series
    return path_id, out, traj.status


def ensemble_width(config: EnsembleConfig) -> int:
    if config.width is not None:
        return max(1, config.width)
    env = os.environ.get("SNLS_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_ensemble(x: Field, spec: ProblemSpec, config: EnsembleConfig) -> EnsembleReport:
    """Run n_paths independent paths; blowup paths are recorded, not fatal."""
    if config.n_paths < 1:
        raise ValueError("need at least one path")
    width = ensemble_width(config)
    ids = range(config.n_paths)
    if width == 1 or config.n_paths == 1:
        _worker_init(x.values, spec, config)
        results = [_run_one_path(i) for i in ids]
    else:
        chunk = max(1, config.n_paths // (4 * width))
        with ProcessPoolExecutor(max_workers=width, initializer=_worker_init,
                                 initargs=(x.values, spec, config)) as ex:
            results = list(ex.map(_run_one_path, ids, chunksize=chunk))
    results.sort(key=lambda r: r[0])
    n_times = config.n_steps * 2 ** (config.levels - 1) + 1
    times = np.linspace(0.0, spec.T, n_times)
    per_path = {obs: np.vstack([r[1][obs] for r in results])
                for obs in config.observables}
    statuses = [r[2] for r in results]
    return EnsembleReport(times, per_path, statuses, config)


# ---------------------------------------------------------------------------
# martingale test

@dataclass
class MartingaleResult:
    passed: bool
    checkpoint_times: np.ndarray
    deviations: np.ndarray     # |mean - m0|
    allowances: np.ndarray     # 3*SE + bias
    z_scores: np.ndarray

    def summary_lines(self):
        yield f"martingale_pass={str(self.passed).lower()}"
        yield f"martingale_max_z={max(self.z_scores):.6g}"


def martingale_test(report: EnsembleReport, initial_mass: float,
                    n_checkpoints: int = 10, bias=None) -> MartingaleResult:
    """E mass(X(t)) = mass(x) within 3*SE plus a scheme-bias allowance.

    A roundoff floor of 1e-12 * initial mass keeps the zero-variance
    conservative case (mass pathwise constant, SE = 0) from failing on
    accumulated floating-point drift.
    """
    if report.n_paths < 100:
        raise ValueError("martingale test needs at least 100 paths")
    n_times = len(report.times)
    idx = np.unique(np.linspace(1, n_times - 1, n_checkpoints).astype(int))
    mean = report.mean("mass")[idx]
    se = report.stderr("mass")[idx]
    b = np.zeros(len(idx)) if bias is None else np.asarray(bias, dtype=float)
    dev = np.abs(mean - initial_mass)
    allow = 3.0 * se + b + 1e-12 * abs(initial_mass)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, dev / se, np.where(dev > allow, np.inf, 0.0))
    return MartingaleResult(bool(np.all(dev <= allow)), report.times[idx],
                            dev, allow, z)


def estimate_mass_bias(x: Field, spec: ProblemSpec, config: EnsembleConfig,
                       n_checkpoints: int = 10) -> np.ndarray:
    """Scheme-bias allowance from one dt halving on a coupled sub-ensemble:
    |mean mass at dt - mean mass at dt/2| at the shared checkpoints."""
    coarse = run_ensemble(x, spec, config)
    fine = run_ensemble(x, spec, replace(config, levels=config.levels + 1))
    n_times = len(coarse.times)
    idx = np.unique(np.linspace(1, n_times - 1, n_checkpoints).astype(int))
    return np.abs(coarse.mean("mass")[idx] - fine.mean("mass")[2 * idx])


# ---------------------------------------------------------------------------
# moment monitor

@dataclass
class MomentReport:
    p: float
    e_sup_mass_p: float
    e_sup_energy: float
    divergent: bool

    def summary_lines(self):
        yield f"moment_divergent={str(self.divergent).lower()}"
        if not self.divergent:
            yield f"moment_e_sup_mass_p={self.e_sup_mass_p!r}"
            yield f"moment_e_sup_energy={self.e_sup_energy!r}"


def moment_monitor(report: EnsembleReport, p: float, alpha: float) -> MomentReport:
    """Empirical E sup_t |X|_2^p and E sup_t (|grad X|_2^2 + |X|_{a+1}^{a+1}).

    Blowup paths flip the divergence flag instead of contributing a value.
    """
    if report.blowup_count > 0:
        return MomentReport(p, math.nan, math.nan, True)
    mass = report.per_path["mass"]
    h1 = report.per_path["h1"]
    lp = report.per_path["lp"]
    grad_l2 = h1 - np.sqrt(mass)
    sup_mass_p = np.max(mass ** (p / 2.0), axis=1)
    sup_energy = np.max(grad_l2 ** 2 + lp ** (alpha + 1.0), axis=1)
    return MomentReport(p, float(np.mean(sup_mass_p)), float(np.mean(sup_energy)),
                        False)


# ---------------------------------------------------------------------------
# strong convergence order

@dataclass
class ConvergenceReport:
    levels: list
    errors: list               # strong errors vs the finest level
    order: float
    inconclusive: bool
    scheme: str

    def summary_lines(self):
        yield f"convergence_scheme={self.scheme}"
        for lv, e in zip(self.levels, self.errors):
            yield f"convergence_error_level_{lv}={e!r}"
        yield f"convergence_order={self.order:.4f}"
        yield f"convergence_inconclusive={str(self.inconclusive).lower()}"


def _terminal_task(path_id: int):
    x = _WORKER_CTX["x"]
    spec: ProblemSpec = _WORKER_CTX["spec"]
    config: EnsembleConfig = _WORKER_CTX["config"]
    sup_over_time = _WORKER_CTX["sup_over_time"]
    solver = _solver_for(config.scheme)
    path = sample_path(spec.model, spec.T, config.n_steps, config.seed, path_id)
    finals = []
    for level in range(config.levels):
        # sup-in-t keeps states at every base-grid time (memory-budget mode);
        # the default keeps the terminal state only
        stride = 2 ** level if sup_over_time else path.n_steps
        opts = replace(config.options, record_snapshots=True, stride=stride)
        traj = solver(x, path, spec, opts)
        if traj.status.kind != "finished":
            raise RegimeError(f"path {path_id} level {level}: {traj.status.kind}")
        finals.append(np.stack([s.values for s in traj.snapshots]))
        if level + 1 < config.levels:
            path = refine_path(path)
    return path_id, finals


def convergence_order(x: Field, spec: ProblemSpec, config: EnsembleConfig,
                      sup_over_time: bool = False) -> ConvergenceReport:
    """Strong L2 errors against the finest of `levels` coupled dt levels,
    with the fitted log2 slope.  Errors are taken at the horizon unless
    sup_over_time is set, which compares at every base-grid time and costs
    the full trajectory storage per level."""
    if config.levels < 3:
        raise ValueError("order fit needs at least 3 levels")
    width = ensemble_width(config)
    ids = range(config.n_paths)
    if width == 1 or config.n_paths == 1:
        _worker_init(x.values, spec, config, sup_over_time)
        results = [_terminal_task(i) for i in ids]
    else:
        with ProcessPoolExecutor(max_workers=width, initializer=_worker_init,
                                 initargs=(x.values, spec, config, sup_over_time)) as ex:
            results = list(ex.map(_terminal_task, ids))
    results.sort(key=lambda r: r[0])
    w = spec.grid.cell_volume
    errors = []
    for level in range(config.levels - 1):
        errs = []
        for _, finals in results:
            diff = np.abs(finals[level] - finals[-1]) ** 2
            per_time = np.sqrt(w * diff.reshape(diff.shape[0], -1).sum(axis=1))
            errs.append(float(np.max(per_time)))
        errors.append(float(np.mean(errs)))
    levels = list(range(config.levels - 1))
    logs = np.log2(np.maximum(errors, 1e-300))
    slope = float(np.polyfit(levels, logs, 1)[0])
    monotone = all(a > b for a, b in zip(errors, errors[1:]))
    return ConvergenceReport(levels, errors, -slope, not monotone, config.scheme)


# ---------------------------------------------------------------------------
# continuous-dependence probe

@dataclass
class ContinuityReport:
    deltas: list
    ratios: np.ndarray        # (n_paths, n_deltas)
    spread: float             # max over paths of max/min across deltas
    bounded: bool

    def summary_lines(self):
        yield f"continuity_spread={self.spread:.6g}"
        yield f"continuity_bounded={str(self.bounded).lower()}"


def continuity_probe(x: Field, deltas, spec: ProblemSpec, config: EnsembleConfig,
                     direction: Field, spread_cap: float = 10.0) -> ContinuityReport:
    """Per path and per delta: sup_t |X(x + delta v) - X(x)|_{H1} / (delta |v|_{H1})."""
    deltas = [float(d) for d in deltas]
    if any(d <= 0 for d in deltas):
        raise ValueError("deltas must be positive")
    v_h1 = h1_norm(direction)
    solver = _solver_for(config.scheme)
    options = replace(config.options, record_snapshots=True, stride=1)
    ratios = np.zeros((config.n_paths, len(deltas)))
    for pid in range(config.n_paths):
        path = sample_path(spec.model, spec.T, config.n_steps, config.seed, pid)
        base = solver(x, path, spec, options)
        if base.status.kind != "finished":
            raise RegimeError(f"continuity probe: base run ended with {base.status.kind}")
        for di, d in enumerate(deltas):
            pert = Field(x.grid, x.values + d * direction.values)
            traj = solver(pert, path, spec, options)
            if traj.status.kind != "finished":
                raise RegimeError(
                    f"continuity probe: delta={d} run ended with {traj.status.kind}")
            sup = max(h1_norm(a - b) for a, b in zip(traj.snapshots, base.snapshots))
            ratios[pid, di] = sup / (d * v_h1)
    spread = float(np.max(np.max(ratios, axis=1) / np.min(ratios, axis=1)))
    return ContinuityReport(deltas, ratios, spread, spread <= spread_cap)
