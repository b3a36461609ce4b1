"""Time integration for the stochastic NLS and its pathwise rescaled form.

Two coupled discretizations of the same equation:

* direct scheme: Strang composition of the exact nonlinear phase flow, the
  exact dispersive group, and the exact noise factor
  exp(dW - (mu + mu_tilde) dt).  The noise factor solves the linear Ito SDE
  dX = X dW - mu X dt exactly because the quadratic variation of W is
  2 mu_tilde dt, so no Ito-discretization bias enters.

* rescaled scheme: substitute X = e^W y and step the resulting nonautonomous
  PDE  dy/dt = -i(Lap + b.grad + c) y - i lam e^{(a-1)Re W} |y|^{a-1} y  with
  classical RK4, coefficients frozen at the step's left endpoint
  (b = 2 grad W,  c = sum (d_j W)^2 + Lap W - i(mu + mu_tilde)).

Also: exponent-regime classification, admissible space-time pair arithmetic,
the mild-equation fixed-point solver with adaptive contraction windows, and
threshold-based blowup detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .noise import NoiseModel, WienerPath, eval_W, step_dW
from .spectral import Field, Grid
from .functionals import energy_critical_alpha, mass_critical_alpha

# RK4 stability interval on the imaginary axis is |z| <= 2*sqrt(2) ~ 2.83;
# we step the skew operator -i*Lap explicitly, so dt*max|k|^2 must stay
# inside it with a 10% margin.
CFL_BOUND = 2.8
CFL_SAFETY = 0.9

TINY_MODULUS = 1e-150


class CFLError(RuntimeError):
    """Requested time step violates the explicit stability bound."""


class NoContractionError(RuntimeError):
    """The fixed-point window shrank below 4 dt without contracting."""


class RegimeError(ValueError):
    """Operation requested outside its admissible exponent regime."""


# ---------------------------------------------------------------------------
# exponent regimes

REGIME_DEFOCUSING_SUB = "defocusing-subcritical"
REGIME_FOCUSING_MASS_SUB = "focusing-mass-subcritical"
REGIME_FOCUSING_MASS_CRIT = "focusing-mass-critical"
REGIME_FOCUSING_SUPER = "focusing-mass-supercritical-energy-subcritical"
REGIME_ENERGY_CRIT = "energy-critical"
REGIME_OUT_OF_RANGE = "out-of-range"


@dataclass(frozen=True)
class Regime:
    tag: str
    is_global: bool


def classify(d: int, alpha: float, lam: int) -> Regime:
    """Place (d, alpha, lam) among the wellposedness regimes.

    Global wellposedness holds exactly for defocusing alpha < 1 + 4/(d-2)_+
    and focusing alpha < 1 + 4/d; the energy-critical endpoint
    alpha = 1 + 4/(d-2) (d >= 3) is local-only.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"d must be 1, 2 or 3, got {d}")
    if lam not in (1, -1):
        raise ValueError(f"lambda must be +1 or -1, got {lam}")
    a_energy = energy_critical_alpha(d)
    a_mass = mass_critical_alpha(d)
    if not alpha > 1.0:
        return Regime(REGIME_OUT_OF_RANGE, False)
    if alpha == a_energy:
        return Regime(REGIME_ENERGY_CRIT, False)
    if alpha > a_energy:
        return Regime(REGIME_OUT_OF_RANGE, False)
    if lam == -1:
        return Regime(REGIME_DEFOCUSING_SUB, True)
    if alpha < a_mass:
        return Regime(REGIME_FOCUSING_MASS_SUB, True)
    if alpha == a_mass:
        return Regime(REGIME_FOCUSING_MASS_CRIT, False)
    return Regime(REGIME_FOCUSING_SUPER, False)


def is_strichartz_pair(p: float, q: float, d: int) -> bool:
    """Admissible pair test: 2/q = d/2 - d/p inside the endpoint ranges.

    Ranges are [2, inf]^2 for d != 2 and [2, inf) x (2, inf] for d = 2.
    """
    if p < 2.0 or q < 2.0:
        return False
    if d == 2 and (p == math.inf or q == 2.0):
        return False
    lhs = 0.0 if q == math.inf else 2.0 / q
    rhs = d / 2.0 - (0.0 if p == math.inf else d / p)
    return abs(lhs - rhs) <= 1e-12


# ---------------------------------------------------------------------------
# problem definition and run options

@dataclass(frozen=True)
class ProblemSpec:
    grid: Grid
    model: NoiseModel
    alpha: float
    lam: int
    T: float

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if self.lam not in (1, -1):
            raise ValueError(f"lambda must be +1 or -1, got {self.lam}")
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def regime(self) -> Regime:
        return classify(self.d, self.alpha, self.lam)


@dataclass(frozen=True)
class StepFlags:
    """Test switches for individual substeps; all on for production runs."""

    linear: bool = True
    nonlinear: bool = True
    noise: bool = True
    omit_mu_tilde: bool = False   # deliberate bias bug for test power


@dataclass(frozen=True)
class BlowupThresholds:
    h1_factor: float = 1e6
    spacetime_factor: float = 1e6


@dataclass(frozen=True)
class SolveOptions:
    stride: int = 1
    record_snapshots: bool = True
    flags: StepFlags = StepFlags()
    thresholds: BlowupThresholds = BlowupThresholds()


@dataclass(frozen=True)
class TrajectoryStatus:
    kind: str                 # "finished" | "blowup" | "numeric-failure"
    t: float | None = None
    reason: str | None = None

    @property
    def is_blowup(self) -> bool:
        return self.kind == "blowup"


@dataclass
class Trajectory:
    times: np.ndarray
    diagnostics: dict           # name -> series sampled at every step
    snapshot_indices: list
    snapshots: list             # Fields, one per recorded index
    status: TrajectoryStatus
    flags: StepFlags

    def diagnostic(self, name: str) -> np.ndarray:
        return self.diagnostics[name]

    def snapshot_at(self, index: int) -> Field:
        return self.snapshots[self.snapshot_indices.index(index)]


def guarded_abs_power(values: np.ndarray, expo: float) -> np.ndarray:
    """|v|^expo as exp(expo*log|v|), zero below the underflow guard."""
    r = np.abs(values)
    out = np.zeros_like(r)
    mask = r >= TINY_MODULUS
    out[mask] = np.exp(expo * np.log(r[mask]))
    return out


# ---------------------------------------------------------------------------
# diagnostics and blowup monitoring

def _critical_spacetime_exponent(d: int) -> float:
    return 2.0 * (d + 2) / (d - 2)


def _diag_row(grid: Grid, values: np.ndarray, alpha: float, lam: int,
              q1: float | None) -> dict:
    vhat = np.fft.fftn(values)
    spec_w = grid.cell_volume / grid.n ** grid.d
    m = grid.cell_volume * float(np.sum(values.real ** 2 + values.imag ** 2))
    grad2 = spec_w * float(np.sum(grid.k_squared * (vhat.real ** 2 + vhat.imag ** 2)))
    a = np.abs(values)
    lp_p = grid.cell_volume * float(np.sum(a ** (alpha + 1.0)))
    row = {
        "mass": m,
        "hamiltonian": 0.5 * grad2 - (lam / (alpha + 1.0)) * lp_p,
        "h1": math.sqrt(m) + math.sqrt(grad2),
        "lp": lp_p ** (1.0 / (alpha + 1.0)),
    }
    if q1 is not None:
        row["lq1_pow"] = grid.cell_volume * float(np.sum(a ** q1))
    peak = float(np.max(a))
    edge = 0.0
    for ax in range(grid.d):
        for idx in (0, grid.n - 1):
            sl = [slice(None)] * grid.d
            sl[ax] = idx
            edge = max(edge, float(np.max(a[tuple(sl)])))
    row["boundary"] = edge / peak if peak > 0 else 0.0
    return row


class BlowupMonitor:
    """Crossing detector for the blowup-alternative norms.

    Subcritical regimes watch the H1 norm against h1_factor * initial;
    the energy-critical regime additionally accumulates the space-time
    L^{q1} power, q1 = 2(d+2)/(d-2), against a configured cap.
    """

    def __init__(self, spec: ProblemSpec, thresholds: BlowupThresholds,
                 h1_initial: float, lq1_pow_initial: float | None = None):
        self.thresholds = thresholds
        self.h1_cap = thresholds.h1_factor * h1_initial
        self.h1_initial = h1_initial
        self.critical = spec.regime.tag == REGIME_ENERGY_CRIT
        self.accumulator = 0.0
        if self.critical:
            base = max(lq1_pow_initial or 0.0, 1.0)
            self.spacetime_cap = thresholds.spacetime_factor * base * spec.T
        else:
            self.spacetime_cap = math.inf

    def update(self, t: float, dt: float, row: dict) -> TrajectoryStatus | None:
        if self.h1_initial > 0 and row["h1"] > self.h1_cap:
            return TrajectoryStatus("blowup", t, "h1-threshold")
        if self.critical:
            self.accumulator += row["lq1_pow"] * dt
            if self.accumulator > self.spacetime_cap:
                return TrajectoryStatus("blowup", t, "critical-spacetime-threshold")
        return None


def detect_blowup(trajectory: Trajectory, spec: ProblemSpec,
                  thresholds: BlowupThresholds = BlowupThresholds()) -> TrajectoryStatus:
    """Replay a trajectory's diagnostic series through the crossing detector."""
    h1 = trajectory.diagnostic("h1")
    lq1 = trajectory.diagnostics.get("lq1_pow")
    monitor = BlowupMonitor(spec, thresholds, h1[0],
                            lq1[0] if lq1 is not None else None)
    times = trajectory.times
    for i in range(1, len(times)):
        row = {"h1": h1[i]}
        if lq1 is not None:
            row["lq1_pow"] = lq1[i]
        hit = monitor.update(times[i], times[i] - times[i - 1], row)
        if hit is not None:
            return hit
    return TrajectoryStatus("finished", float(times[-1]))


# ---------------------------------------------------------------------------
# direct scheme

class _DirectStepper:
    def __init__(self, spec: ProblemSpec, path: WienerPath, flags: StepFlags):
        grid = spec.grid
        dt = path.dt
        self.grid, self.spec, self.path, self.flags = grid, spec, path, flags
        self.dt = dt
        self.lin_mult = np.exp(1j * grid.k_squared * dt)
        damp = spec.model.mu_field.astype(np.complex128)
        if not flags.omit_mu_tilde:
            damp = damp + spec.model.mu_tilde_field
        self.damp_dt = damp * dt
        self.has_noise = flags.noise and spec.model.n_modes > 0

    def _half_phase(self, v: np.ndarray) -> np.ndarray:
        power = guarded_abs_power(v, self.spec.alpha - 1.0)
        return v * np.exp(-1j * self.spec.lam * power * (0.5 * self.dt))

    def step(self, v: np.ndarray, t_index: int) -> np.ndarray:
        if self.flags.nonlinear:
            v = self._half_phase(v)
        if self.flags.linear:
            v = np.fft.ifftn(self.lin_mult * np.fft.fftn(v))
        if self.has_noise:
            dW = step_dW(self.spec.model, self.path, t_index)
            v = v * np.exp(dW - self.damp_dt)
        if self.flags.nonlinear:
            v = self._half_phase(v)
        return v


def step_direct(state: Field, t_index: int, path: WienerPath, spec: ProblemSpec,
                flags: StepFlags = StepFlags()) -> Field:
    """One Strang step of the direct equation over [t_i, t_{i+1}]."""
    stepper = _DirectStepper(spec, path, flags)
    return Field(state.grid, stepper.step(state.values, t_index)).check_finite()


def _run_solver(stepper, x: Field, path: WienerPath, spec: ProblemSpec,
                options: SolveOptions) -> Trajectory:
    grid = spec.grid
    q1 = _critical_spacetime_exponent(spec.d) if spec.regime.tag == REGIME_ENERGY_CRIT else None
    v = x.values.astype(np.complex128).copy()
    rows = [_diag_row(grid, v, spec.alpha, spec.lam, q1)]
    snap_idx, snaps = [], []
    if options.record_snapshots:
        snap_idx.append(0)
        snaps.append(Field(grid, v.copy()))
    monitor = BlowupMonitor(spec, options.thresholds, rows[0]["h1"],
                            rows[0].get("lq1_pow"))
    status = TrajectoryStatus("finished", path.horizon)
    last = path.n_steps
    for i in range(path.n_steps):
        v = stepper.step(v, i)
        t = float(path.times[i + 1])
        if not np.all(np.isfinite(v)):
            status = TrajectoryStatus("numeric-failure", t)
            last = i + 1
            rows.append({k: math.nan for k in rows[0]})
            break
        row = _diag_row(grid, v, spec.alpha, spec.lam, q1)
        rows.append(row)
        if options.record_snapshots and (i + 1) % options.stride == 0:
            snap_idx.append(i + 1)
            snaps.append(Field(grid, v.copy()))
        hit = monitor.update(t, path.dt, row)
        if hit is not None:
            status = hit
            last = i + 1
            if options.record_snapshots and snap_idx[-1] != i + 1:
                snap_idx.append(i + 1)
                snaps.append(Field(grid, v.copy()))
            break
    times = np.asarray(path.times[:last + 1])
    diagnostics = {k: np.asarray([r[k] for r in rows]) for k in rows[0]}
    return Trajectory(times, diagnostics, snap_idx, snaps, status, options.flags)


def solve_direct(x: Field, path: WienerPath, spec: ProblemSpec,
                 options: SolveOptions = SolveOptions()) -> Trajectory:
    """Integrate the direct equation along the path grid."""
    if spec.regime.tag == REGIME_OUT_OF_RANGE:
        raise RegimeError(
            f"(d={spec.d}, alpha={spec.alpha}, lambda={spec.lam}) is out of range")
    return _run_solver(_DirectStepper(spec, path, options.flags), x, path, spec, options)


# ---------------------------------------------------------------------------
# rescaled scheme

def rescaled_coefficients(model: NoiseModel, path: WienerPath, t_index: int):
    """Operator coefficients at t_i: b = 2 grad W and
    c = sum_j (d_j W)^2 + Lap W - i(mu + mu_tilde)."""
    grid = model.grid
    W = eval_W(model, path, t_index).values
    what = np.fft.fftn(W)
    dW = [np.fft.ifftn(1j * km * what) for km in grid.k_meshes]
    lapW = np.fft.ifftn(-grid.k_squared * what)
    b = [Field(grid, 2.0 * g) for g in dW]
    c = lapW - 1j * model.damping
    for g in dW:
        c = c + g * g
    return b, Field(grid, c)


class _RescaledStepper:
    """RK4 on the rescaled right-hand side, coefficients frozen per step."""

    def __init__(self, spec: ProblemSpec, path: WienerPath, flags: StepFlags,
                 check_cfl: bool = True):
        grid = spec.grid
        dt = path.dt
        if check_cfl and flags.linear and dt * grid.k_max ** 2 > CFL_BOUND * CFL_SAFETY:
            raise CFLError(
                f"dt*max|k|^2 = {dt * grid.k_max ** 2:.3f} exceeds "
                f"{CFL_BOUND * CFL_SAFETY:.2f}; refine dt or coarsen the grid")
        self.grid, self.spec, self.path, self.flags = grid, spec, path, flags
        self.dt = dt
        self.has_noise = flags.noise and spec.model.n_modes > 0

    def _frozen_coefficients(self, t_index: int):
        grid = self.grid
        if not self.has_noise:
            return None, None, None
        W = eval_W(self.spec.model, self.path, t_index).values
        what = np.fft.fftn(W)
        dW = [np.fft.ifftn(1j * km * what) for km in grid.k_meshes]
        lapW = np.fft.ifftn(-grid.k_squared * what)
        c = lapW - 1j * self.spec.model.damping
        for g in dW:
            c = c + g * g
        b = [2.0 * g for g in dW]
        env = np.exp((self.spec.alpha - 1.0) * W.real)
        return b, c, env

    def step(self, v: np.ndarray, t_index: int) -> np.ndarray:
        grid, spec, dt = self.grid, self.spec, self.dt
        b, c, env = self._frozen_coefficients(t_index)

        def rhs(u):
            out = np.zeros_like(u)
            if self.flags.linear:
                uhat = np.fft.fftn(u)
                Au = np.fft.ifftn(-grid.k_squared * uhat)
                if b is not None:
                    for a_ax, km in enumerate(grid.k_meshes):
                        Au = Au + b[a_ax] * np.fft.ifftn(1j * km * uhat)
                    Au = Au + c * u
                out = -1j * Au
            if self.flags.nonlinear:
                power = guarded_abs_power(u, spec.alpha - 1.0)
                factor = power if env is None else env * power
                out = out - 1j * spec.lam * factor * u
            return out

        k1 = rhs(v)
        k2 = rhs(v + (0.5 * dt) * k1)
        k3 = rhs(v + (0.5 * dt) * k2)
        k4 = rhs(v + dt * k3)
        return v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_rescaled(y: Field, t_index: int, path: WienerPath, spec: ProblemSpec,
                  flags: StepFlags = StepFlags()) -> Field:
    """One RK4 step of the rescaled equation over [t_i, t_{i+1}]."""
    stepper = _RescaledStepper(spec, path, flags)
    return Field(y.grid, stepper.step(y.values, t_index)).check_finite()


def solve_rescaled(x: Field, path: WienerPath, spec: ProblemSpec,
                   options: SolveOptions = SolveOptions()) -> Trajectory:
    """Integrate the rescaled equation; the trajectory holds y-variables."""
    if spec.regime.tag == REGIME_OUT_OF_RANGE:
        raise RegimeError(
            f"(d={spec.d}, alpha={spec.alpha}, lambda={spec.lam}) is out of range")
    return _run_solver(_RescaledStepper(spec, path, options.flags), x, path, spec, options)


def transform(u: Field, W_t: Field, direction: str) -> Field:
    """Pointwise rescaling factor: to_X multiplies by e^W, to_y by e^{-W}."""
    if direction == "to_X":
        return Field(u.grid, u.values * np.exp(W_t.values))
    if direction == "to_y":
        return Field(u.grid, u.values * np.exp(-W_t.values))
    raise ValueError(f"direction must be 'to_X' or 'to_y', got {direction!r}")


def rescaled_to_X(traj: Trajectory, path: WienerPath, model: NoiseModel) -> list:
    """Companion X-snapshots e^{W(t_i)} y(t_i) for a rescaled trajectory."""
    out = []
    for idx, snap in zip(traj.snapshot_indices, traj.snapshots):
        out.append(transform(snap, eval_W(model, path, idx), "to_X"))
    return out


def propagator_apply(u0: Field, s_index: int, t_index: int, path: WienerPath,
                     model: NoiseModel) -> Field:
    """Apply the evolution system U(t, s) of the rescaled linear part."""
    if not 0 <= s_index <= t_index <= path.n_steps:
        raise IndexError(f"need 0 <= s={s_index} <= t={t_index} <= {path.n_steps}")
    spec = ProblemSpec(model.grid, model, alpha=2.0, lam=1, T=path.horizon)
    stepper = _RescaledStepper(spec, path, StepFlags(nonlinear=False))
    v = u0.values.astype(np.complex128).copy()
    for i in range(s_index, t_index):
        v = stepper.step(v, i)
    return Field(u0.grid, v).check_finite()


# ---------------------------------------------------------------------------
# mild-equation fixed point

@dataclass
class PicardDiagnostics:
    window: float
    iterations: int
    distances: list
    contraction_factor: float
    trace: list = field(default_factory=list)   # (tau, factor, accepted)


def _l2(grid: Grid, values: np.ndarray) -> float:
    return math.sqrt(grid.cell_volume * float(np.sum(values.real ** 2 + values.imag ** 2)))


def picard_solve(x: Field, path: WienerPath, spec: ProblemSpec,
                 window_policy: str = "adaptive", tau: float | None = None,
                 tol: float = 1e-10, max_iter: int = 50):
    """Solve the mild equation y = U(t,0)x - i lam int_0^t U(t,s) e^{(a-1)ReW} g(y) ds
    by fixed-point iteration on [0, tau], trapezoid quadrature on the path grid.

    The adaptive policy halves tau whenever the measured iterate-distance
    ratio exceeds 1/2 (the empirical surrogate for the contraction bound) and
    signals NoContractionError if tau falls below 4 dt without contracting.
    Returns (field at window end, PicardDiagnostics).
    """
    if window_policy not in ("adaptive", "fixed"):
        raise ValueError(f"unknown window policy {window_policy!r}")
    grid = spec.grid
    dt = path.dt
    if tau is None:
        tau = path.horizon
    K = int(round(tau / dt))
    if K < 1 or K > path.n_steps:
        raise ValueError(f"window tau={tau} not representable on the path grid")

    lin_flags = StepFlags(nonlinear=False, noise=spec.model.n_modes > 0)
    stepper = _RescaledStepper(spec, path, lin_flags)
    trace = []

    def envelope(i):
        if spec.model.n_modes == 0:
            return 1.0
        W = eval_W(spec.model, path, i).values
        return np.exp((spec.alpha - 1.0) * W.real)

    while True:
        # free part u_i = U(t_i, 0)x, computed once per window size
        u = [x.values.astype(np.complex128).copy()]
        for i in range(K):
            u.append(stepper.step(u[i], i))
        envs = [envelope(i) for i in range(K + 1)]

        y = [w.copy() for w in u]
        distances = []
        converged = False
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(max_iter):
                f = [envs[i] * guarded_abs_power(y[i], spec.alpha - 1.0) * y[i]
                     for i in range(K + 1)]
                new = [u[0]]
                v = np.zeros_like(u[0])
                for i in range(K):
                    v = stepper.step(v + (0.5 * dt) * f[i], i) + (0.5 * dt) * f[i + 1]
                    new.append(u[i + 1] - 1j * spec.lam * v)
                dist = max(_l2(grid, new[i] - y[i]) for i in range(K + 1))
                distances.append(dist)
                y = new
                if not math.isfinite(dist):
                    break            # diverged; window cannot be accepted
                if dist < tol:
                    converged = True
                    break
        # contraction factor over pre-floor pairs
        factor = 0.0
        for a, b in zip(distances, distances[1:]):
            if a > 10.0 * tol and math.isfinite(a):
                factor = max(factor, b / a if math.isfinite(b) else math.inf)
        accepted = converged and (window_policy == "fixed" or factor <= 0.5)
        trace.append((K * dt, factor, accepted))
        if accepted:
            diag = PicardDiagnostics(K * dt, len(distances), distances, factor, trace)
            return Field(grid, y[K]), diag
        if window_policy == "fixed":
            raise NoContractionError(
                f"fixed window tau={K * dt} did not converge "
                f"(factor {factor:.3f} after {len(distances)} iterations)")
        K //= 2
        if K < 4:
            raise NoContractionError(
                "window shrank below 4 dt without contraction; "
                "no existence window found at this resolution")
