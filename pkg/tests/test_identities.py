import numpy as np
import pytest

from snls.dynamics import ProblemSpec, SolveOptions, StepFlags, solve_direct
from snls.identities import (StrideError, h1_identity, hamiltonian_identity,
                             lp_identity, mass_identity)
from snls.noise import (GaussianProfile, NoiseMode, build_model, refine_path,
                        sample_path)
from snls.spectral import Field, Grid

GRID = Grid(1, 64, 16.0)
XI = GRID.meshes[0]
STRIDE1 = SolveOptions(stride=1)


def gaussian(amp=1.0, grid=GRID):
    return Field(grid, amp * np.exp(-grid.meshes[0] ** 2 / 2.0))


def noisy_spec(mu=1.0 + 0j, lam=-1, T=0.25, grid=GRID):
    model = build_model([NoiseMode(mu, GaussianProfile(1.0, 3.0, (0, 0, 0)))], grid)
    return ProblemSpec(grid, model, 3.0, lam, T)


def det_spec(lam=1, T=0.25, grid=GRID, alpha=3.0):
    return ProblemSpec(grid, build_model([], grid), alpha, lam, T)


class TestReportStructure:
    def test_residual_starts_at_exact_zero(self):
        spec = noisy_spec()
        path = sample_path(spec.model, 0.25, 50, seed=1)
        traj = solve_direct(gaussian(), path, spec, STRIDE1)
        for rep in (mass_identity(traj, path, spec.model),
                    hamiltonian_identity(traj, path, spec.model, spec),
                    lp_identity(traj, path, spec.model, spec),
                    h1_identity(traj, path, spec.model, spec)):
            assert rep.residual[0] == 0.0
            for series in rep.terms.values():
                assert series[0] == 0.0

    def test_stride_enforced(self):
        spec = noisy_spec()
        path = sample_path(spec.model, 0.25, 50, seed=1)
        traj = solve_direct(gaussian(), path, spec, SolveOptions(stride=5))
        with pytest.raises(StrideError):
            mass_identity(traj, path, spec.model)

    def test_shared_increments_across_identities(self):
        spec = noisy_spec()
        path = sample_path(spec.model, 0.25, 50, seed=1)
        traj = solve_direct(gaussian(), path, spec, STRIDE1)
        a = mass_identity(traj, path, spec.model)
        b = hamiltonian_identity(traj, path, spec.model, spec)
        assert a.increments is b.increments
        assert a.increments is path.increments

    def test_reproducible_bit_exact(self):
        spec = noisy_spec()
        path = sample_path(spec.model, 0.25, 50, seed=1)
        traj = solve_direct(gaussian(), path, spec, STRIDE1)
        r1 = lp_identity(traj, path, spec.model, spec)
        r2 = lp_identity(traj, path, spec.model, spec)
        assert np.array_equal(r1.residual, r2.residual)

    def test_csv_columns(self, tmp_path):
        spec = noisy_spec()
        path = sample_path(spec.model, 0.25, 20, seed=1)
        traj = solve_direct(gaussian(), path, spec, STRIDE1)
        rep = hamiltonian_identity(traj, path, spec.model, spec)
        out = tmp_path / "ham.csv"
        rep.to_csv(out)
        lines = out.read_text().splitlines()
        assert lines[1].startswith("t,residual,term_1")
        assert len(lines) == 2 + len(rep.times)


class TestMassIdentity:
    def test_deterministic_reduces_to_scheme_drift(self):
        spec = det_spec(lam=-1)
        path = sample_path(spec.model, 0.25, 100, seed=0)
        traj = solve_direct(gaussian(), path, spec, STRIDE1)
        rep = mass_identity(traj, path, spec.model)
        m = traj.diagnostic("mass")
        assert np.allclose(rep.residual, m - m[0], atol=1e-14)
        assert np.max(np.abs(rep.residual)) <= 1e-12

    def test_conservative_residual_is_scheme_mass_drift(self):
        model = build_model([NoiseMode(0.8j, GaussianProfile(1.0, 3.0, (0, 0, 0)))], GRID)
        spec = ProblemSpec(GRID, model, 3.0, -1, 0.25)
        path = sample_path(model, 0.25, 100, seed=5)
        traj = solve_direct(gaussian(), path, spec, STRIDE1)
        rep = mass_identity(traj, path, model)
        assert np.max(np.abs(rep.residual)) <= 1e-12

    def test_refinement_shrinks_residual(self):
        spec = noisy_spec()
        meds = []
        for lv in range(2):
            terms = []
            for pid in range(24):
                path = sample_path(spec.model, 0.25, 125, seed=13, path_id=pid)
                for _ in range(2 * lv):
                    path = refine_path(path)
                traj = solve_direct(gaussian(), path, spec, STRIDE1)
                terms.append(abs(mass_identity(traj, path, spec.model).terminal_residual))
            meds.append(np.median(terms))
        # two dyadic refinements: expect roughly 2x shrink at strong order 1/2
        assert meds[1] < meds[0]
        assert np.log2(meds[0] / meds[1]) / 2 >= 0.3


class TestHamiltonianIdentity:
    def test_deterministic_matches_energy_drift(self):
        grid = Grid(1, 512, 40.0)
        xi = grid.meshes[0]
        x = Field(grid, np.sqrt(2.0) / np.cosh(xi))
        spec = det_spec(lam=1, grid=grid)
        path = sample_path(spec.model, 0.25, 250, seed=0)
        traj = solve_direct(x, path, spec, STRIDE1)
        rep = hamiltonian_identity(traj, path, spec.model, spec)
        H = traj.diagnostic("hamiltonian")
        assert np.max(np.abs(rep.residual)) <= 1e-6 * abs(H[0])

    def test_conservative_mode_kills_phase_terms_exactly(self):
        model = build_model([NoiseMode(0.9j, GaussianProfile(1.0, 3.0, (0, 0, 0)))], GRID)
        spec = ProblemSpec(GRID, model, 3.0, -1, 0.25)
        path = sample_path(model, 0.25, 100, seed=7)
        traj = solve_direct(gaussian(), path, spec, STRIDE1)
        rep = hamiltonian_identity(traj, path, model, spec)
        assert np.all(rep.terms["qv_phase"] == 0.0)
        assert np.all(rep.terms["mart_phase"] == 0.0)
        assert np.any(rep.terms["qv_grad"] != 0.0)


class TestLpIdentity:
    def test_flat_phase_rotation_is_exact(self):
        # dispersive substep off and flat data: |X|^p is a pure phase story
        model = build_model([], GRID)
        spec = ProblemSpec(GRID, model, 3.0, 1, 0.25)
        path = sample_path(model, 0.25, 100, seed=0)
        flags = StepFlags(linear=False)
        x = Field(GRID, np.full(GRID.shape, 0.8 + 0.1j))
        traj = solve_direct(x, path, spec, SolveOptions(stride=1, flags=flags))
        rep = lp_identity(traj, path, model, spec)
        assert np.max(np.abs(rep.terms["grad_drift"])) == 0.0
        assert np.max(np.abs(rep.residual)) <= 1e-12 * abs(rep.lhs[0])

    def test_conservative_zeroes_noise_terms(self):
        model = build_model([NoiseMode(1.2j, GaussianProfile(1.0, 3.0, (0, 0, 0)))], GRID)
        spec = ProblemSpec(GRID, model, 3.0, -1, 0.25)
        path = sample_path(model, 0.25, 100, seed=3)
        traj = solve_direct(gaussian(), path, spec, STRIDE1)
        rep = lp_identity(traj, path, model, spec)
        assert np.all(rep.terms["qv_phase"] == 0.0)
        assert np.all(rep.terms["mart_phase"] == 0.0)


class TestH1Identity:
    def test_free_flow_conserves_gradient_norm(self):
        model = build_model([], GRID)
        spec = ProblemSpec(GRID, model, 3.0, 1, 0.25)
        path = sample_path(model, 0.25, 100, seed=0)
        flags = StepFlags(nonlinear=False)
        traj = solve_direct(gaussian(), path, spec, SolveOptions(stride=1, flags=flags))
        rep = h1_identity(traj, path, model, spec)
        assert np.max(np.abs(rep.residual)) <= 1e-10

    def test_deterministic_reduction_vs_finite_difference(self):
        # with N=0 the identity says d/dt |grad X|^2 = -2 lam Re int i grad g grad conj(X)
        grid = Grid(1, 512, 40.0)
        xi = grid.meshes[0]
        x = Field(grid, np.sqrt(2.0) / np.cosh(xi))
        spec = det_spec(lam=1, grid=grid)
        path = sample_path(spec.model, 0.25, 500, seed=0)
        traj = solve_direct(x, path, spec, STRIDE1)
        rep = h1_identity(traj, path, spec.model, spec)
        assert abs(rep.terminal_residual) <= 1e-5
        # oracle: centered finite differences of the gradient-energy series
        # against the identity's per-step drift increments
        dt = path.dt
        drift = np.diff(rep.terms["lam_drift"]) / dt    # value at left points t_i
        centered = (rep.lhs[2:] - rep.lhs[:-2]) / (2.0 * dt)   # at t_1 .. t_{n-1}
        err = np.max(np.abs(drift[1:] - centered))
        assert err <= 5e-2 * max(1.0, np.max(np.abs(centered)))

    def test_cutoff_sweep_keeps_r0_zero(self):
        spec = noisy_spec()
        path = sample_path(spec.model, 0.25, 50, seed=2)
        traj = solve_direct(gaussian(), path, spec, STRIDE1)
        for m in (2.0, 5.0, None):
            rep = h1_identity(traj, path, spec.model, spec, m=m)
            assert rep.residual[0] == 0.0


class TestCoupledRefinementOrders:
    def test_all_identities_converge(self):
        grid = GRID
        x = Field(grid, 0.75 * np.exp(-XI ** 2 / 2.0))
        model = build_model([NoiseMode(1.0 + 0j, GaussianProfile(0.7, 3.0, (0, 0, 0)))], grid)
        spec = ProblemSpec(grid, model, 3.0, -1, 0.125)
        names = ("mass", "hamiltonian", "lp", "h1")
        fns = {
            "mass": lambda t, p: mass_identity(t, p, model),
            "hamiltonian": lambda t, p: hamiltonian_identity(t, p, model, spec),
            "lp": lambda t, p: lp_identity(t, p, model, spec),
            "h1": lambda t, p: h1_identity(t, p, model, spec),
        }
        res = {n: np.zeros((16, 2)) for n in names}
        for pid in range(16):
            path = sample_path(model, 0.125, 250, seed=2025, path_id=pid)
            for lv in range(2):
                traj = solve_direct(x, path, spec, STRIDE1)
                for n in names:
                    res[n][pid, lv] = abs(fns[n](traj, path).terminal_residual)
                if lv == 0:
                    path = refine_path(refine_path(path))
        for n in names:
            med = np.median(res[n], axis=0)
            assert med[1] < med[0], n
