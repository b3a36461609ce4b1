import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snls.config import (ConfigError, InitialSpec, ModeConfig, RunConfig,
                         RunSection, SnapshotError, VerifySection,
                         build_initial, build_noise_model, build_problem,
                         build_grid, parse_config, read_snapshot,
                         serialize_config, write_snapshot)
from snls.dynamics import StepFlags
from snls.spectral import Field, Grid

MINIMAL = """
[problem]
d = 1
n = 64
L = 16.0
alpha = 3.0
lambda = -1
T = 0.5
dt = 1e-3
"""


class TestParse:
    def test_minimal_config_fills_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.run.stride == 1
        assert cfg.run.n_paths == 1
        assert cfg.scheme == "direct"
        assert cfg.initial.kind == "gaussian"
        assert cfg.modes == ()
        assert cfg.n_steps == 500

    def test_out_of_range_regime_rejected_eagerly(self):
        text = MINIMAL.replace("d = 1", "d = 3").replace("alpha = 3.0", "alpha = 7.0") \
                      .replace("lambda = -1", "lambda = 1")
        with pytest.raises(ConfigError, match="out-of-range"):
            parse_config(text)

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="frobnicate"):
            parse_config(MINIMAL + "frobnicate = 3\n")

    def test_missing_required_key_named(self):
        with pytest.raises(ConfigError, match="'alpha'"):
            parse_config(MINIMAL.replace("alpha = 3.0", ""))

    def test_noise_sections(self):
        text = MINIMAL + """
[noise.1]
mu_re = 1.0
mu_im = 0.0
profile = gaussian
height = 0.5
width = 4.0

[noise.2]
mu_re = 0.0
mu_im = 0.7
profile = constant
"""
        cfg = parse_config(text)
        assert len(cfg.modes) == 2
        assert cfg.modes[1].mu_im == 0.7
        model = build_noise_model(cfg, build_grid(cfg))
        assert model.n_modes == 2
        assert not model.conservative

    def test_nonconsecutive_noise_sections_rejected(self):
        text = MINIMAL + "\n[noise.2]\nmu_re = 1.0\nmu_im = 0.0\nprofile = constant\n"
        with pytest.raises(ConfigError, match="noise.1"):
            parse_config(text)

    def test_bad_flag_token(self):
        with pytest.raises(ConfigError, match="flag token"):
            parse_config(MINIMAL + "\n[run]\nflags = no-such-thing\n")

    def test_flags_parse(self):
        cfg = parse_config(MINIMAL + "\n[run]\nflags = no-noise omit-mu-tilde\n")
        assert cfg.run.flags == StepFlags(noise=False, omit_mu_tilde=True)

    def test_soliton_default_amplitude(self):
        cfg = parse_config(MINIMAL.replace("lambda = -1", "lambda = 1")
                           + "initial = soliton\n")
        assert cfg.initial.amplitude == pytest.approx(math.sqrt(2.0))

    def test_dt_bigger_than_horizon_rejected(self):
        with pytest.raises(ConfigError, match="dt"):
            parse_config(MINIMAL.replace("dt = 1e-3", "dt = 2.0"))


def config_strategy():
    floats = st.floats(min_value=0.1, max_value=8.0, allow_nan=False)
    mode = st.builds(
        ModeConfig,
        mu_re=st.floats(min_value=-2, max_value=2, allow_nan=False),
        mu_im=st.floats(min_value=-2, max_value=2, allow_nan=False),
        profile=st.sampled_from(["gaussian", "constant", "cosine"]),
        height=floats,
        width=floats,
        center=st.tuples(*[st.floats(min_value=-3, max_value=3, allow_nan=False)] * 3),
        kmode=st.tuples(*[st.integers(min_value=-4, max_value=4)] * 3),
    )
    return st.builds(
        RunConfig,
        d=st.sampled_from([1, 2]),
        n=st.sampled_from([8, 16, 64]),
        length=floats,
        alpha=st.floats(min_value=1.1, max_value=2.9, allow_nan=False),
        lam=st.sampled_from([1, -1]),
        T=st.floats(min_value=0.1, max_value=2.0, allow_nan=False),
        dt=st.floats(min_value=1e-4, max_value=0.05, allow_nan=False),
        scheme=st.sampled_from(["direct", "rescaled", "both"]),
        initial=st.builds(
            InitialSpec,
            kind=st.sampled_from(["gaussian", "plane-wave"]),
            amplitude=floats,
            width=floats,
            center=st.tuples(*[st.floats(min_value=-2, max_value=2, allow_nan=False)] * 3),
            kmode=st.tuples(*[st.integers(min_value=0, max_value=3)] * 3),
            path=st.just(""),
        ),
        modes=st.lists(mode, max_size=3).map(tuple),
        run=st.builds(
            RunSection,
            n_paths=st.integers(min_value=1, max_value=64),
            seed=st.integers(min_value=0, max_value=2 ** 63 - 1),
            stride=st.integers(min_value=1, max_value=10),
            out=st.sampled_from(["out", "results/a", "tmp_dir"]),
            h1_blowup_factor=st.floats(min_value=2, max_value=1e7, allow_nan=False),
            spacetime_blowup_factor=st.floats(min_value=2, max_value=1e7, allow_nan=False),
            flags=st.builds(StepFlags, linear=st.booleans(), nonlinear=st.booleans(),
                            noise=st.booleans(), omit_mu_tilde=st.booleans()),
            threads=st.integers(min_value=0, max_value=8),
        ),
        verify=st.builds(VerifySection,
                         identities=st.booleans(),
                         levels=st.integers(min_value=1, max_value=5),
                         paths=st.integers(min_value=1, max_value=64)),
    )


class TestRoundTrip:
    @given(config_strategy())
    @settings(max_examples=100, deadline=None)
    def test_serialize_parse_roundtrip(self, cfg):
        assert parse_config(serialize_config(cfg)) == cfg


class TestInitialData:
    def test_gaussian(self):
        cfg = parse_config(MINIMAL + "amplitude = 2.0\nwidth = 1.5\n")
        grid = build_grid(cfg)
        x = build_initial(cfg, grid)
        xi = grid.meshes[0]
        assert np.max(np.abs(x.values - 2.0 * np.exp(-xi ** 2 / (2 * 1.5 ** 2)))) <= 1e-14

    def test_soliton(self):
        cfg = parse_config(MINIMAL.replace("lambda = -1", "lambda = 1")
                           + "initial = soliton\n")
        grid = build_grid(cfg)
        x = build_initial(cfg, grid)
        xi = grid.meshes[0]
        assert np.max(np.abs(x.values - np.sqrt(2.0) / np.cosh(xi))) <= 1e-14

    def test_plane_wave_is_on_grid(self):
        cfg = parse_config(MINIMAL + "initial = plane-wave\nkmode = 2 0 0\n")
        grid = build_grid(cfg)
        x = build_initial(cfg, grid)
        xhat = np.fft.fft(x.values)
        live = np.zeros_like(xhat)
        live[2] = xhat[2]
        assert np.max(np.abs(xhat - live)) <= 1e-10 * np.max(np.abs(xhat))

    def test_file_initial_roundtrip(self, tmp_path):
        grid = Grid(1, 64, 16.0)
        xi = grid.meshes[0]
        orig = Field(grid, np.exp(-xi ** 2) * np.exp(1j * xi))
        snap = tmp_path / "x.bin"
        write_snapshot(snap, orig, 0.0)
        cfg = parse_config(MINIMAL + f"initial = file\npath = {snap}\n")
        x = build_initial(cfg, build_grid(cfg))
        assert np.array_equal(x.values, orig.values)

    def test_file_grid_mismatch(self, tmp_path):
        grid = Grid(1, 128, 16.0)
        snap = tmp_path / "x.bin"
        write_snapshot(snap, Field(grid, np.zeros(grid.shape)), 0.0)
        cfg = parse_config(MINIMAL + f"initial = file\npath = {snap}\n")
        with pytest.raises(ConfigError, match="grid"):
            build_initial(cfg, build_grid(cfg))


class TestSnapshots:
    @pytest.mark.parametrize("grid", [Grid(1, 64, 16.0), Grid(2, 16, 4.0),
                                      Grid(3, 8, 2.0)])
    def test_roundtrip_exact(self, tmp_path, grid):
        gen = np.random.Generator(np.random.Philox(key=[5, 6]))
        u = Field(grid, gen.standard_normal(grid.shape)
                  + 1j * gen.standard_normal(grid.shape))
        p = tmp_path / "snap.bin"
        write_snapshot(p, u, 1.25)
        v, t = read_snapshot(p)
        assert t == 1.25
        assert v.grid == grid
        assert np.array_equal(v.values, u.values)

    def test_payload_length(self, tmp_path):
        grid = Grid(1, 64, 16.0)
        p = tmp_path / "snap.bin"
        write_snapshot(p, Field(grid, np.zeros(grid.shape)), 0.0)
        raw = p.read_bytes()
        assert raw[:4] == b"SNLS"
        assert len(raw) == 28 + 16 * 64

    def test_truncated_payload_rejected(self, tmp_path):
        grid = Grid(1, 64, 16.0)
        p = tmp_path / "snap.bin"
        write_snapshot(p, Field(grid, np.zeros(grid.shape)), 0.0)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(SnapshotError, match="payload"):
            read_snapshot(p)

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "snap.bin"
        p.write_bytes(b"XXXX" + bytes(100))
        with pytest.raises(SnapshotError, match="magic"):
            read_snapshot(p)


class TestBuildProblem:
    def test_spec_assembled(self):
        cfg = parse_config(MINIMAL + """
[noise.1]
mu_re = 0.0
mu_im = 1.0
profile = gaussian
""")
        spec = build_problem(cfg)
        assert spec.grid.n == 64
        assert spec.model.conservative
        assert spec.regime.tag == "defocusing-subcritical"
