#!/usr/bin/env python3
"""Residual-vs-dt study for the four evolution identities.

Runs a coupled dyadic dt ladder over an ensemble of paths and prints the
median terminal residual per level with the fitted order, for each identity.
"""

import argparse

import numpy as np

from snls.dynamics import ProblemSpec, SolveOptions, solve_direct
from snls.identities import (h1_identity, hamiltonian_identity, lp_identity,
                             mass_identity)
from snls.noise import (GaussianProfile, NoiseMode, build_model, refine_path,
                        sample_path)
from snls.spectral import Field, Grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--box", type=float, default=16.0)
    ap.add_argument("--mu-re", type=float, default=1.0)
    ap.add_argument("--mu-im", type=float, default=0.0)
    ap.add_argument("--horizon", type=float, default=0.125)
    ap.add_argument("--base-steps", type=int, default=500)
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--paths", type=int, default=32)
    ap.add_argument("--seed", type=int, default=2025)
    args = ap.parse_args()

    grid = Grid(1, args.n, args.box)
    xi = grid.meshes[0]
    x = Field(grid, 0.75 * np.exp(-xi ** 2 / 2.0))
    model = build_model(
        [NoiseMode(complex(args.mu_re, args.mu_im),
                   GaussianProfile(0.7, 3.0, (0, 0, 0)))], grid)
    spec = ProblemSpec(grid, model, alpha=3.0, lam=-1, T=args.horizon)

    fns = {
        "mass": lambda t, p: mass_identity(t, p, model),
        "hamiltonian": lambda t, p: hamiltonian_identity(t, p, model, spec),
        "lp": lambda t, p: lp_identity(t, p, model, spec),
        "h1": lambda t, p: h1_identity(t, p, model, spec),
    }
    res = {n: np.zeros((args.paths, args.levels)) for n in fns}
    for pid in range(args.paths):
        path = sample_path(model, args.horizon, args.base_steps, args.seed, pid)
        for lv in range(args.levels):
            traj = solve_direct(x, path, spec, SolveOptions(stride=1))
            for name, fn in fns.items():
                res[name][pid, lv] = abs(fn(traj, path).terminal_residual)
            if lv + 1 < args.levels:
                path = refine_path(path)

    print(f"{'identity':>12} " +
          " ".join(f"{'lv' + str(i):>11}" for i in range(args.levels)) +
          f" {'order':>7}")
    for name, arr in res.items():
        med = np.median(arr, axis=0)
        order = -np.polyfit(np.arange(args.levels), np.log2(med), 1)[0]
        print(f"{name:>12} " + " ".join(f"{v:11.3e}" for v in med)
              + f" {order:7.3f}")


if __name__ == "__main__":
    main()
