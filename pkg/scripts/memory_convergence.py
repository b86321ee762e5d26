"""Truncated-GQME error against memory-truncated path sums of increasing length.

Prints, for each order r, the max |<sigma_z>| deviation from the memory-k_ref
path sum over 150 steps, plus the spread between path-sum memory lengths (an
estimate of how converged the reference itself is).
"""
import argparse

import numpy as np

from memkernel.bath import BathStatistics, bath_influence, ohmic
from memkernel.gqme import build_kernels_dyck, propagate_gqme
from memkernel.pathsum import iterative_quapi
from memkernel.system import REFERENCE_STATES, bare_full_step, bare_half_step, liouvillian_step, spin_boson, vec


def sigma_z(traj):
    return np.real(traj[:, 0] - traj[:, 3])


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--xi", type=float, default=0.1)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--orders", type=int, nargs="+", default=[4, 6, 8, 10])
    p.add_argument("--refs", type=int, nargs="+", default=[8, 10])
    p.add_argument("--steps", type=int, default=150)
    args = p.parse_args()

    dt = 0.1
    sysm = spin_boson(0.0, 1.0)
    G = bare_half_step(sysm, dt)
    F, L = bare_full_step(G), liouvillian_step(sysm, dt)
    depth = max(max(args.orders), max(args.refs))
    I = bath_influence(ohmic(args.xi, args.s, 7.5), BathStatistics("boson", 5.0), dt, depth)
    rho0 = vec(REFERENCE_STATES[0])
    refs = {k: sigma_z(iterative_quapi(G, F, I, k, args.steps).apply(rho0)) for k in args.refs}
    top = max(args.refs)
    for k in args.refs[:-1]:
        print(f"path sum k={k} vs k={top}: {np.max(np.abs(refs[k] - refs[top])):.4e}")
    K = build_kernels_dyck(G, F, L, I, max(args.orders))
    for r in args.orders:
        z = sigma_z(propagate_gqme(K, L, rho0, args.steps, r))
        print(f"gqme r={r}: {np.max(np.abs(z - refs[top])):.4e}")


if __name__ == "__main__":
    main()
