"""Compare ground energies from the displaced and plain Fock bases.

Prints, per coupling, the DCS energy at several truncations and the gap
of each plain-Fock cutoff to the largest DCS truncation.
"""
import argparse

import numpy as np

from dickestark import ModelParams, build_dfs_hamiltonian, dcs_decomposition, eigendecompose


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-atoms", type=int, default=32)
    parser.add_argument("--stark-u", type=float, default=1.0)
    parser.add_argument("--lam", type=float, nargs="+", default=list(np.linspace(0, 0.6, 7)))
    parser.add_argument("--dcs", type=int, nargs="+", default=[6, 12, 25, 50])
    parser.add_argument("--dfs", type=int, nargs="+", default=[8, 16, 32, 64])
    args = parser.parse_args(argv)
    print("lam," + ",".join(f"E_dcs{k}" for k in args.dcs) + "," + ",".join(f"dE_dfs{n}" for n in args.dfs))
    for lam in args.lam:
        p = ModelParams(args.n_atoms, lam, args.stark_u)
        dcs = [dcs_decomposition(p, k, n_levels=1).eigenvalues[0] for k in args.dcs]
        dfs = [eigendecompose(build_dfs_hamiltonian(p, n), n_levels=1).eigenvalues[0] - dcs[-1] for n in args.dfs]
        print(f"{lam:.4g}," + ",".join(f"{e:.12g}" for e in dcs) + "," + ",".join(f"{e:.3e}" for e in dfs))


if __name__ == "__main__":
    main()
