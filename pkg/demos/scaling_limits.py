"""Endpoint laws of the rescaled chains next to their diffusion and PDMP limits.

    python demos/scaling_limits.py [replicates]
"""

import sys

import numpy as np

from liftmix import limits as L


def main(replicates=200):
    for kind in ("mg", "nr"):
        cmp_ = L.rescaled_chain_vs_limit(kind, [50, 100, 200], replicates=replicates, seed=0)
        rows = ", ".join(f"n={n}: {d:.4f}" for n, d in cmp_.rows())
        print(f"{kind}: W1 to the limit {rows}; self-distance of the limit {cmp_.floor:.4f}")
    vel = L.VelocityState.random(3, np.random.default_rng(0))
    z0 = L.PdmpState(np.array([0.5, 0.3, 0.2]), vel, 100.0)
    path = L.simulate_pdmp((2.0, 1.0, 0.5), 0.5, 100.0, z0, 2.0, np.random.default_rng(1))
    print(f"PDMP path: {path.n_events} events, final x = {np.round(path.final.x, 4)}, "
          f"frozen={path.final.frozen}")


if __name__ == "__main__":
    main(*map(int, sys.argv[1:]))
