"""Largest-cluster traces of the marginal Gibbs and lifted samplers.

Data: 2000 draws from 0.9 N(0.9, 1) + 0.1 N(-0.9, 1), two-component model
with alpha = (0.5, 0.5). Prints the median distance of the largest cluster
to 0.9 every 10 sweeps.

    python demos/illustrative_example.py [replicates] [sweeps]
"""

import sys

import numpy as np

from liftmix import ModelSpec
from liftmix.experiments import ExperimentConfig, run_replicates


def main(replicates=20, sweeps=150):
    cfg = ExperimentConfig(model=ModelSpec.gaussian([0.5, 0.5]), n=2000, kernels=["mg", "nr"],
                           data_source="mixture", mixture_weights=[0.9, 0.1],
                           mixture_means=[0.9, -0.9], replicates=replicates, sweeps=sweeps,
                           functionals=["largest"], seed=1)
    recs = run_replicates(cfg)
    print("sweep  median|largest-0.9| (mg)  (nr)")
    for t in range(0, sweeps + 1, 10):
        row = [np.median([abs(r.values["largest"][t] - 0.9) for r in recs if r.kernel == k])
               for k in cfg.kernels]
        print(f"{t:5d}  {row[0]:24.4f}  {row[1]:.4f}")


if __name__ == "__main__":
    main(*map(int, sys.argv[1:]))
