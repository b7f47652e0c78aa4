"""Exact asymptotic variances of the three allocation samplers on a tiny instance.

    python demos/exact_oracle.py
"""

import numpy as np

from liftmix import Dataset, ModelSpec
from liftmix import exact as E


def main():
    model = ModelSpec.gaussian([1.0, 1.0, 1.0])
    data = Dataset(np.array([[-1.2], [0.1], [0.4], [2.0], [2.3]]))
    n, K = 5, 3
    configs = E.all_allocations(n, K)
    kernels = {k: E.build_kernel(k, model, data, n) for k in ("mg", "r", "nr")}
    print(f"{'functional':<10} {'MG':>10} {'R':>10} {'NR':>10}")
    for name, f in E.FUNCTIONALS.items():
        g = f(configs, K)
        v = [E.asymptotic_variance_exact(P, P.lift(g) if P.lifted else g)
             for P in kernels.values()]
        print(f"{name:<10} {v[0]:10.4f} {v[1]:10.4f} {v[2]:10.4f}")
    mg, r = E.counterexample_entries(8)
    print(f"n=8 counterexample: P_MG={mg:.4f}, P_R={r:.4f}")


if __name__ == "__main__":
    main()
