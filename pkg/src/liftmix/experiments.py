"""Replicate harness: traces, final proportions, Geweke tests and batch means.

A sweep is n kernel applications for every sampler. Each replicate r draws
its random streams from ``SeedSequence([seed, r])`` spawned into three
children (data, initial state, chain), so a replicate's output depends only
on the master seed and its index, never on worker scheduling.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import ks_2samp, wasserstein_distance

from .model import Dataset, ModelKind, ModelSpec, simulate_dataset, simulate_fixed_mixture
from .samplers import KERNELS, Chain, ConditionalParams, init_state

DATA_SOURCES = ("none", "model", "mixture", "file")
INIT_MODES = ("uniform", "all-in-one")


# functionals of the cluster counts

def _largest(counts, n):
    return counts.max() / n


def functional_names(K: int) -> list[str]:
    return ["largest"] + [f"prop_{k + 1}" for k in range(K)]


def eval_functional(name: str, counts: np.ndarray, n: int) -> float:
    if name == "largest":
        return _largest(counts, n)
    if name.startswith("prop_"):
        k = int(name[5:]) - 1
        if not 0 <= k < counts.size:
            raise ValueError(f"functional {name!r} out of range for K={counts.size}")
        return counts[k] / n
    raise ValueError(f"unknown functional {name!r}")


@dataclass
class ExperimentConfig:
    model: ModelSpec
    n: int
    kernels: list = field(default_factory=lambda: ["nr"])
    data_source: str = "none"
    data_path: str | None = None
    mixture_weights: list | None = None
    mixture_means: list | None = None
    mixture_var: float = 1.0
    xi: float = 0.5
    s: float = 1.0
    replicates: int = 1
    sweeps: int = 1
    functionals: list = field(default_factory=lambda: ["largest", "prop_1"])
    seed: int = 0
    init: str = "uniform"
    workers: int = 1
    output_dir: str | None = None

    def __post_init__(self):
        self.kernels = [self.kernels] if isinstance(self.kernels, str) else list(self.kernels)
        self.validate()

    def validate(self) -> None:
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.sweeps < 0:
            raise ValueError("sweeps must be >= 0")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        for k in self.kernels:
            if k not in KERNELS:
                raise ValueError(f"unknown sampler kind {k!r}")
        if self.data_source not in DATA_SOURCES:
            raise ValueError(f"unknown data source {self.data_source!r}")
        if self.init not in INIT_MODES:
            raise ValueError(f"unknown init mode {self.init!r}")
        names = set(functional_names(self.model.K))
        for f in self.functionals:
            if f not in names:
                raise ValueError(f"unknown functional {f!r}")
        if self.data_source == "none" and self.model.kind is not ModelKind.PRIOR_ONLY:
            raise ValueError("a likelihood model needs a data source")
        if self.data_source == "file" and not self.data_path:
            raise ValueError("data.path is required for file data")
        if self.data_source == "mixture" and (self.mixture_weights is None
                                              or self.mixture_means is None):
            raise ValueError("mixture data needs weights and means")


@dataclass
class ReplicateRecord:
    kernel: str
    replicate: int
    values: dict
    counts: np.ndarray
    cost: int
    steps: int

    @property
    def proportions(self) -> np.ndarray:
        return self.counts / self.counts.sum()


def replicate_seeds(seed: int, r: int):
    """(data, init, chain) seed sequences for replicate r."""
    return np.random.SeedSequence([int(seed), int(r)]).spawn(3)


def _shared_data(cfg: ExperimentConfig) -> Dataset | None:
    if cfg.data_source == "none":
        return Dataset.empty(cfg.n)
    if cfg.data_source == "file":
        return Dataset.from_csv(cfg.data_path)
    if cfg.data_source == "mixture":
        return simulate_fixed_mixture(cfg.mixture_weights, cfg.mixture_means, cfg.mixture_var,
                                      cfg.n, np.random.SeedSequence([int(cfg.seed)])).data
    return None  # drawn per replicate


def expected_cost(kernel: str, steps: int, K: int) -> int | None:
    if kernel == "mg":
        return steps * K
    if kernel in ("r", "nr", "qnr"):
        return steps * 2
    return None


def run_one(cfg: ExperimentConfig, r: int, kernel: str, data: Dataset | None = None,
            data_seed=None) -> ReplicateRecord:
    """One replicate of one kernel; functionals recorded after every sweep."""
    ds, init_ss, chain_ss = replicate_seeds(cfg.seed, r)
    if data is None:
        data = simulate_dataset(cfg.model, cfg.n, ds if data_seed is None else data_seed).data
    K, n = cfg.model.K, data.n
    init_rng = np.random.default_rng(init_ss)
    state, velocity = init_state(cfg.init, data, K, init_rng)
    params = ConditionalParams.from_prior(cfg.model, init_rng) if kernel == "cd" else None
    chain = Chain(kernel, cfg.model, data, state, velocity, params, xi=cfg.xi, s=cfg.s)
    rng = np.random.default_rng(chain_ss)
    values = {f: np.empty(cfg.sweeps + 1) for f in cfg.functionals}
    for f in cfg.functionals:
        values[f][0] = eval_functional(f, state.counts, n)
    for t in range(1, cfg.sweeps + 1):
        cost = chain.run(n, rng)
        want = expected_cost(kernel, n, K)
        if want is not None and cost != want:
            raise AssertionError(f"{kernel}: sweep cost {cost} != {want}")
        if kernel == "cd" and (cost % K or cost > n * K):
            raise AssertionError(f"cd: sweep cost {cost} is not a multiple of K up to nK")
        for f in cfg.functionals:
            values[f][t] = eval_functional(f, state.counts, n)
    return ReplicateRecord(kernel, r, values, state.counts.copy(), chain.cost, chain.steps)


def _task(args):
    cfg, r, kernel, data = args
    return run_one(cfg, r, kernel, data)


def default_workers() -> int:
    env = os.environ.get("LIFTMIX_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_replicates(cfg: ExperimentConfig) -> list[ReplicateRecord]:
    """All (kernel, replicate) runs, ordered by kernel then replicate."""
    cfg.validate()
    data = _shared_data(cfg)
    tasks = [(cfg, r, k, data) for k in cfg.kernels for r in range(cfg.replicates)]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            return list(ex.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
    return [_task(t) for t in tasks]


# reference laws and distances

def dirichlet_multinomial_reference(alpha, n: int, draws: int, rng) -> np.ndarray:
    """Proportion vectors counts / n with w ~ Dir(alpha), counts ~ Mult(n, w)."""
    rng = np.random.default_rng(rng)
    alpha = np.asarray(alpha, dtype=float)
    w = rng.dirichlet(alpha, size=draws)
    counts = rng.multinomial(n, w)
    return counts / n


def distribution_distance(a, b, kind: str = "ks") -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    kind = kind.lower()
    if kind == "ks":
        return float(ks_2samp(a, b).statistic)
    if kind == "w1":
        return float(wasserstein_distance(a, b))
    raise ValueError(f"unknown distance {kind!r}")


def batch_means_asymptotic_variance(trace, batches: int, discard: float = 0.0,
                                    return_se: bool = False):
    """Batch size times the sample variance of batch means.

    The first ``discard`` fraction of the trace is dropped, then any
    remainder that does not fill a batch. The standard error uses the
    chi-square law of the batch-means variance, var * sqrt(2 / (B - 1)).
    """
    x = np.asarray(trace, dtype=float)
    x = x[int(len(x) * discard):]
    if batches < 2:
        raise ValueError("need at least two batches")
    b = len(x) // batches
    if b < 1:
        raise ValueError("trace shorter than the batch count")
    means = x[:b * batches].reshape(batches, b).mean(axis=1)
    var = b * means.var(ddof=1)
    if return_se:
        return var, var * math.sqrt(2.0 / (batches - 1))
    return var


# Geweke-style test

@dataclass
class GewekeResult:
    kernel: str
    ks: float
    w1: float
    floor: float
    floor_sd: float
    threshold: float
    finals: np.ndarray

    @property
    def passed(self) -> bool:
        return self.ks <= self.floor + self.threshold


def reference_floor(reference: np.ndarray, size: int, repeats: int, rng) -> tuple[float, float]:
    """Mean and sd of KS between a size-``size`` reference subsample and the reference."""
    rng = np.random.default_rng(rng)
    d = [distribution_distance(rng.choice(reference, size, replace=False), reference)
         for _ in range(repeats)]
    return float(np.mean(d)), float(np.std(d, ddof=1))


def geweke_experiment(cfg: ExperimentConfig, reference_draws: int = 20000,
                      floor_repeats: int = 50, threshold: float = 0.07,
                      records: list | None = None) -> list[GewekeResult]:
    """First-component final proportions against the Dirichlet-multinomial law.

    Each replicate draws fresh (w, theta, Y) from the model, so the final
    allocation should follow the prior law of the allocations.
    """
    if cfg.data_source != "model":
        raise ValueError("the Geweke test needs data drawn from the model")
    if records is None:
        records = run_replicates(cfg)
    ref_rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 2**32 - 1]))
    ref = dirichlet_multinomial_reference(cfg.model.alpha, cfg.n, reference_draws, ref_rng)[:, 0]
    floor, floor_sd = reference_floor(ref, cfg.replicates, floor_repeats, ref_rng)
    out = []
    for k in cfg.kernels:
        finals = np.array([rec.proportions[0] for rec in records if rec.kernel == k])
        out.append(GewekeResult(k, distribution_distance(finals, ref),
                                distribution_distance(finals, ref, "w1"),
                                floor, floor_sd, threshold, finals))
    return out


# CSV output

def write_traces(path, records: list[ReplicateRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kernel", "replicate", "sweep", "functional", "value"])
        for rec in records:
            for f, vals in rec.values.items():
                for t, v in enumerate(vals):
                    w.writerow([rec.kernel, rec.replicate, t, f, repr(float(v))])


def write_final(path, records: list[ReplicateRecord]) -> None:
    K = records[0].counts.size if records else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kernel", "replicate"] + [f"prop_{k + 1}" for k in range(K)] + ["cost"])
        for rec in records:
            w.writerow([rec.kernel, rec.replicate]
                       + [repr(float(p)) for p in rec.proportions] + [rec.cost])


def write_report(path, rows: list[dict]) -> None:
    cols = ["check", "kernel", "metric", "value", "threshold", "pass"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow(row)


def summary_rows(cfg: ExperimentConfig, records: list[ReplicateRecord]) -> list[dict]:
    """Median final value of each functional per kernel."""
    rows = []
    for k in cfg.kernels:
        recs = [r for r in records if r.kernel == k]
        for f in cfg.functionals:
            med = float(np.median([r.values[f][-1] for r in recs]))
            rows.append({"check": "final-median", "kernel": k, "metric": f,
                         "value": repr(med), "threshold": "", "pass": ""})
    return rows


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
