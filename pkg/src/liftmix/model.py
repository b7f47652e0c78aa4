"""Finite mixture targets on allocation vectors.

The target is the marginal posterior of the allocations after integrating
out weights and atoms. Labels are 0-based throughout: ``c[i]`` is in
``range(K)``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as _k


class ModelKind(str, enum.Enum):
    PRIOR_ONLY = "prior-only"
    GAUSSIAN_ISO = "gaussian-iso"
    POISSON_GAMMA = "poisson-gamma"


_KIND_CODE = {
    ModelKind.PRIOR_ONLY: _k.KIND_PRIOR,
    ModelKind.GAUSSIAN_ISO: _k.KIND_GAUSS,
    ModelKind.POISSON_GAMMA: _k.KIND_POISSON,
}


@dataclass(frozen=True)
class ModelSpec:
    """Dirichlet weights plus a conjugate likelihood/prior pair.

    Gaussian covariances are isotropic: ``sigma2 * I_p`` for the likelihood
    and ``sigma02 * I_p`` for the prior on the atoms.
    """

    kind: ModelKind
    alpha: np.ndarray
    theta0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma2: float = 1.0
    sigma02: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        alpha = np.asarray(self.alpha, dtype=float).ravel()
        if alpha.size < 2:
            raise ValueError("need K >= 2 components")
        if not np.all(alpha > 0):
            raise ValueError("alpha entries must be positive")
        object.__setattr__(self, "alpha", alpha)
        theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=float))
        if self.kind is ModelKind.GAUSSIAN_ISO:
            if theta0.size == 0:
                raise ValueError("gaussian model needs theta0")
            if self.sigma2 <= 0 or self.sigma02 <= 0:
                raise ValueError("variances must be positive")
        else:
            theta0 = np.zeros(0)
        if self.kind is ModelKind.POISSON_GAMMA and (self.beta1 <= 0 or self.beta2 <= 0):
            raise ValueError("beta1 and beta2 must be positive")
        object.__setattr__(self, "theta0", theta0)

    @classmethod
    def prior_only(cls, alpha) -> "ModelSpec":
        return cls(ModelKind.PRIOR_ONLY, alpha)

    @classmethod
    def gaussian(cls, alpha, theta0=0.0, sigma2=1.0, sigma02=1.0, dim=None) -> "ModelSpec":
        theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
        if dim is not None and theta0.size == 1 and dim > 1:
            theta0 = np.full(dim, theta0[0])
        return cls(ModelKind.GAUSSIAN_ISO, alpha, theta0=theta0, sigma2=float(sigma2),
                   sigma02=float(sigma02))

    @classmethod
    def poisson(cls, alpha, beta1=1.0, beta2=1.0) -> "ModelSpec":
        return cls(ModelKind.POISSON_GAMMA, alpha, beta1=float(beta1), beta2=float(beta2))

    @property
    def K(self) -> int:
        return self.alpha.size

    @property
    def dim(self) -> int:
        if self.kind is ModelKind.GAUSSIAN_ISO:
            return self.theta0.size
        if self.kind is ModelKind.POISSON_GAMMA:
            return 1
        return 0

    def packed(self):
        """Arguments in the order the compiled kernels expect."""
        hyper = np.array([self.sigma2, self.sigma02, self.beta1, self.beta2])
        return _KIND_CODE[self.kind], self.alpha, hyper, self.theta0


class Dataset:
    """Observations as an ``(n, p)`` float array; ``p == 0`` for prior-only targets."""

    def __init__(self, Y, n: int | None = None):
        if Y is None:
            if n is None or n < 1:
                raise ValueError("prior-only dataset needs n >= 1")
            Y = np.zeros((n, 0))
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[0] < 1:
            raise ValueError("dataset must hold at least one observation")
        self.Y = np.ascontiguousarray(Y)
        self.Y.setflags(write=False)

    @classmethod
    def empty(cls, n: int) -> "Dataset":
        return cls(None, n=n)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def dim(self) -> int:
        return self.Y.shape[1]

    def check(self, model: ModelSpec) -> None:
        if self.dim != model.dim:
            raise ValueError(f"data dimension {self.dim} does not match model dimension {model.dim}")
        if model.kind is ModelKind.POISSON_GAMMA:
            y = self.Y[:, 0]
            if np.any(y < 0) or np.any(y != np.round(y)):
                raise ValueError("poisson observations must be non-negative integers")

    @classmethod
    def from_csv(cls, path, header: bool = False) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if header:
            rows = rows[1:]
        rows = [r for r in rows if r]
        return cls(np.array([[float(v) for v in r] for r in rows]))

    def to_csv(self, path, header: bool = False, integer: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            if header:
                wr.writerow([f"y{j + 1}" for j in range(self.dim)])
            for row in self.Y:
                wr.writerow([str(int(v)) if integer else repr(float(v)) for v in row])


@dataclass
class ClusterStats:
    """Sufficient statistics of one cluster: size and sum of its observations."""

    count: int
    total: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.total = np.atleast_1d(np.asarray(self.total, dtype=float))


class AllocationState:
    """Allocation vector with cached counts, member lists and cluster sums.

    Member lists support O(1) removal (swap-remove through ``pos``) and
    O(1) uniform sampling of a member.
    """

    def __init__(self, c, K: int, data: Dataset):
        c = np.array(c, dtype=np.int64)
        if c.ndim != 1 or c.size != data.n:
            raise ValueError("allocation vector must have length n")
        if np.any(c < 0) or np.any(c >= K):
            raise ValueError(f"labels must lie in 0..{K - 1}")
        self.K = K
        self.Y = data.Y
        self.c = c
        n = c.size
        self.counts = np.zeros(K, dtype=np.int64)
        self.members = np.zeros((K, n), dtype=np.int64)
        self.pos = np.zeros(n, dtype=np.int64)
        self.sums = np.zeros((K, data.dim))
        self.moves = np.zeros(1, dtype=np.int64)
        self.recompute()

    @property
    def n(self) -> int:
        return self.c.size

    def recompute(self) -> None:
        _k.recompute(self.c, self.counts, self.members, self.pos, self.sums, self.Y)
        self.moves[0] = 0

    def move_point(self, i: int, k_to: int) -> None:
        _k.move(self.c, self.counts, self.members, self.pos, self.sums, self.moves,
                self.Y, int(i), int(k_to))

    def cluster(self, k: int) -> np.ndarray:
        return self.members[k, : self.counts[k]].copy()

    def stats(self, k: int, exclude: int | None = None) -> ClusterStats:
        count = int(self.counts[k])
        total = self.sums[k].copy()
        if exclude is not None and self.c[exclude] == k:
            count -= 1
            total -= self.Y[exclude]
        return ClusterStats(count, total)

    def proportions(self) -> np.ndarray:
        return self.counts / self.n

    def copy(self) -> "AllocationState":
        new = object.__new__(AllocationState)
        new.K, new.Y = self.K, self.Y
        for name in ("c", "counts", "members", "pos", "sums", "moves"):
            setattr(new, name, getattr(self, name).copy())
        return new

    def check(self, atol: float = 1e-9) -> None:
        """Raise AssertionError if the caches disagree with ``c``."""
        K, n = self.K, self.n
        assert np.array_equal(self.counts, np.bincount(self.c, minlength=K))
        seen = np.zeros(n, dtype=bool)
        for k in range(K):
            lst = self.members[k, : self.counts[k]]
            assert np.all(self.c[lst] == k)
            assert np.array_equal(self.pos[lst], np.arange(lst.size))
            seen[lst] = True
        assert seen.all()
        fresh = np.zeros_like(self.sums)
        np.add.at(fresh, self.c, self.Y)
        assert np.allclose(self.sums, fresh, rtol=0, atol=atol)


def move_point(state: AllocationState, i: int, k_to: int) -> None:
    state.move_point(i, k_to)


def log_predictive(model: ModelSpec, stats: ClusterStats, y) -> float:
    """Log predictive density of ``y`` joining a cluster with statistics ``stats``.

    ``stats`` must not include ``y`` itself.
    """
    kind, _, hyper, theta0 = model.packed()
    if kind == _k.KIND_PRIOR:
        return 0.0
    y = np.atleast_1d(np.asarray(y, dtype=float))
    Y = np.ascontiguousarray(y[None, :])
    sums = np.ascontiguousarray(np.atleast_1d(stats.total)[None, :], dtype=float)
    return _k.log_pred(kind, hyper, theta0, int(stats.count), sums, 0, Y, 0, -1)


def log_cond_weights(model: ModelSpec, state: AllocationState, data: Dataset, i: int) -> np.ndarray:
    """Unnormalised log full conditional of ``c_i`` over the K labels."""
    kind, alpha, hyper, theta0 = model.packed()
    out = np.empty(state.K)
    _k.log_cond_weights(kind, alpha, hyper, theta0, state.c, state.counts, state.sums,
                        data.Y, int(i), out)
    return out


def cond_probs(model: ModelSpec, state: AllocationState, data: Dataset, i: int) -> np.ndarray:
    lw = log_cond_weights(model, state, data, i)
    w = np.exp(lw - lw.max())
    return w / w.sum()


def log_accept_ratio(model: ModelSpec, state: AllocationState, data: Dataset, i: int,
                     k_minus: int, k_plus: int) -> float:
    """Log Metropolis-Hastings ratio for moving point i from k_minus to k_plus."""
    if state.c[i] != k_minus:
        raise ValueError("point i is not in cluster k_minus")
    if k_plus == k_minus:
        raise ValueError("k_plus must differ from k_minus")
    kind, alpha, hyper, theta0 = model.packed()
    return _k.log_accept(kind, alpha, hyper, theta0, state.c, state.counts, state.sums,
                         data.Y, int(i), int(k_minus), int(k_plus))


@dataclass
class SimulatedData:
    data: Dataset
    weights: np.ndarray
    atoms: np.ndarray
    labels: np.ndarray | None = None


def simulate_dataset(model: ModelSpec, n: int, seed) -> SimulatedData:
    """Draw weights, atoms and then n observations from the mixture model."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    K = model.K
    w = rng.dirichlet(model.alpha)
    if model.kind is ModelKind.PRIOR_ONLY:
        return SimulatedData(Dataset.empty(n), w, np.zeros((K, 0)))
    z = rng.choice(K, size=n, p=w)
    if model.kind is ModelKind.GAUSSIAN_ISO:
        p = model.dim
        atoms = model.theta0 + math.sqrt(model.sigma02) * rng.standard_normal((K, p))
        Y = atoms[z] + math.sqrt(model.sigma2) * rng.standard_normal((n, p))
    else:
        atoms = rng.gamma(model.beta1, 1.0 / model.beta2, size=(K, 1))
        Y = rng.poisson(atoms[z, 0]).astype(float)[:, None]
    return SimulatedData(Dataset(Y), w, atoms, z)


def simulate_fixed_mixture(weights, means, var: float, n: int, seed) -> SimulatedData:
    """n draws from sum_k weights[k] N(means[k], var I)."""
    rng = np.random.default_rng(seed)
    weights = np.asarray(weights, dtype=float)
    means = np.asarray(means, dtype=float)
    if means.ndim == 1:
        means = means[:, None]
    z = rng.choice(weights.size, size=n, p=weights / weights.sum())
    Y = means[z] + math.sqrt(var) * rng.standard_normal((n, means.shape[1]))
    return SimulatedData(Dataset(Y), weights, means, z)
