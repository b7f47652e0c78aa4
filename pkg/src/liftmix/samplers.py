"""Markov kernels on allocation vectors.

``step_*`` functions apply one kernel step and report what happened; they
are convenient for tests and small experiments. Long runs should go through
:class:`Chain`, which loops in compiled code.

Kernels:

* ``mg``  -- random-scan marginal Gibbs sampler (K conditional evaluations per step)
* ``r``   -- reversible Metropolis over pairs of clusters (2 evaluations)
* ``nr``  -- lifted, non-reversible version of ``r`` (2 evaluations)
* ``qnr`` -- lifted kernel kept on one uniformly chosen pair for a geometric
  number of sub-steps (2 evaluations per sub-step)
* ``cd``  -- random-scan conditional sampler on (c, w, theta)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .model import AllocationState, Dataset, ModelKind, ModelSpec

DEFAULT_XI = 0.5

KERNELS = {"mg": _k.K_MG, "r": _k.K_R, "nr": _k.K_NR, "qnr": _k.K_QNR, "cd": _k.K_CD}


class MoveKind(str, enum.Enum):
    MG_UPDATE = "mg-update"
    PAIR_ACCEPT = "pair-accept"
    PAIR_REJECT = "pair-reject"
    PAIR_REJECT_FLIP = "pair-reject-flip"
    EMPTY_NOOP = "empty-cluster-noop"
    EMPTY_FLIP = "empty-cluster-flip"
    CD_ALLOCATION = "cd-allocation"
    CD_PARAMS = "cd-params"


_MOVE_CODES = {
    _k.MV_MG: MoveKind.MG_UPDATE,
    _k.MV_ACCEPT: MoveKind.PAIR_ACCEPT,
    _k.MV_REJECT: MoveKind.PAIR_REJECT,
    _k.MV_REJECT_FLIP: MoveKind.PAIR_REJECT_FLIP,
    _k.MV_EMPTY_NOOP: MoveKind.EMPTY_NOOP,
    _k.MV_EMPTY_FLIP: MoveKind.EMPTY_FLIP,
    _k.MV_CD_ALLOC: MoveKind.CD_ALLOCATION,
    _k.MV_CD_PARAMS: MoveKind.CD_PARAMS,
}


@dataclass
class StepOutcome:
    kind: MoveKind
    cost: int
    point: int | None = None
    pair: tuple[int, int] | None = None
    refreshes: int = 0
    substeps: int = 1


class VelocityState:
    """Directions v[k, k'] in {-1, +1} for pairs k < k'.

    ``V(a, b)`` is the antisymmetric extension; ``V(a, b) == +1`` for a < b
    means the pair currently proposes moves from a to b.
    """

    def __init__(self, table):
        table = np.array(table, dtype=np.int8)
        K = table.shape[0]
        iu = np.triu_indices(K, 1)
        if not np.all(np.abs(table[iu]) == 1):
            raise ValueError("velocities must be +1 or -1")
        self.table = np.zeros((K, K), dtype=np.int8)
        self.table[iu] = table[iu]

    @classmethod
    def random(cls, K: int, rng) -> "VelocityState":
        rng = np.random.default_rng(rng)
        return cls(rng.choice(np.array([-1, 1], dtype=np.int8), size=(K, K)))

    @classmethod
    def constant(cls, K: int, value: int = 1) -> "VelocityState":
        return cls(np.full((K, K), value, dtype=np.int8))

    @property
    def K(self) -> int:
        return self.table.shape[0]

    def V(self, a: int, b: int) -> int:
        if a == b:
            return 0
        if a < b:
            return int(self.table[a, b])
        return -int(self.table[b, a])

    def matrix(self) -> np.ndarray:
        """Full antisymmetric K x K matrix of V."""
        up = np.triu(self.table.astype(int), 1)
        return up - up.T

    def flip(self, a: int, b: int) -> None:
        k, kk = min(a, b), max(a, b)
        self.table[k, kk] = -self.table[k, kk]

    def vector(self) -> np.ndarray:
        return self.table[np.triu_indices(self.K, 1)].copy()

    def copy(self) -> "VelocityState":
        return VelocityState(self.table)


@dataclass
class ConditionalParams:
    """Weights and atoms for the conditional sampler."""

    w: np.ndarray
    theta: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        self.w = np.array(self.w, dtype=float)
        if np.any(self.w < 0) or abs(self.w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must lie on the simplex")
        self.theta = np.array(self.theta, dtype=float)
        if self.theta.ndim == 1:
            self.theta = self.theta[:, None]

    @classmethod
    def from_prior(cls, model: ModelSpec, rng) -> "ConditionalParams":
        rng = np.random.default_rng(rng)
        K = model.K
        w = rng.dirichlet(model.alpha)
        w = w / w.sum()
        if model.kind is ModelKind.GAUSSIAN_ISO:
            theta = model.theta0 + np.sqrt(model.sigma02) * rng.standard_normal((K, model.dim))
        elif model.kind is ModelKind.POISSON_GAMMA:
            theta = rng.gamma(model.beta1, 1.0 / model.beta2, size=(K, 1))
        else:
            theta = np.zeros((K, 0))
        return cls(w, theta)


def init_state(mode: str, data: Dataset, K: int, rng, given=None):
    """Initial allocation and velocities.

    ``mode`` is ``"uniform"`` (labels iid uniform), ``"all-in-one"`` (every
    point in cluster 0) or ``"given"`` (``given`` is the allocation vector).
    Velocities are iid uniform on {-1, +1}.
    """
    rng = np.random.default_rng(rng)
    n = data.n
    if mode in ("uniform", "uniform-random"):
        c = rng.integers(0, K, size=n)
    elif mode == "all-in-one":
        c = np.zeros(n, dtype=np.int64)
    elif mode == "given":
        if given is None:
            raise ValueError("given mode needs an allocation vector")
        c = np.asarray(given)
        if c.shape != (n,) or np.any(c < 0) or np.any(c >= K):
            raise ValueError(f"given allocation must lie in [0, {K})^n")
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    state = AllocationState(c, K, data)
    velocity = VelocityState.random(K, rng)
    return state, velocity


def _common(model: ModelSpec, state: AllocationState, data: Dataset):
    kind, alpha, hyper, theta0 = model.packed()
    return (kind, alpha, hyper, theta0, state.c, state.counts, state.members,
            state.pos, state.sums, state.moves, data.Y)


def step_mg(state: AllocationState, model: ModelSpec, data: Dataset, rng) -> StepOutcome:
    buf = np.empty(state.K)
    i, _ = _k.step_mg(*_common(model, state, data), rng, buf)
    return StepOutcome(MoveKind.MG_UPDATE, state.K, point=int(i))


def sample_pair(state: AllocationState, rng) -> tuple[int, int]:
    """Pair k < k' with probability (n_k + n_k') / ((K - 1) n)."""
    k, kk = _k.sample_pair(state.c, state.K, rng)
    return int(k), int(kk)


def step_r(state: AllocationState, model: ModelSpec, data: Dataset, rng) -> StepOutcome:
    code, i, k, kk = _k.step_r(*_common(model, state, data), rng)
    return StepOutcome(_MOVE_CODES[code], 2, point=None if i < 0 else int(i),
                       pair=(int(k), int(kk)))


def step_lifted_pair(state: AllocationState, velocity: VelocityState, model: ModelSpec,
                     data: Dataset, pair, xi: float, rng) -> StepOutcome:
    k, kk = pair
    if not 0 <= k < kk < state.K:
        raise ValueError("pair must satisfy 0 <= k < k' < K")
    code, i, refresh = _k.lifted_pair(*_common(model, state, data), velocity.table,
                                      int(k), int(kk), xi / state.n, rng)
    return StepOutcome(_MOVE_CODES[code], 2, point=None if i < 0 else int(i),
                       pair=(int(k), int(kk)), refreshes=int(refresh))


def step_nr(state: AllocationState, velocity: VelocityState, model: ModelSpec,
            data: Dataset, xi: float, rng) -> StepOutcome:
    code, i, k, kk, refresh = _k.step_nr(*_common(model, state, data), velocity.table,
                                         float(xi), rng)
    return StepOutcome(_MOVE_CODES[code], 2, point=None if i < 0 else int(i),
                       pair=(int(k), int(kk)), refreshes=int(refresh))


def step_qnr(state: AllocationState, velocity: VelocityState, model: ModelSpec,
             data: Dataset, s: float, xi: float, rng) -> StepOutcome:
    """One full Q_NR application: uniform pair, geometric number of lifted steps."""
    if not 0 < s <= 1:
        raise ValueError("s must lie in (0, 1]")
    k, kk, t = _k.qnr_draw(state.counts, float(s), rng)
    args = _common(model, state, data)
    eps = xi / state.n
    refreshes = 0
    last = None
    for _ in range(t):
        code, i, refresh = _k.lifted_pair(*args, velocity.table, k, kk, eps, rng)
        refreshes += refresh
        last = code
    return StepOutcome(_MOVE_CODES[last], 2 * t, pair=(int(k), int(kk)),
                       refreshes=refreshes, substeps=int(t))


def step_cd(state: AllocationState, params: ConditionalParams, model: ModelSpec,
            data: Dataset, rng) -> StepOutcome:
    buf = np.empty(state.K)
    theta = _theta_array(params, state.K, data)
    code, i = _k.step_cd(*_common(model, state, data), params.w, theta, rng, buf)
    params.theta = theta
    if code == _k.MV_CD_ALLOC:
        return StepOutcome(MoveKind.CD_ALLOCATION, state.K, point=int(i))
    return StepOutcome(MoveKind.CD_PARAMS, 0)


def _theta_array(params: ConditionalParams, K: int, data: Dataset) -> np.ndarray:
    theta = params.theta
    if theta.shape != (K, data.dim):
        theta = np.zeros((K, data.dim))
    return np.ascontiguousarray(theta, dtype=float)


class Chain:
    """A sampler bound to its model, data and mutable state.

    ``run`` advances the chain in compiled code and returns the number of
    conditional evaluations spent. For ``qnr`` one step is one lifted
    sub-step; the pair being worked on is carried between calls.
    """

    def __init__(self, kernel: str, model: ModelSpec, data: Dataset, state: AllocationState,
                 velocity: VelocityState | None = None, params: ConditionalParams | None = None,
                 xi: float = DEFAULT_XI, s: float = 1.0):
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}; expected one of {sorted(KERNELS)}")
        if not 0 < s <= 1:
            raise ValueError("s must lie in (0, 1]")
        if xi < 0:
            raise ValueError("xi must be non-negative")
        data.check(model)
        self.kernel = kernel
        self.model = model
        self.data = data
        self.state = state
        self.velocity = velocity if velocity is not None else VelocityState.constant(state.K)
        if kernel == "cd" and params is None:
            raise ValueError("the conditional sampler needs initial parameters")
        self.params = params if params is not None else ConditionalParams(
            np.full(state.K, 1.0 / state.K))
        self._theta = _theta_array(self.params, state.K, data)
        self.xi = float(xi)
        self.s = float(s)
        self.carry = np.zeros(3, dtype=np.int64)
        self.steps = 0
        self.cost = 0

    def run(self, n_steps: int, rng, trace: np.ndarray | None = None,
            freeze_count: int = -1) -> int:
        """Advance ``n_steps``; returns the cost spent by this call."""
        if trace is None:
            trace = np.zeros(0, dtype=np.int64)
        kind, alpha, hyper, theta0 = self.model.packed()
        st = self.state
        n_steps = int(n_steps)
        rec = trace.shape[0] >= n_steps
        done = cost = 0
        # chunked so that run_steps gets a chance to rebuild the sums
        while done < n_steps:
            chunk = min(n_steps - done, _k.REFRESH_EVERY)
            tr = trace[done:done + chunk] if rec else trace[:0]
            d, cst = _k.run_steps(
                KERNELS[self.kernel], chunk, kind, alpha, hyper, theta0, self.data.Y,
                st.c, st.counts, st.members, st.pos, st.sums, st.moves,
                self.velocity.table, self.carry, self.params.w, self._theta, self.xi,
                self.s, int(freeze_count), rng, tr)
            done += int(d)
            cost += int(cst)
            if d < chunk:
                break
        self.params.theta = self._theta
        self.steps += int(done)
        self.cost += int(cost)
        self.last_done = int(done)
        return int(cost)

    @property
    def cost_per_step(self) -> int:
        return self.state.K if self.kernel in ("mg", "cd") else 2
