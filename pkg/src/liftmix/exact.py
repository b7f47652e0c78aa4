"""Brute-force oracle on enumerable state spaces.

Every allocation in [K]^n is listed explicitly, the target is evaluated from
closed-form cluster marginal likelihoods, and each kernel is assembled as a
sparse transition matrix by summing the probabilities of all algorithm
branches. None of this touches the predictive formulas used by the samplers:
conditionals and acceptance ratios are recovered here from ratios of
enumerated target masses, so agreement between the two is a real check.

State layout. Allocations are indexed in lexicographic order with ``c[0]`` the
most significant digit. Lifted states append the velocity table as a bit
string over the pairs (k, k') with k < k' in lexicographic order; bit d set
means v = +1 on pair d. The lifted index is ``c_index * 2**D + vbits``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import gammaln

from .model import Dataset, ModelKind, ModelSpec

MAX_STATES = 10**6


class SizeGuardError(ValueError):
    """Raised when an enumeration would exceed ``MAX_STATES`` states."""


def pair_list(K: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(K) for b in range(a + 1, K)]


def _guard(n: int, K: int, lifted: bool) -> int:
    D = K * (K - 1) // 2
    size = K**n * (2**D if lifted else 1)
    if size > MAX_STATES:
        raise SizeGuardError(f"{size} states exceeds the guard of {MAX_STATES}")
    return size


def all_allocations(n: int, K: int) -> np.ndarray:
    """All of [K]^n as an (K**n, n) array in lexicographic order."""
    _guard(n, K, False)
    return np.array(list(itertools.product(range(K), repeat=n)), dtype=np.int64).reshape(-1, n)


def allocation_index(c, K: int) -> int:
    idx = 0
    for x in c:
        idx = idx * K + int(x)
    return idx


def _log_marginal_gauss(model: ModelSpec, m, s, ss):
    """Log marginal likelihood of a cluster with m points, per-dim sums s and sums of squares ss.

    Centred at theta0. Uses det(s2 I + s02 11') = s2^(m-1) (s2 + m s02) and
    Sherman-Morrison for the quadratic form, dimension by dimension.
    """
    s2, s02 = model.sigma2, model.sigma02
    p = model.dim
    m = m.astype(float)
    denom = s2 + m * s02
    logdet = (m - 1.0) * math.log(s2) + np.log(denom)
    quad = (ss - s02 * s * s / denom[:, None]).sum(axis=1) / s2
    return -0.5 * m * p * math.log(2 * math.pi) - 0.5 * p * logdet - 0.5 * quad


def _log_marginal_poisson(model: ModelSpec, m, t, log_fact):
    a, b = model.beta1, model.beta2
    m = m.astype(float)
    return (a * math.log(b) - gammaln(a) + gammaln(a + t) - (a + t) * np.log(b + m)
            - log_fact)


def log_target(model: ModelSpec, data: Dataset, configs: np.ndarray) -> np.ndarray:
    """Unnormalised log pi(c) for each row of ``configs``."""
    K = model.K
    alpha = model.alpha
    n = configs.shape[1]
    out = np.full(configs.shape[0], -gammaln(alpha.sum() + n))
    Y = data.Y
    if model.kind is ModelKind.GAUSSIAN_ISO:
        R = Y - model.theta0[None, :]
        R2 = R * R
    for k in range(K):
        mask = (configs == k).astype(float)
        nk = mask.sum(axis=1)
        out += gammaln(alpha[k] + nk)
        if model.kind is ModelKind.GAUSSIAN_ISO:
            out += _log_marginal_gauss(model, nk, mask @ R, mask @ R2)
        elif model.kind is ModelKind.POISSON_GAMMA:
            y = Y[:, 0]
            out += _log_marginal_poisson(model, nk, mask @ y, mask @ gammaln(y + 1.0))
    return out


def enumerate_target(model: ModelSpec, data: Dataset | None, n: int, K: int | None = None,
                     lifted: bool = False) -> np.ndarray:
    """Normalised target over [K]^n, or over [K]^n x {-1,+1}^D when ``lifted``."""
    K = model.K if K is None else K
    if K != model.K:
        raise ValueError("K does not match the model")
    if data is None:
        data = Dataset.empty(n)
    if data.n != n:
        raise ValueError("dataset size does not match n")
    _guard(n, K, lifted)
    lt = log_target(model, data, all_allocations(n, K))
    pi = np.exp(lt - lt.max())
    pi /= pi.sum()
    if lifted:
        D = K * (K - 1) // 2
        pi = np.repeat(pi, 2**D) / 2**D
    return pi


@dataclass
class EnumeratedKernel:
    kind: str
    P: sp.csr_matrix
    pi: np.ndarray
    n: int
    K: int
    lifted: bool

    @property
    def n_states(self) -> int:
        return self.pi.size

    def dense(self) -> np.ndarray:
        return self.P.toarray()

    def lift(self, g: np.ndarray) -> np.ndarray:
        """Extend a functional of c to the state space of this kernel."""
        if not self.lifted:
            return g
        D = self.K * (self.K - 1) // 2
        return np.repeat(g, 2**D)

    def c_marginal(self, P_row_or_vec: np.ndarray) -> np.ndarray:
        if not self.lifted:
            return P_row_or_vec
        D = self.K * (self.K - 1) // 2
        return P_row_or_vec.reshape(-1, 2**D).sum(axis=1)


class _Space:
    """Shared precomputation for one (model, data, n) instance."""

    def __init__(self, model: ModelSpec, data: Dataset | None, n: int):
        self.model = model
        self.K = K = model.K
        self.n = n
        self.data = Dataset.empty(n) if data is None else data
        self.configs = all_allocations(n, K)
        self.S = self.configs.shape[0]
        lt = log_target(model, self.data, self.configs)
        self.logpi = lt - lt.max()
        pi = np.exp(self.logpi)
        self.pi = pi / pi.sum()
        self.counts = np.stack([(self.configs == k).sum(axis=1) for k in range(K)], axis=1)
        self.place = K ** np.arange(n - 1, -1, -1)
        self.idx = np.arange(self.S)

    def moved(self, i: int, k: int) -> np.ndarray:
        """Index of (c_{-i}, k) for every state."""
        return self.idx + (k - self.configs[:, i]) * self.place[i]

    def pair_prob(self, a: int, b: int) -> np.ndarray:
        return (self.counts[:, a] + self.counts[:, b]) / ((self.K - 1) * self.n)


def _csr(rows, cols, vals, N):
    rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))


def _with_diagonal(off: sp.csr_matrix) -> sp.csr_matrix:
    """Put the leftover row mass on the diagonal."""
    off = off.tocsr()
    off.setdiag(0.0)
    off.eliminate_zeros()
    stay = 1.0 - np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(stay)).tocsr()


def _mg_matrix(sp_: _Space) -> sp.csr_matrix:
    n, K = sp_.n, sp_.K
    rows, cols, vals = [], [], []
    for i in range(n):
        targets = np.stack([sp_.moved(i, k) for k in range(K)], axis=1)
        w = sp_.pi[targets]
        w /= w.sum(axis=1, keepdims=True)
        rows.append(np.repeat(sp_.idx, K))
        cols.append(targets.ravel())
        vals.append(w.ravel() / n)
    return _csr(rows, cols, vals, sp_.S)


def _acceptance(sp_: _Space, i: int, km: int, kp: int):
    """Rows where c_i = km, their targets, and min(1, r) from target ratios."""
    rows = np.nonzero(sp_.configs[:, i] == km)[0]
    tgt = sp_.moved(i, kp)[rows]
    nm = sp_.counts[rows, km]
    npl = sp_.counts[rows, kp]
    log_r = np.log(nm) - np.log(npl + 1.0) + sp_.logpi[tgt] - sp_.logpi[rows]
    return rows, tgt, np.minimum(1.0, np.exp(np.minimum(log_r, 0.0))), nm


def _r_matrix(sp_: _Space) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for a, b in pair_list(sp_.K):
        pc = sp_.pair_prob(a, b)
        for km, kp in ((a, b), (b, a)):
            for i in range(sp_.n):
                r, t, acc, nm = _acceptance(sp_, i, km, kp)
                rows.append(r)
                cols.append(t)
                vals.append(pc[r] * 0.5 * acc / nm)
    return _with_diagonal(_csr(rows, cols, vals, sp_.S))


def _pair_move_parts(sp_: _Space, a: int, b: int):
    """Lifted move on pair (a, b) split by direction.

    For v = +1 (a -> b) and v = -1 (b -> a) returns the c-space matrix of
    accepted moves and the per-state probability of a velocity flip
    (rejection, or an empty source cluster).
    """
    out = {}
    for sign, (km, kp) in ((1, (a, b)), (-1, (b, a))):
        rows, cols, vals = [], [], []
        for i in range(sp_.n):
            r, t, acc, nm = _acceptance(sp_, i, km, kp)
            rows.append(r)
            cols.append(t)
            vals.append(acc / nm)
        M = _csr(rows, cols, vals, sp_.S)
        flip = 1.0 - np.asarray(M.sum(axis=1)).ravel()
        out[sign] = (M, flip)
    return out


def _velocity_ops(D: int, d: int):
    """Projections onto v_d = +1 / -1 and the flip of bit d, on the 2^D velocity space."""
    V = 2**D
    vb = np.arange(V)
    bit = 1 << (D - 1 - d)
    plus = (vb & bit) != 0
    flip = sp.csr_matrix((np.ones(V), (vb, vb ^ bit)), shape=(V, V))
    E = {1: sp.diags(plus.astype(float)), -1: sp.diags((~plus).astype(float))}
    return E, flip


def _lifted_pair_matrix(sp_: _Space, a: int, b: int, d: int, eps: float) -> sp.csr_matrix:
    """F L F for pair (a, b): refresh flip, lifted Metropolis move, refresh flip."""
    D = sp_.K * (sp_.K - 1) // 2
    E, Fv = _velocity_ops(D, d)
    parts = _pair_move_parts(sp_, a, b)
    L = None
    for sign, (M, flipprob) in parts.items():
        term = sp.kron(M, E[sign]) + sp.kron(sp.diags(flipprob), E[sign] @ Fv)
        L = term if L is None else L + term
    N = sp_.S * 2**D
    F = (1.0 - eps) * sp.identity(N) + eps * sp.kron(sp.identity(sp_.S), Fv)
    return (F @ L @ F).tocsr()


def _nr_matrix(sp_: _Space, xi: float) -> sp.csr_matrix:
    D = sp_.K * (sp_.K - 1) // 2
    eps = xi / sp_.n
    P = None
    for d, (a, b) in enumerate(pair_list(sp_.K)):
        pc = np.repeat(sp_.pair_prob(a, b), 2**D)
        term = sp.diags(pc) @ _lifted_pair_matrix(sp_, a, b, d, eps)
        P = term if P is None else P + term
    return P.tocsr()


def _geometric_mixture(A: sp.csr_matrix, q: np.ndarray, keys: np.ndarray) -> sp.csr_matrix:
    """sum_t q (1-q)^(t-1) A^t, with q constant on each class of ``keys``.

    A maps every class into itself, so the series is summed in closed form
    q A (I - (1-q) A)^(-1) one class at a time.
    """
    A = A.tocsr()
    order = np.argsort(keys, kind="stable")
    bounds = np.flatnonzero(np.diff(keys[order])) + 1
    rows, cols, vals = [], [], []
    for grp in np.split(order, bounds):
        sub = A[grp][:, grp].toarray()
        qq = q[grp[0]]
        if qq >= 1.0:
            G = sub
        else:
            G = qq * scipy.linalg.solve((np.eye(len(grp)) - (1.0 - qq) * sub).T, sub.T).T
        r, c = np.nonzero(G)
        rows.append(grp[r])
        cols.append(grp[c])
        vals.append(G[r, c])
    return _csr(rows, cols, vals, A.shape[0])


def _qnr_matrix(sp_: _Space, xi: float, s: float) -> sp.csr_matrix:
    K, n = sp_.K, sp_.n
    D = K * (K - 1) // 2
    eps = xi / n
    pairs = pair_list(K)
    vb = np.arange(2**D)
    P = None
    for d, (a, b) in enumerate(pairs):
        A = _lifted_pair_matrix(sp_, a, b, d, eps)
        m = sp_.counts[:, a] + sp_.counts[:, b]
        q = np.where(m > 0, s / np.maximum(m, 1), 1.0)
        q = np.repeat(np.minimum(q, 1.0), 2**D)
        # class key: labels outside the pair, with the pair collapsed, and the other velocity bits
        coll = np.where((sp_.configs == a) | (sp_.configs == b), K, sp_.configs)
        ckey = (coll * (K + 1) ** np.arange(n - 1, -1, -1)).sum(axis=1)
        bit = 1 << (D - 1 - d)
        keys = np.repeat(ckey, 2**D) * 2**D + np.tile(vb & ~bit, sp_.S)
        term = _geometric_mixture(A, q, keys) / len(pairs)
        P = term if P is None else P + term
    return P.tocsr()


def build_kernel(kind: str, model: ModelSpec, data: Dataset | None, n: int,
                 K: int | None = None, xi: float = 0.5, s: float = 1.0) -> EnumeratedKernel:
    """Exact transition matrix of one of the samplers: 'mg', 'r', 'nr' or 'qnr'."""
    kind = kind.lower()
    K = model.K if K is None else K
    if K != model.K:
        raise ValueError("K does not match the model")
    if kind not in ("mg", "r", "nr", "qnr"):
        raise ValueError(f"unknown kernel {kind!r}")
    lifted = kind in ("nr", "qnr")
    _guard(n, K, lifted)
    if kind == "qnr" and not 0 < s <= 1:
        raise ValueError("s must lie in (0, 1]")
    space = _Space(model, data, n)
    if kind == "mg":
        P = _mg_matrix(space)
    elif kind == "r":
        P = _r_matrix(space)
    elif kind == "nr":
        P = _nr_matrix(space, xi)
    else:
        P = _qnr_matrix(space, xi, s)
    pi = space.pi
    if lifted:
        D = K * (K - 1) // 2
        pi = np.repeat(pi, 2**D) / 2**D
    return EnumeratedKernel(kind, P, pi, n, K, lifted)


def check_stochastic(kernel: EnumeratedKernel) -> float:
    """Largest deviation of a row sum from 1, or of an entry below 0."""
    rs = np.asarray(kernel.P.sum(axis=1)).ravel()
    neg = min(0.0, kernel.P.data.min()) if kernel.P.nnz else 0.0
    return max(float(np.abs(rs - 1.0).max()), -neg)


def check_invariance(kernel: EnumeratedKernel) -> float:
    """max_j |(pi P)_j - pi_j|."""
    return float(np.abs(kernel.P.T @ kernel.pi - kernel.pi).max())


def detailed_balance_violation(kernel: EnumeratedKernel) -> float:
    """max |pi(x) P(x, y) - pi(y) P(y, x)| over all pairs."""
    F = sp.diags(kernel.pi) @ kernel.P
    return float(abs(F - F.T).max())


DENSE_SOLVE_MAX = 6000


def _solve_poisson(kernel: EnumeratedKernel, rhs: np.ndarray) -> np.ndarray:
    """Solve (I - P) h = rhs with h[0] pinned to 0; rhs columns must be pi-centred.

    The equations are dependent (pi'(I - P) = 0), so dropping the first one
    and fixing h[0] leaves a non-singular system exactly when P is
    irreducible. Dense LU below DENSE_SOLVE_MAX states, sparse LU above.
    """
    N = kernel.n_states
    B = (sp.identity(N) - kernel.P).tocsc()[1:, 1:]
    with np.errstate(all="raise"):
        try:
            if N <= DENSE_SOLVE_MAX:
                lu = scipy.linalg.lu_factor(B.toarray(), check_finite=True)
                x = scipy.linalg.lu_solve(lu, rhs[1:])
            else:
                x = spla.splu(B, permc_spec="MMD_AT_PLUS_A").solve(rhs[1:])
        except (RuntimeError, FloatingPointError, scipy.linalg.LinAlgWarning) as e:
            raise np.linalg.LinAlgError("singular system: kernel reducible") from e
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("singular system: kernel reducible")
    return np.concatenate([np.zeros((1,) + rhs.shape[1:]), x])


def asymptotic_variances_exact(kernel: EnumeratedKernel, gs) -> np.ndarray:
    """Asymptotic variances of several functionals, sharing one factorisation.

    With gbar = g - pi(g) and h any solution of (I - P) h = gbar, the variance
    is 2 <gbar, h>_pi - <gbar, gbar>_pi; adding a constant to h changes
    nothing since <gbar, 1>_pi = 0.
    """
    pi = kernel.pi
    G = np.stack([np.asarray(g, float) if np.size(g) == kernel.n_states
                  else kernel.lift(np.asarray(g, float)) for g in gs], axis=1)
    Gbar = G - pi @ G
    H = _solve_poisson(kernel, Gbar)
    return 2.0 * (pi[:, None] * Gbar * H).sum(axis=0) - (pi[:, None] * Gbar * Gbar).sum(axis=0)


def asymptotic_variance_exact(kernel: EnumeratedKernel, g: np.ndarray) -> float:
    """Asymptotic variance of ergodic averages of g under the kernel, started in stationarity."""
    return float(asymptotic_variances_exact(kernel, [g])[0])


def stationary_variance(kernel: EnumeratedKernel, g: np.ndarray) -> float:
    g = np.asarray(g, dtype=float)
    if g.size != kernel.n_states:
        g = kernel.lift(g)
    m = kernel.pi @ g
    return float(kernel.pi @ (g - m) ** 2)


# test functionals on allocations

def g_largest(configs: np.ndarray, K: int) -> np.ndarray:
    counts = np.stack([(configs == k).sum(axis=1) for k in range(K)], axis=1)
    return counts.max(axis=1) / configs.shape[1]


def g_first(configs: np.ndarray, K: int) -> np.ndarray:
    return (configs == 0).sum(axis=1) / configs.shape[1]


def g_reference(configs: np.ndarray, K: int) -> np.ndarray:
    """Indicator of the allocation c_i = i mod K."""
    ref = np.arange(configs.shape[1]) % K
    return np.all(configs == ref[None, :], axis=1).astype(float)


FUNCTIONALS = {"largest": g_largest, "first": g_first, "reference": g_reference}


def minorization_violation(P_R: EnumeratedKernel, P_MG: EnumeratedKernel) -> float:
    """max over c != c' of P_MG(c, c') / (2 (K-1)) - P_R(c, c'); non-positive when the bound holds."""
    K = P_R.K
    diff = (P_MG.P / (2.0 * (K - 1)) - P_R.P).tolil()
    diff.setdiag(-np.inf)
    return float(diff.tocsr().max()) if diff.nnz else 0.0


def lumped_mg_matrix(n: int, alpha) -> np.ndarray:
    """Birth-death chain of n_1 under the marginal Gibbs kernel with K = 2, no data."""
    a1, a2 = (float(x) for x in alpha)
    tot = a1 + a2 + n - 1
    P = np.zeros((n + 1, n + 1))
    for j in range(n + 1):
        up = (n - j) / n * (a1 + j) / tot
        down = j / n * (a2 + n - j) / tot
        if j < n:
            P[j, j + 1] = up
        if j > 0:
            P[j, j - 1] = down
        P[j, j] = 1.0 - up - down
    return P


def second_eigenvalue_lumped_mg(n: int, alpha) -> float:
    """Second largest eigenvalue of the lumped two-component marginal Gibbs chain."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size != 2:
        raise ValueError("the lumped chain is defined for K = 2")
    P = lumped_mg_matrix(n, alpha)
    # reversible: symmetrise with the stationary law (beta-binomial)
    j = np.arange(n + 1)
    logpi = (gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1)
             + gammaln(alpha[0] + j) + gammaln(alpha[1] + n - j))
    d = np.exp(0.5 * (logpi - logpi.max()))
    Sym = d[:, None] * P / d[None, :]
    Sym = 0.5 * (Sym + Sym.T)
    ev = np.linalg.eigvalsh(Sym)
    return float(ev[-2])


def remark3_eigenvalue(n: int, alpha) -> float:
    a = float(np.sum(alpha))
    return 1.0 - a / (n * (n + a - 1.0))


# counterexample to the reverse minorization (K = 3, alpha = 1, no data)

def counterexample_states(n: int) -> tuple[np.ndarray, np.ndarray]:
    """c = (0, ..., 0, 1, 2) and c' = (0, ..., 0, 1, 1)."""
    if n < 3:
        raise ValueError("need n >= 3")
    c = np.zeros(n, dtype=np.int64)
    c[-2], c[-1] = 1, 2
    cp = c.copy()
    cp[-1] = 1
    return c, cp


def counterexample_published(n: int) -> tuple[float, float]:
    """The stated closed forms (P_MG, P_R) at the counterexample states."""
    return 2.0 / (n * (n + 2.0)), 1.0 / (6.0 * n)


def counterexample_from_proposal(n: int) -> float:
    """P_R(c, c') from the single-point proposal a_R(i, k) times min(1, r).

    a_R(i, k) = (n_{c_i} + n_k) / n_{c_i} / (2 (K-1) n) with n_{c_i} = n_k = 1,
    and r = 1 because the conditional ratio (1+1)/(1+0) cancels n_-/(n_+ + 1) = 1/2.
    """
    K = 3
    a_r = (1 + 1) / 1 / (2 * (K - 1) * n)
    r = (1.0 / (1 + 1)) * ((1 + 1) / (1 + 0))
    return a_r * min(1.0, r)


def counterexample_entries(n: int) -> tuple[float, float]:
    """Enumerated (P_MG(c, c'), P_R(c, c')) at the counterexample states."""
    model = ModelSpec.prior_only(np.ones(3))
    c, cp = counterexample_states(n)
    i, j = allocation_index(c, 3), allocation_index(cp, 3)
    mg = build_kernel("mg", model, None, n)
    r = build_kernel("r", model, None, n)
    return float(mg.P[i, j]), float(r.P[i, j])


def perturb(kernel: EnumeratedKernel, rng, amount: float = 1e-3) -> EnumeratedKernel:
    """Copy of the kernel with mass shifted inside one row; stays stochastic but breaks invariance."""
    P = kernel.P.tolil(copy=True)
    N = kernel.n_states
    row = int(rng.integers(N))
    cols = P.rows[row]
    src = max(cols, key=lambda j: P[row, j])
    dst = (src + 1 + int(rng.integers(N - 1))) % N
    delta = min(amount, P[row, src])
    P[row, src] = P[row, src] - delta
    P[row, dst] = P[row, dst] + delta
    return EnumeratedKernel(kernel.kind, P.tocsr(), kernel.pi, kernel.n, kernel.K, kernel.lifted)


# battery over a grid of small instances

ALPHA_FAMILIES = ("ones", "halves", "two-then-ones")


def alpha_family(name: str, K: int) -> np.ndarray:
    if name == "ones":
        return np.ones(K)
    if name == "halves":
        return np.full(K, 0.5)
    if name == "two-then-ones":
        return np.concatenate([[2.0], np.ones(K - 1)])
    raise ValueError(f"unknown alpha family {name!r}")


@dataclass
class Instance:
    model: ModelSpec
    data: Dataset | None
    n: int
    label: str

    @property
    def K(self) -> int:
        return self.model.K


def instance_grid(max_n: int = 6, max_K: int = 3, seed: int = 0, min_n: int = 2):
    """Prior-only and random one-dimensional Gaussian instances for every (n, K, alpha)."""
    out = []
    for K in range(2, max_K + 1):
        for n in range(min_n, max_n + 1):
            for fam in ALPHA_FAMILIES:
                alpha = alpha_family(fam, K)
                out.append(Instance(ModelSpec.prior_only(alpha), None, n,
                                    f"prior n={n} K={K} alpha={fam}"))
                rng = np.random.default_rng([seed, n, K])
                data = Dataset(rng.standard_normal((n, 1)))
                out.append(Instance(ModelSpec.gaussian(alpha), data, n,
                                    f"gauss n={n} K={K} alpha={fam}"))
    return out


@dataclass
class CheckResult:
    check: str
    instance: str
    value: float
    bound: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.bound)


INVARIANCE_TOL = 1e-10
ORDERING_TOL = 1e-8


def invariance_checks(inst: Instance, xis=(0.5, 1.0), ss=(0.5, 1.0),
                      tol: float = INVARIANCE_TOL) -> list[CheckResult]:
    res = []
    specs = [("mg", {})] + [("r", {})] + [("nr", {"xi": x}) for x in xis]
    specs += [("qnr", {"xi": x, "s": s}) for x in xis for s in ss]
    for kind, kw in specs:
        P = build_kernel(kind, inst.model, inst.data, inst.n, **kw)
        tag = kind + "".join(f" {k}={v}" for k, v in kw.items())
        res.append(CheckResult(f"stochastic {tag}", inst.label, check_stochastic(P), tol))
        res.append(CheckResult(f"invariance {tag}", inst.label, check_invariance(P), tol))
        if kind == "r":
            res.append(CheckResult("detailed-balance r", inst.label,
                                   detailed_balance_violation(P), tol))
    return res


def ordering_checks(inst: Instance, xis=(0.5, 1.0), tol: float = ORDERING_TOL) -> list[CheckResult]:
    """Var(NR) <= Var(R) and Var(R) <= 2(K-1) Var(MG) + (2K-3) Var_pi for every functional."""
    K = inst.K
    mg = build_kernel("mg", inst.model, inst.data, inst.n)
    r = build_kernel("r", inst.model, inst.data, inst.n)
    configs = all_allocations(inst.n, K)
    gs = [FUNCTIONALS[name](configs, K) for name in FUNCTIONALS]
    v_mg = asymptotic_variances_exact(mg, gs)
    v_r = asymptotic_variances_exact(r, gs)
    v_pi = [stationary_variance(mg, g) for g in gs]
    res = []
    for j, name in enumerate(FUNCTIONALS):
        bound = 2 * (K - 1) * v_mg[j] + (2 * K - 3) * v_pi[j]
        res.append(CheckResult(f"var r <= mg bound [{name}]", inst.label, v_r[j] - bound, tol))
    for xi in xis:
        nr = build_kernel("nr", inst.model, inst.data, inst.n, xi=xi)
        v_nr = asymptotic_variances_exact(nr, [nr.lift(g) for g in gs])
        for j, name in enumerate(FUNCTIONALS):
            res.append(CheckResult(f"var nr xi={xi} <= r [{name}]", inst.label,
                                   v_nr[j] - v_r[j], tol))
    res.append(CheckResult("minorization r >= mg/(2(K-1))", inst.label,
                           minorization_violation(r, mg), tol))
    return res


def eigenvalue_checks(ns=(10, 20, 30), alphas=((1.0, 1.0), (2.0, 3.0)),
                      tol: float = 1e-8) -> list[CheckResult]:
    res = []
    for n in ns:
        for a in alphas:
            dev = abs(second_eigenvalue_lumped_mg(n, a) - remark3_eigenvalue(n, a))
            res.append(CheckResult("lumped second eigenvalue", f"n={n} alpha={a}", dev, tol))
    return res


def counterexample_checks(n: int = 8, tol: float = 1e-12) -> list[CheckResult]:
    """Enumerated entries against 2/(n(n+2)) and the proposal-derived P_R value."""
    mg, r = counterexample_entries(n)
    pub_mg, _ = counterexample_published(n)
    return [
        CheckResult("counterexample P_MG = 2/(n(n+2))", f"n={n}", abs(mg - pub_mg), tol),
        CheckResult("counterexample P_R = 1/(2n)", f"n={n}",
                    abs(r - counterexample_from_proposal(n)), tol),
    ]
