"""Large-n limits of the samplers on prior-only targets.

Proportions x_k = n_k / n follow a Wright-Fisher diffusion under the marginal
Gibbs kernel once time is sped up by n^2 / 2, and a piecewise deterministic
process under the lifted kernel once time is sped up by n. This module holds
exact one-step moment calculations, simulators for both limits and a
harness comparing rescaled chains to them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numba import njit
from scipy.optimize import brentq

from .model import Dataset, ModelSpec
from .samplers import Chain, VelocityState, init_state

DEFAULT_M = 100.0


def _grid_counts(n: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    counts = np.rint(n * x).astype(np.int64)
    if np.any(np.abs(counts - n * x) > 1e-9) or counts.sum() != n:
        raise ValueError("n * x must be a vector of integers summing to n")
    return counts


def mg_step_moments_exact(n: int, alpha, x) -> tuple[np.ndarray, np.ndarray]:
    """Exact E[dX] and E[dX dX'] for one marginal Gibbs step from proportions x.

    Sums over the n K outcomes (point i, new label k), grouping points by
    their current label since outcomes within a label are identical.
    """
    alpha = np.asarray(alpha, dtype=float)
    K = alpha.size
    counts = _grid_counts(n, x)
    tot = alpha.sum() + n - 1.0
    drift = np.zeros(K)
    second = np.zeros((K, K))
    for j in range(K):
        if counts[j] == 0:
            continue
        pick = counts[j] / n
        for k in range(K):
            if k == j:
                continue
            nk_minus = counts[k]  # point i sits in j, so c_{-i} leaves k untouched
            p = pick * (alpha[k] + nk_minus) / tot
            d = np.zeros(K)
            d[k] += 1.0 / n
            d[j] -= 1.0 / n
            drift += p * d
            second += p * np.outer(d, d)
    return drift, second


def mg_drift_closed_form(n: int, alpha, x) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x, dtype=float)
    a = alpha.sum()
    return (alpha - a * x) / (n * (a + n - 1.0))


def pdmp_rate_beta(x_k: float, x_kp: float, v: int, alpha_k: float, alpha_kp: float) -> float:
    """Bounce rate on the pair (k, k') given v = V(k', k).

    v = +1 means mass flows from k' to k, so k' is the source and k the
    destination; v = -1 reverses the roles.
    """
    if v == 1:
        xm, xp, am, ap = x_kp, x_k, alpha_kp, alpha_k
    elif v == -1:
        xm, xp, am, ap = x_k, x_kp, alpha_k, alpha_kp
    else:
        raise ValueError("v must be +1 or -1")
    return max(0.0, (am - 1.0) / xm + (1.0 - ap) / xp)


def nr_acceptance(n: int, alpha, x, k_minus: int, k_plus: int) -> float:
    """Acceptance probability of moving one point from k_minus to k_plus, no data."""
    alpha = np.asarray(alpha, dtype=float)
    counts = _grid_counts(n, x)
    nm, npl = counts[k_minus], counts[k_plus]
    if nm == 0:
        raise ValueError("source cluster is empty")
    # one division so that unit alpha gives exactly 1
    r = (nm * (alpha[k_plus] + npl)) / ((npl + 1.0) * (alpha[k_minus] + nm - 1.0))
    return min(1.0, r)


def nr_acceptance_expansion_check(n: int, alpha, x, k_minus: int = 0, k_plus: int = 1) -> float:
    """|n (1 - acc) - beta| for the move k_minus -> k_plus at proportions x."""
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x, dtype=float)
    acc = nr_acceptance(n, alpha, x, k_minus, k_plus)
    # V(k_minus, k_plus) = +1 in the (k, k') = (k_plus, k_minus) convention
    beta = pdmp_rate_beta(x[k_plus], x[k_minus], 1, alpha[k_plus], alpha[k_minus])
    return abs(n * (1.0 - acc) - beta)


def max_expansion_deviation(n: int, alpha, x) -> float:
    """Largest deviation over all ordered pairs."""
    K = len(alpha)
    return max(nr_acceptance_expansion_check(n, alpha, x, a, b)
               for a in range(K) for b in range(K) if a != b)


# Wright-Fisher diffusion

@njit(cache=True)
def _wf_advance(alpha, X, n_steps, dt, rng, noise):
    R, K = X.shape
    a = 0.0
    for k in range(K):
        a += alpha[k]
    sd = math.sqrt(dt)
    u = np.empty(K)
    for r in range(R):
        for _ in range(n_steps):
            su = 0.0
            if noise:
                for k in range(K):
                    u[k] = math.sqrt(X[r, k]) * rng.standard_normal()
                    su += u[k]
            tot = 0.0
            for k in range(K):
                step = 0.5 * (alpha[k] - a * X[r, k]) * dt
                if noise:
                    # covariance x_k (delta_kk' - x_k') dt
                    step += sd * (u[k] - X[r, k] * su)
                v = X[r, k] + step
                if v < 0.0:
                    v = 0.0
                X[r, k] = v
                tot += v
            for k in range(K):
                X[r, k] /= tot


def _check_simplex(x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < 0) or abs(x0.sum() - 1.0) > 1e-12:
        raise ValueError("x0 must lie on the simplex")
    return x0


def simulate_wright_fisher(alpha, x0, t_end: float, dt: float, rng, noise: bool = True,
                           record_every: int = 1) -> np.ndarray:
    """Euler-Maruyama path, clipped at 0 and renormalised after every step.

    Returns an array of shape (steps // record_every + 1, K) including x0.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    alpha = np.asarray(alpha, dtype=float)
    X = _check_simplex(x0).copy()[None, :]
    steps = int(round(t_end / dt))
    out = [X[0].copy()]
    done = 0
    while done < steps:
        m = min(record_every, steps - done)
        _wf_advance(alpha, X, m, dt, rng, noise)
        done += m
        out.append(X[0].copy())
    return np.array(out)


def wright_fisher_endpoints(alpha, x0, t_end: float, dt: float, rng, n_paths: int,
                            noise: bool = True) -> np.ndarray:
    """Positions at t_end of ``n_paths`` independent paths, shape (n_paths, K)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    alpha = np.asarray(alpha, dtype=float)
    X = np.tile(_check_simplex(x0), (n_paths, 1))
    _wf_advance(alpha, X, int(round(t_end / dt)), dt, rng, noise)
    return X


# piecewise deterministic limit of the lifted sampler

@dataclass
class PdmpState:
    x: np.ndarray
    velocity: VelocityState
    M: float = DEFAULT_M
    t: float = 0.0
    frozen: bool = False

    def __post_init__(self):
        self.x = _check_simplex(self.x).copy()
        if self.M <= 0:
            raise ValueError("M must be positive")
        if self.velocity.K != self.x.size:
            raise ValueError("velocity table does not match x")
        if not self.frozen and np.any(self.x <= 1.0 / self.M):
            raise ValueError("x0 must lie inside E_M")


@dataclass
class PdmpPath:
    times: np.ndarray
    xs: np.ndarray
    final: PdmpState
    n_events: int = 0
    flips: list = field(default_factory=list)


def pdmp_drift_matrix(V: np.ndarray) -> np.ndarray:
    """A with dx/dt = A x, where V[a, b] = +1 means mass flows from a to b."""
    K = V.shape[0]
    return (np.diag(V.sum(axis=0)) + V.T) / (K - 1.0)


def pdmp_pair_rates(x, V, alpha, xi) -> tuple[list, np.ndarray]:
    """Per unordered pair (a, b): (x_a + x_b) (beta + 2 xi) / (K - 1).

    Both ordered terms of the event rate give the same beta, so each pair
    carries twice the ordered-pair weight. The rates sum to the total event
    rate.
    """
    K = x.size
    pairs = [(a, b) for a in range(K) for b in range(a + 1, K)]
    rates = np.empty(len(pairs))
    for d, (a, b) in enumerate(pairs):
        beta = pdmp_rate_beta(x[b], x[a], int(V[a, b]), alpha[b], alpha[a])
        rates[d] = (x[a] + x[b]) * (beta + 2.0 * xi) / (K - 1.0)
    return pairs, rates


def pdmp_rate_bound(alpha, xi: float, M: float) -> float:
    """Upper bound on the event rate inside E_M.

    On E_M, (x_a + x_b)(1/x_a + 1/x_b) <= 2 + M + 1/M, and summing over the
    K(K-1)/2 pairs divided by K - 1 gives the factor K/2.
    """
    alpha = np.asarray(alpha, dtype=float)
    K = alpha.size
    return 0.5 * K * np.abs(alpha - 1.0).max() * (2.0 + M + 1.0 / M) + 2.0 * xi


def simulate_pdmp(alpha, xi: float, M: float, z0: PdmpState, t_end: float, rng,
                  grid: float = 1e-3) -> PdmpPath:
    """Exact linear flow between events, thinning for the events, freeze on leaving E_M.

    Positions are recorded at every event and at the end. Exits from E_M are
    located by scanning the flow on a grid of width ``grid`` and refining
    with a root finder.
    """
    alpha = np.asarray(alpha, dtype=float)
    z = PdmpState(z0.x, z0.velocity.copy(), M, z0.t, z0.frozen)
    lam_bar = pdmp_rate_bound(alpha, xi, M)
    times, xs = [z.t], [z.x.copy()]
    n_events = 0
    flips = []
    lo = 1.0 / M
    while z.t < t_end and not z.frozen:
        V = z.velocity.matrix().astype(float)
        A = pdmp_drift_matrix(V)
        tau = rng.exponential(1.0 / lam_bar) if lam_bar > 0 else np.inf
        horizon = min(tau, t_end - z.t)
        # scan for an exit from E_M before the horizon
        x0 = z.x.copy()
        step = scipy.linalg.expm(A * grid)
        h_prev, x_prev = 0.0, x0
        exit_at = None
        while h_prev < horizon:
            full = h_prev + grid <= horizon
            h = h_prev + grid if full else horizon
            x_h = step @ x_prev if full else scipy.linalg.expm(A * h) @ x0
            if x_h.min() <= lo:
                f = lambda s: (scipy.linalg.expm(A * s) @ x0).min() - lo
                exit_at = brentq(f, h_prev, h, xtol=1e-12) if f(h_prev) > 0 else h_prev
                break
            h_prev, x_prev = h, x_h
        if exit_at is not None:
            z.x = scipy.linalg.expm(A * exit_at) @ x0
            z.x = np.maximum(z.x, 0.0)
            z.x /= z.x.sum()
            z.t += exit_at
            z.frozen = True
            break
        z.x = scipy.linalg.expm(A * horizon) @ x0
        z.x /= z.x.sum()
        if horizon < tau:
            z.t = t_end
            break
        z.t += horizon
        pairs, rates = pdmp_pair_rates(z.x, V, alpha, xi)
        total = rates.sum()
        if total > lam_bar * (1 + 1e-12):
            raise RuntimeError("thinning bound violated")
        if rng.random() * lam_bar < total:
            d = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
            d = min(d, len(pairs) - 1)
            a, b = pairs[d]
            z.velocity.flip(a, b)
            flips.append((z.t, a, b))
            n_events += 1
            times.append(z.t)
            xs.append(z.x.copy())
    times.append(z.t)
    xs.append(z.x.copy())
    return PdmpPath(np.array(times), np.array(xs), z, n_events, flips)


def pdmp_endpoints(alpha, xi: float, M: float, x0, t_end: float, rng, n_paths: int) -> np.ndarray:
    """Positions at t_end (or at freezing) of paths started at x0 with uniform velocities."""
    x0 = _check_simplex(x0)
    out = np.empty((n_paths, x0.size))
    for r in range(n_paths):
        z0 = PdmpState(x0, VelocityState.random(x0.size, rng), M)
        out[r] = simulate_pdmp(alpha, xi, M, z0, t_end, rng).final.x
    return out


# rescaled chains against their limits

@dataclass
class LimitComparison:
    kind: str
    n_list: list
    distances: list
    floor: float
    t: float
    replicates: int

    def rows(self):
        return list(zip(self.n_list, self.distances))


def _start(n: int, x0, K: int) -> np.ndarray:
    counts = np.floor(np.asarray(x0) * n).astype(np.int64)
    counts[0] += n - counts.sum()
    return np.repeat(np.arange(K), counts)


def rescaled_chain_endpoints(kind: str, n: int, alpha, x0, t: float, replicates: int, seed,
                             xi: float = 0.5, M: float = DEFAULT_M) -> np.ndarray:
    """First-component proportion after ceil(h(n) t) steps for each replicate.

    h(n) = n^2 / 2 for 'mg' and n for 'nr'; the lifted chain is frozen as
    soon as some n_k <= n / M.
    """
    alpha = np.asarray(alpha, dtype=float)
    K = alpha.size
    model = ModelSpec.prior_only(alpha)
    data = Dataset.empty(n)
    if kind == "mg":
        steps, freeze = math.ceil(n * n / 2.0 * t), -1
    elif kind == "nr":
        steps, freeze = math.ceil(n * t), int(math.floor(n / M))
    else:
        raise ValueError("kind must be 'mg' or 'nr'")
    c0 = _start(n, x0, K)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    out = np.empty(replicates)
    for r, child in enumerate(ss.spawn(replicates)):
        rng = np.random.default_rng(child)
        state, vel = init_state("given", data, K, rng, given=c0)
        chain = Chain(kind, model, data, state, vel, xi=xi)
        chain.run(steps, rng, freeze_count=freeze)
        out[r] = state.counts[0] / n
    return out


def limit_endpoints(kind: str, alpha, x0, t: float, samples: int, seed, xi: float = 0.5,
                    M: float = DEFAULT_M, dt: float = 1e-4) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if kind == "mg":
        return wright_fisher_endpoints(alpha, x0, t, dt, rng, samples)[:, 0]
    return pdmp_endpoints(alpha, xi, M, x0, t, rng, samples)[:, 0]


def w1(a, b) -> float:
    from .experiments import distribution_distance
    return distribution_distance(a, b, "w1")


def rescaled_chain_vs_limit(kind: str, n_list, t: float = 1.0, alpha=(1.0, 1.0),
                            x0=(0.5, 0.5), replicates: int = 1000, seed: int = 0,
                            xi: float = 0.5, M: float = DEFAULT_M,
                            dt: float = 1e-4) -> LimitComparison:
    """W1 between the rescaled chain and the simulated limit at time t, per n.

    The noise floor is the W1 distance between two independent limit samples
    of the same size as the chain sample.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    lim_seed, floor_seed, *chain_seeds = ss.spawn(2 + len(n_list))
    lim = limit_endpoints(kind, alpha, x0, t, replicates, lim_seed, xi, M, dt)
    other = limit_endpoints(kind, alpha, x0, t, replicates, floor_seed, xi, M, dt)
    dists = []
    for n, cs in zip(n_list, chain_seeds):
        ch = rescaled_chain_endpoints(kind, n, alpha, x0, t, replicates, cs, xi, M)
        dists.append(w1(ch, lim))
    return LimitComparison(kind, list(n_list), dists, w1(lim, other), t, replicates)
