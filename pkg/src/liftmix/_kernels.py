"""Compiled inner loops shared by the mixture model and the samplers.

Everything here works on plain arrays so that numba can compile it:

    c        int64[n]       allocation labels in 0..K-1
    counts   int64[K]       cluster sizes
    members  int64[K, n]    member lists, first counts[k] entries valid
    pos      int64[n]       position of point i inside members[c[i]]
    sums     float64[K, p]  per-cluster sums of observations
    moves    int64[1]       moves since sums were last rebuilt; run_steps rebuilds
                            them on entry once this passes REFRESH_EVERY
    table    int8[K, K]     velocities v[k, k'] for k < k' (upper triangle)

Model parameters are packed as ``kind`` (see the ``KIND_*`` constants),
``alpha`` (float64[K]), ``hyper`` = [sigma2, sigma02, beta1, beta2] and
``theta0`` (float64[p]).
"""

import math

import numpy as np
from numba import njit

KIND_PRIOR = 0
KIND_GAUSS = 1
KIND_POISSON = 2

# kernel identifiers for run_steps
K_MG = 0
K_R = 1
K_NR = 2
K_QNR = 3
K_CD = 4

# step outcome codes
MV_MG = 0
MV_ACCEPT = 1
MV_REJECT_FLIP = 2
MV_EMPTY_FLIP = 3
MV_REJECT = 4
MV_EMPTY_NOOP = 5
MV_CD_ALLOC = 6
MV_CD_PARAMS = 7

REFRESH_EVERY = 1_000_000

LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True, inline='always')
def log_pred(kind, hyper, theta0, nk, sums, k, Y, i, exclude):
    """Log predictive of Y[i] for cluster k; point ``exclude`` is left out of the stats."""
    if kind == KIND_PRIOR:
        return 0.0
    m = nk
    if exclude >= 0:
        m -= 1
    if kind == KIND_GAUSS:
        s2 = hyper[0]
        s02 = hyper[1]
        prec = 1.0 / s02 + m / s2
        vpost = 1.0 / prec
        vbar = s2 + vpost
        p = Y.shape[1]
        quad = 0.0
        for j in range(p):
            s = sums[k, j]
            if exclude >= 0:
                s -= Y[exclude, j]
            mu = vpost * (theta0[j] / s02 + s / s2)
            d = Y[i, j] - mu
            quad += d * d
        return -0.5 * p * (LOG_2PI + math.log(vbar)) - 0.5 * quad / vbar
    # Poisson-Gamma: negative binomial predictive
    t = sums[k, 0]
    if exclude >= 0:
        t -= Y[exclude, 0]
    a = hyper[2] + t
    b = hyper[3] + m
    y = Y[i, 0]
    return (math.lgamma(a + y) - math.lgamma(a) - math.lgamma(y + 1.0)
            + a * math.log(b) - (a + y) * math.log(b + 1.0))


@njit(cache=True, inline='always')
def log_weight(kind, alpha, hyper, theta0, c, counts, sums, Y, i, k):
    """Unnormalised log pi(c_i = k | c_-i)."""
    if c[i] == k:
        nk = counts[k] - 1
        ex = i
    else:
        nk = counts[k]
        ex = -1
    lp = log_pred(kind, hyper, theta0, counts[k], sums, k, Y, i, ex)
    return math.log(alpha[k] + nk) + lp


@njit(cache=True, inline='always')
def log_cond_weights(kind, alpha, hyper, theta0, c, counts, sums, Y, i, out):
    for k in range(counts.shape[0]):
        out[k] = log_weight(kind, alpha, hyper, theta0, c, counts, sums, Y, i, k)


@njit(cache=True, inline='always')
def log_accept(kind, alpha, hyper, theta0, c, counts, sums, Y, i, km, kp):
    lw_p = log_weight(kind, alpha, hyper, theta0, c, counts, sums, Y, i, kp)
    lw_m = log_weight(kind, alpha, hyper, theta0, c, counts, sums, Y, i, km)
    return math.log(counts[km]) - math.log(counts[kp] + 1.0) + lw_p - lw_m


@njit(cache=True, inline='always')
def recompute(c, counts, members, pos, sums, Y):
    K = counts.shape[0]
    counts[:] = 0
    sums[:, :] = 0.0
    for i in range(c.shape[0]):
        k = c[i]
        members[k, counts[k]] = i
        pos[i] = counts[k]
        counts[k] += 1
        for j in range(Y.shape[1]):
            sums[k, j] += Y[i, j]
    return K


@njit(cache=True, inline='always')
def move(c, counts, members, pos, sums, moves, Y, i, k_to):
    k_from = c[i]
    if k_from == k_to:
        return
    # swap-remove from the source list
    last = members[k_from, counts[k_from] - 1]
    members[k_from, pos[i]] = last
    pos[last] = pos[i]
    counts[k_from] -= 1
    members[k_to, counts[k_to]] = i
    pos[i] = counts[k_to]
    counts[k_to] += 1
    c[i] = k_to
    for j in range(Y.shape[1]):
        sums[k_from, j] -= Y[i, j]
        sums[k_to, j] += Y[i, j]
    moves[0] += 1


@njit(cache=True)
def refresh_sums(c, sums, moves, Y):
    """Recompute sums from scratch to shed accumulated rounding error."""
    moves[0] = 0
    for k in range(sums.shape[0]):
        for j in range(sums.shape[1]):
            sums[k, j] = 0.0
    for r in range(c.shape[0]):
        for j in range(Y.shape[1]):
            sums[c[r], j] += Y[r, j]


@njit(cache=True, inline='always')
def randbelow(m, rng):
    """Uniform integer in 0..m-1 (m >= 1); cheaper than Generator.integers under numba."""
    r = int(rng.random() * m)
    if r >= m:
        return m - 1
    return r


@njit(cache=True, inline='always')
def sample_log_categorical(logw, rng):
    """Inverse-CDF draw from normalised exp(logw), scanning left to right."""
    K = logw.shape[0]
    mx = -np.inf
    for k in range(K):
        if logw[k] > mx:
            mx = logw[k]
    total = 0.0
    for k in range(K):
        total += math.exp(logw[k] - mx)
    u = rng.random() * total
    acc = 0.0
    for k in range(K):
        acc += math.exp(logw[k] - mx)
        if u < acc:
            return k
    # u landed on the rounding slack at the top
    for k in range(K - 1, -1, -1):
        if logw[k] > -np.inf:
            return k
    return K - 1


@njit(cache=True, inline='always')
def sample_pair(c, K, rng):
    k1 = c[randbelow(c.shape[0], rng)]
    k2 = randbelow(K - 1, rng)
    if k2 >= k1:
        k2 += 1
    if k1 < k2:
        return k1, k2
    return k2, k1


@njit(cache=True, inline='always')
def uniform_pair(K, rng):
    k1 = randbelow(K, rng)
    k2 = randbelow(K - 1, rng)
    if k2 >= k1:
        k2 += 1
    if k1 < k2:
        return k1, k2
    return k2, k1


@njit(cache=True, inline='always')
def geometric(q, rng):
    """Geometric on {1, 2, ...} with success probability q, by inversion."""
    if q >= 1.0:
        return 1
    u = 1.0 - rng.random()  # in (0, 1]
    t = math.ceil(math.log(u) / math.log1p(-q))
    if t < 1:
        return 1
    return int(t)


@njit(cache=True, inline='always')
def step_mg(kind, alpha, hyper, theta0, c, counts, members, pos, sums, moves, Y,
            rng, buf):
    n = c.shape[0]
    i = randbelow(n, rng)
    log_cond_weights(kind, alpha, hyper, theta0, c, counts, sums, Y, i, buf)
    k = sample_log_categorical(buf, rng)
    move(c, counts, members, pos, sums, moves, Y, i, k)
    return i, k


@njit(cache=True, inline='always')
def mh_pair_move(kind, alpha, hyper, theta0, c, counts, members, pos, sums, moves,
                 Y, rng, km, kp):
    """Propose a uniform member of km to kp. Returns (moved point, accepted)."""
    i = members[km, randbelow(counts[km], rng)]
    lr = log_accept(kind, alpha, hyper, theta0, c, counts, sums, Y, i, km, kp)
    u = rng.random()
    if lr >= 0.0 or u < math.exp(lr):
        move(c, counts, members, pos, sums, moves, Y, i, kp)
        return i, True
    return i, False


@njit(cache=True, inline='always')
def step_r(kind, alpha, hyper, theta0, c, counts, members, pos, sums, moves, Y, rng):
    K = counts.shape[0]
    k, kk = sample_pair(c, K, rng)
    if rng.random() < 0.5:
        km, kp = k, kk
    else:
        km, kp = kk, k
    if counts[km] == 0:
        return MV_EMPTY_NOOP, -1, k, kk
    i, ok = mh_pair_move(kind, alpha, hyper, theta0, c, counts, members, pos, sums,
                         moves, Y, rng, km, kp)
    if ok:
        return MV_ACCEPT, i, k, kk
    return MV_REJECT, i, k, kk


@njit(cache=True, inline='always')
def lifted_pair(kind, alpha, hyper, theta0, c, counts, members, pos, sums, moves, Y,
                table, k, kk, eps, rng):
    """One application of the lifted kernel on the pair (k, kk), k < kk.

    Returns (outcome code, moved point or -1, number of refresh flips).
    """
    refresh = 0
    if rng.random() < eps:
        table[k, kk] = -table[k, kk]
        refresh += 1
    if table[k, kk] == 1:
        km, kp = k, kk
    else:
        km, kp = kk, k
    if counts[km] == 0:
        table[k, kk] = -table[k, kk]
        code = MV_EMPTY_FLIP
        i = -1
    else:
        i, ok = mh_pair_move(kind, alpha, hyper, theta0, c, counts, members, pos,
                             sums, moves, Y, rng, km, kp)
        if ok:
            code = MV_ACCEPT
        else:
            table[k, kk] = -table[k, kk]
            code = MV_REJECT_FLIP
    if rng.random() < eps:
        table[k, kk] = -table[k, kk]
        refresh += 1
    return code, i, refresh


@njit(cache=True, inline='always')
def step_nr(kind, alpha, hyper, theta0, c, counts, members, pos, sums, moves, Y,
            table, xi, rng):
    K = counts.shape[0]
    k, kk = sample_pair(c, K, rng)
    code, i, refresh = lifted_pair(kind, alpha, hyper, theta0, c, counts, members,
                                   pos, sums, moves, Y, table, k, kk,
                                   xi / c.shape[0], rng)
    return code, i, k, kk, refresh


@njit(cache=True, inline='always')
def qnr_draw(counts, s, rng):
    K = counts.shape[0]
    k, kk = uniform_pair(K, rng)
    m = counts[k] + counts[kk]
    if m == 0:
        return k, kk, 1
    return k, kk, geometric(s / m, rng)


@njit(cache=True, inline='always')
def loglik(kind, hyper, theta, Y, i, k):
    if kind == KIND_PRIOR:
        return 0.0
    if kind == KIND_GAUSS:
        s2 = hyper[0]
        p = Y.shape[1]
        quad = 0.0
        for j in range(p):
            d = Y[i, j] - theta[k, j]
            quad += d * d
        return -0.5 * p * (LOG_2PI + math.log(s2)) - 0.5 * quad / s2
    th = theta[k, 0]
    y = Y[i, 0]
    return y * math.log(th) - th - math.lgamma(y + 1.0)


@njit(cache=True, inline='always')
def step_cd(kind, alpha, hyper, theta0, c, counts, members, pos, sums, moves, Y,
            w, theta, rng, buf):
    n = c.shape[0]
    K = counts.shape[0]
    i = randbelow(n + 1, rng)
    if i < n:
        for k in range(K):
            buf[k] = math.log(w[k]) + loglik(kind, hyper, theta, Y, i, k)
        k = sample_log_categorical(buf, rng)
        move(c, counts, members, pos, sums, moves, Y, i, k)
        return MV_CD_ALLOC, i
    total = 0.0
    for k in range(K):
        w[k] = rng.gamma(alpha[k] + counts[k], 1.0)
        total += w[k]
    for k in range(K):
        w[k] /= total
    if kind == KIND_GAUSS:
        s2 = hyper[0]
        s02 = hyper[1]
        for k in range(K):
            prec = 1.0 / s02 + counts[k] / s2
            sd = math.sqrt(1.0 / prec)
            for j in range(Y.shape[1]):
                mu = (theta0[j] / s02 + sums[k, j] / s2) / prec
                theta[k, j] = mu + sd * rng.standard_normal()
    elif kind == KIND_POISSON:
        for k in range(K):
            theta[k, 0] = rng.gamma(hyper[2] + sums[k, 0], 1.0 / (hyper[3] + counts[k]))
    return MV_CD_PARAMS, -1


@njit(cache=True)
def run_steps(kernel, n_steps, kind, alpha, hyper, theta0, Y, c, counts, members,
              pos, sums, moves, table, carry, w, theta, xi, s, freeze_count, rng,
              trace):
    """Apply ``n_steps`` kernel steps in place; returns (steps done, total cost).

    ``carry`` = [k, k', remaining] holds the pair a Q_NR block is working on,
    so Q_NR can be advanced one lifted sub-step at a time. If
    ``freeze_count >= 0`` the run stops as soon as some cluster holds at most
    that many points. When ``trace`` has length >= n_steps, counts[0] is
    recorded after each step.
    """
    K = counts.shape[0]
    n = c.shape[0]
    buf = np.empty(K)
    cost = 0
    rec = trace.shape[0] >= n_steps
    eps = xi / n
    if moves[0] >= REFRESH_EVERY:
        refresh_sums(c, sums, moves, Y)
    for t in range(n_steps):
        if freeze_count >= 0:
            for k in range(K):
                if counts[k] <= freeze_count:
                    return t, cost
        if kernel == K_MG:
            step_mg(kind, alpha, hyper, theta0, c, counts, members, pos, sums, moves,
                    Y, rng, buf)
            cost += K
        elif kernel == K_R:
            step_r(kind, alpha, hyper, theta0, c, counts, members, pos, sums, moves,
                   Y, rng)
            cost += 2
        elif kernel == K_NR:
            step_nr(kind, alpha, hyper, theta0, c, counts, members, pos, sums, moves,
                    Y, table, xi, rng)
            cost += 2
        elif kernel == K_QNR:
            if carry[2] <= 0:
                k, kk, tt = qnr_draw(counts, s, rng)
                carry[0] = k
                carry[1] = kk
                carry[2] = tt
            lifted_pair(kind, alpha, hyper, theta0, c, counts, members, pos, sums,
                        moves, Y, table, carry[0], carry[1], eps, rng)
            carry[2] -= 1
            cost += 2
        else:
            code, _ = step_cd(kind, alpha, hyper, theta0, c, counts, members, pos,
                              sums, moves, Y, w, theta, rng, buf)
            if code == MV_CD_ALLOC:
                cost += K
        if rec:
            trace[t] = counts[0]
    return n_steps, cost
