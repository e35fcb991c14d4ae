"""Collapsed Gibbs samplers for the copula MMSB.

Two variants share the state in :class:`~cmmsb.relmodel.ModelState`:

``pi``
    membership vectors ``pi_i`` are explicit and the copula variables are
    integrated out, so a pair's indicator cell has the probability of a
    copula rectangle spanned by the cumulative memberships of both nodes.
``uv``
    ``pi`` is integrated out and each copula pair keeps its ``(u, v)``; the
    probability that ``u`` lands in interval ``k`` of the collapsed ``pi_i``
    is a difference of two Beta CDFs.

The role-compatibility matrix is always collapsed.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import copula as cop
from .copula import (GUMBEL, INDEPENDENCE, NEG_TOL, CopulaSpec, NumericalError,
                     _cdf, _from_free, _gumbel_a, _log_density, _log_jacobian,
                     _log_prior, _rect, _sample_pair, _to_free)
from .mathkernel import DomainError, _betainc, _sample_dirichlet, rng_stream
from .relmodel import (MODE_ALIASES, MODES, ConsistencyError, Hyperparams, InteractionMatrix,
                       ModelState, SubgroupMap, _add, _compact, _edge_loglik,
                       _instantiate, _predictive, _remove)

VARIANTS = ("pi", "uv")

# status codes returned by kernels
OK = 0
NEGATIVE_MASS = 1


@njit(cache=True)
def _safe_log(x):
    if x <= 0.0:
        return -np.inf
    return math.log(x)


@njit(cache=True)
def _categorical(w, size, total, rng):
    target = rng.random() * total
    acc = 0.0
    last = 0
    for t in range(size):
        if w[t] > 0.0:
            last = t
            acc += w[t]
            if acc > target:
                return t
    return last


# ---------------------------------------------------------------------------
# pi-explicit kernels

@njit(cache=True)
def _cumsum_row(row, L, out):
    acc = 0.0
    out[0] = 0.0
    for k in range(L):
        acc += row[k]
        out[k + 1] = acc
    out[L] = 1.0


@njit(cache=True)
def _cumsums(pi, L, cum):
    for i in range(pi.shape[0]):
        _cumsum_row(pi[i], L, cum[i])


@njit(cache=True)
def _rect_table(fam, theta, pii, pij, L, ci, cj, grid, table):
    """Fill ``table[:L, :L]`` with copula rectangle masses; returns a status code."""
    if fam == INDEPENDENCE:
        for k in range(L):
            for l in range(L):
                table[k, l] = pii[k] * pij[l]
        return OK
    _cumsum_row(pii, L, ci)
    _cumsum_row(pij, L, cj)
    if fam == GUMBEL and theta != 1.0:
        # share -log(cumsum) across the grid
        for a in range(L + 1):
            for b in range(L + 1):
                if ci[a] <= 0.0 or cj[b] <= 0.0:
                    grid[a, b] = 0.0
                elif a == L or ci[a] >= 1.0:
                    grid[a, b] = min(cj[b], 1.0)
                elif b == L or cj[b] >= 1.0:
                    grid[a, b] = ci[a]
                else:
                    grid[a, b] = math.exp(-_gumbel_a(-math.log(ci[a]), -math.log(cj[b]), theta))
    else:
        for a in range(L + 1):
            for b in range(L + 1):
                grid[a, b] = _cdf(fam, theta, ci[a], cj[b])
    status = OK
    for k in range(L):
        for l in range(L):
            m = grid[k + 1, l + 1] + grid[k, l] - grid[k + 1, l] - grid[k, l + 1]
            if m < 0.0:
                if m < -NEG_TOL:
                    status = NEGATIVE_MASS
                m = 0.0
            table[k, l] = m
    return status


@njit(cache=True)
def _pair_sweep_pi(order, start, pairs, e, g, fam, theta, s, r, N, Nk, m1, m0,
                   beta, pi, K, hdp, alpha, gamma, lam1, lam2, rng):
    cap = Nk.shape[0]
    ci = np.empty(cap + 2)
    cj = np.empty(cap + 2)
    grid = np.empty((cap + 2, cap + 2))
    table = np.empty((cap + 1, cap + 1))
    w = np.empty((cap + 1) * (cap + 1))
    for idx in range(start, order.shape[0]):
        if hdp and K + 2 > cap:
            return idx, K, OK
        p = order[idx]
        k0 = s[p]
        l0 = r[p]
        if k0 >= 0:
            _remove(p, pairs, e, s, r, N, Nk, m1, m0)
            if hdp:
                if Nk[k0] == 0:
                    K = _compact(k0, K, N, Nk, m1, m0, s, r, beta, pi)
                    if l0 > k0:
                        l0 -= 1
                    elif l0 == k0:
                        l0 = -1
                if l0 >= 0 and Nk[l0] == 0:
                    K = _compact(l0, K, N, Nk, m1, m0, s, r, beta, pi)
        L = K + hdp
        i = pairs[p, 0]
        j = pairs[p, 1]
        d = g[p]
        st = _rect_table(fam[d], theta[d], pi[i], pi[j], L, ci, cj, grid, table)
        if st != OK:
            return idx, K, st
        total = 0.0
        for k in range(L):
            for l in range(L):
                q = _predictive(m1, m0, k, l, K, lam1, lam2)
                wt = table[k, l] * (q if e[p] == 1 else 1.0 - q)
                w[k * L + l] = wt
                total += wt
        pick = _categorical(w, L * L, total, rng)
        k = pick // L
        l = pick % L
        if hdp and (k == K or l == K):
            K = _instantiate(K, beta, pi, alpha, gamma, rng)
        _add(p, k, l, pairs, e, s, r, N, Nk, m1, m0)
    return order.shape[0], K, OK


@njit(cache=True)
def _node_copula_logratio(i, side_pi, cum_i, pairs, g, fam, theta, s, r, cum,
                          node_ptr, node_pair, node_side):
    """sum over copula pairs touching i of log(cell mass / pi_i[own index])."""
    tot = 0.0
    for t in range(node_ptr[i], node_ptr[i + 1]):
        p = node_pair[t]
        d = g[p]
        if fam[d] == INDEPENDENCE:
            continue
        k = s[p]
        l = r[p]
        if node_side[t] == 0:
            j = pairs[p, 1]
            m = _rect(fam[d], theta[d], cum_i[k], cum_i[k + 1], cum[j, l], cum[j, l + 1])
            tot += _safe_log(m) - _safe_log(side_pi[k])
        else:
            j = pairs[p, 0]
            m = _rect(fam[d], theta[d], cum[j, k], cum[j, k + 1], cum_i[l], cum_i[l + 1])
            tot += _safe_log(m) - _safe_log(side_pi[l])
    return tot


@njit(cache=True)
def _resample_pi(pairs, g, fam, theta, s, r, N, beta, pi, K, hdp, alpha,
                 node_ptr, node_pair, node_side, steps, rng):
    """Independence MH for each pi_i with the conjugate Dirichlet as proposal."""
    n = pi.shape[0]
    L = K + hdp
    cum = np.empty((n, L + 1))
    _cumsums(pi, L, cum)
    wts = np.empty(L)
    cprop = np.empty(L + 1)
    accepted = 0
    for i in range(n):
        for k in range(L):
            wts[k] = alpha * beta[k] + (N[i, k] if k < K else 0)
        cur = _node_copula_logratio(i, pi[i], cum[i], pairs, g, fam, theta, s, r, cum,
                                    node_ptr, node_pair, node_side)
        for _ in range(steps):
            prop = _sample_dirichlet(wts, rng)
            _cumsum_row(prop, L, cprop)
            new = _node_copula_logratio(i, prop, cprop, pairs, g, fam, theta, s, r, cum,
                                        node_ptr, node_pair, node_side)
            logr = new - cur
            if logr >= 0.0 or math.log(rng.random()) < logr:
                for k in range(L):
                    pi[i, k] = prop[k]
                for k in range(L + 1):
                    cum[i, k] = cprop[k]
                cur = new
                accepted += 1
    return accepted


@njit(cache=True)
def _log_dirichlet(x, a, L):
    tot = 0.0
    asum = 0.0
    for k in range(L):
        asum += a[k]
        tot += (a[k] - 1.0) * _safe_log(x[k]) - math.lgamma(a[k])
    return tot + math.lgamma(asum)


@njit(cache=True)
def _beta_target(b, L, K, hdp, logpi_sum, n, alpha, gamma):
    """log p(beta) + sum_i log Dir(pi_i | alpha beta)."""
    lt = 0.0
    if hdp:
        # ordered stick-breaking density of (beta_1..beta_K, remainder)
        lt += K * math.log(gamma) + (gamma - 1.0) * _safe_log(b[K])
        rest = 1.0
        for k in range(K):
            lt -= _safe_log(rest)
            rest -= b[k]
    else:
        for k in range(K):
            lt += (gamma - 1.0) * _safe_log(b[k])
    lt += n * math.lgamma(alpha)
    for k in range(L):
        lt += -n * math.lgamma(alpha * b[k]) + (alpha * b[k] - 1.0) * logpi_sum[k]
    return lt


@njit(cache=True)
def _resample_beta_given_pi(beta, pi, K, hdp, alpha, gamma, kappa, steps, rng):
    """Random-walk MH on beta with a Dirichlet(kappa * beta) proposal."""
    n = pi.shape[0]
    L = K + hdp
    logpi_sum = np.zeros(L)
    for i in range(n):
        for k in range(L):
            logpi_sum[k] += _safe_log(pi[i, k])
    cur = beta[:L].copy()
    a_cur = kappa * cur
    t_cur = _beta_target(cur, L, K, hdp, logpi_sum, n, alpha, gamma)
    accepted = 0
    for _ in range(steps):
        prop = _sample_dirichlet(a_cur, rng)
        a_prop = kappa * prop
        t_prop = _beta_target(prop, L, K, hdp, logpi_sum, n, alpha, gamma)
        logr = (t_prop - t_cur + _log_dirichlet(cur, a_prop, L)
                - _log_dirichlet(prop, a_cur, L))
        if logr >= 0.0 or math.log(rng.random()) < logr:
            cur = prop
            a_cur = a_prop
            t_cur = t_prop
            accepted += 1
    for k in range(L):
        beta[k] = cur[k]
    return accepted


@njit(cache=True)
def _theta_mh_pi(fam, theta0, p0, p1, scale, plist, pairs, s, r, pi, L, steps, rng):
    n = pi.shape[0]
    cum = np.empty((n, L + 1))
    _cumsums(pi, L, cum)
    th = theta0
    ll = 0.0
    for t in range(plist.shape[0]):
        p = plist[t]
        i = pairs[p, 0]
        j = pairs[p, 1]
        k = s[p]
        l = r[p]
        ll += _safe_log(_rect(fam, th, cum[i, k], cum[i, k + 1], cum[j, l], cum[j, l + 1]))
    cur = ll + _log_prior(fam, th, p0, p1) + _log_jacobian(fam, th)
    accepted = 0
    for _ in range(steps):
        cand = _from_free(fam, _to_free(fam, th) + scale * rng.standard_normal())
        lp = _log_prior(fam, cand, p0, p1)
        if lp == -np.inf or (fam == GUMBEL and cand <= 1.0) or abs(cand) >= 1.0 and fam != GUMBEL:
            continue
        ll = 0.0
        for t in range(plist.shape[0]):
            p = plist[t]
            i = pairs[p, 0]
            j = pairs[p, 1]
            k = s[p]
            l = r[p]
            ll += _safe_log(_rect(fam, cand, cum[i, k], cum[i, k + 1], cum[j, l], cum[j, l + 1]))
        new = ll + lp + _log_jacobian(fam, cand)
        if new - cur >= 0.0 or math.log(rng.random()) < new - cur:
            th = cand
            cur = new
            accepted += 1
    return th, accepted


# ---------------------------------------------------------------------------
# uv-explicit kernels

@njit(cache=True)
def _node_weights(alpha, beta, Nrow, K, L, w):
    tot = 0.0
    for k in range(L):
        w[k] = alpha * beta[k] + (Nrow[k] if k < K else 0)
        tot += w[k]
    return tot


@njit(cache=True)
def _interval_probs(u, w, L, out):
    """out[k] = I_u(h_k, hh_k) - I_u(h_{k+1}, hh_{k+1}) with h_k = sum_{d<k} w_d."""
    tail = 0.0
    for k in range(L):
        tail += w[k]
    head = 0.0
    prev = 1.0
    status = OK
    for k in range(L):
        head += w[k]
        tail -= w[k]
        if k == L - 1 or tail <= 0.0:
            F = 0.0
        else:
            F = _betainc(u, head, tail)
        x = prev - F
        if x < 0.0:
            if x < -NEG_TOL:
                status = NEGATIVE_MASS
            x = 0.0
        out[k] = x
        prev = F
    return status


@njit(cache=True)
def _interval_prob(u, w, L, k):
    """Single entry k of :func:`_interval_probs`."""
    head = 0.0
    tail = 0.0
    for d in range(L):
        if d < k:
            head += w[d]
        else:
            tail += w[d]
    if k == 0:
        lo = 1.0
    else:
        lo = _betainc(u, head, tail)
    head += w[k]
    tail -= w[k]
    if k == L - 1 or tail <= 0.0:
        hi = 0.0
    else:
        hi = _betainc(u, head, tail)
    return max(lo - hi, 0.0)


@njit(cache=True)
def _pair_sweep_uv(order, start, pairs, e, g, fam, theta, s, r, u, v, N, Nk, m1, m0,
                   beta, K, hdp, alpha, gamma, lam1, lam2, uv_steps, rng):
    cap = Nk.shape[0]
    wi = np.empty(cap + 1)
    wj = np.empty(cap + 1)
    Pi = np.empty(cap + 1)
    Pj = np.empty(cap + 1)
    w = np.empty((cap + 1) * (cap + 1))
    nopi = np.empty((0, 0))
    accepted = 0
    for idx in range(start, order.shape[0]):
        if hdp and K + 2 > cap:
            return idx, K, OK, accepted
        p = order[idx]
        i = pairs[p, 0]
        j = pairs[p, 1]
        d = g[p]
        k0 = s[p]
        l0 = r[p]
        if k0 >= 0:
            _remove(p, pairs, e, s, r, N, Nk, m1, m0)
            if hdp:
                # an emptied community merges into the remainder interval
                if Nk[k0] == 0:
                    K = _compact(k0, K, N, Nk, m1, m0, s, r, beta, nopi)
                    if l0 > k0:
                        l0 -= 1
                    elif l0 == k0:
                        l0 = K
                    k0 = K
                if l0 < K and Nk[l0] == 0:
                    K = _compact(l0, K, N, Nk, m1, m0, s, r, beta, nopi)
                    if k0 > l0:
                        k0 -= 1
                    l0 = K
        L = K + hdp
        toti = _node_weights(alpha, beta, N[i], K, L, wi)
        totj = _node_weights(alpha, beta, N[j], K, L, wj)
        if fam[d] == INDEPENDENCE:
            for k in range(L):
                Pi[k] = wi[k] / toti
                Pj[k] = wj[k] / totj
        else:
            if k0 >= 0:
                cur = _interval_prob(u[p], wi, L, k0) * _interval_prob(v[p], wj, L, l0)
                for _ in range(uv_steps):
                    us, vs = _sample_pair(fam[d], theta[d], rng)
                    new = _interval_prob(us, wi, L, k0) * _interval_prob(vs, wj, L, l0)
                    if rng.random() * cur < new:
                        u[p] = us
                        v[p] = vs
                        cur = new
                        accepted += 1
            st = _interval_probs(u[p], wi, L, Pi)
            st = max(st, _interval_probs(v[p], wj, L, Pj))
            if st != OK:
                return idx, K, st, accepted
        total = 0.0
        for k in range(L):
            for l in range(L):
                q = _predictive(m1, m0, k, l, K, lam1, lam2)
                wt = Pi[k] * Pj[l] * (q if e[p] == 1 else 1.0 - q)
                w[k * L + l] = wt
                total += wt
        pick = _categorical(w, L * L, total, rng)
        k = pick // L
        l = pick % L
        if hdp and (k == K or l == K):
            K = _instantiate(K, beta, nopi, alpha, gamma, rng)
        _add(p, k, l, pairs, e, s, r, N, Nk, m1, m0)
    return order.shape[0], K, OK, accepted


@njit(cache=True)
def _antoniak(count, conc, rng):
    """Number of occupied tables after seating ``count`` customers in a CRP(conc)."""
    t = 0
    for m in range(count):
        if rng.random() < conc / (conc + m):
            t += 1
    return t


@njit(cache=True)
def _resample_beta_crf(N, K, hdp, beta, alpha, gamma, rng):
    n = N.shape[0]
    L = K + hdp
    w = np.zeros(L)
    for k in range(K):
        t = 0
        for i in range(n):
            t += _antoniak(N[i, k], alpha * beta[k], rng)
        w[k] = t if hdp else t + gamma
    if hdp:
        w[K] = gamma
    b = _sample_dirichlet(w, rng)
    for k in range(L):
        beta[k] = b[k]
    return b


@njit(cache=True)
def _theta_mh_uv(fam, theta0, p0, p1, scale, plist, u, v, steps, rng):
    th = theta0
    ll = 0.0
    for t in range(plist.shape[0]):
        p = plist[t]
        ll += _log_density(fam, th, u[p], v[p])
    cur = ll + _log_prior(fam, th, p0, p1) + _log_jacobian(fam, th)
    accepted = 0
    for _ in range(steps):
        cand = _from_free(fam, _to_free(fam, th) + scale * rng.standard_normal())
        lp = _log_prior(fam, cand, p0, p1)
        if lp == -np.inf or (fam == GUMBEL and cand <= 1.0) or abs(cand) >= 1.0 and fam != GUMBEL:
            continue
        ll = 0.0
        for t in range(plist.shape[0]):
            p = plist[t]
            ll += _log_density(fam, cand, u[p], v[p])
        new = ll + lp + _log_jacobian(fam, cand)
        if new - cur >= 0.0 or math.log(rng.random()) < new - cur:
            th = cand
            cur = new
            accepted += 1
    return th, accepted


# ---------------------------------------------------------------------------
# posterior predictive accumulation

@njit(cache=True)
def _accumulate_pi(pairs, s, r, m1, m0, K, lam1, lam2, other, other_g, fam, theta,
                   pi, L, out):
    for p in range(pairs.shape[0]):
        out[pairs[p, 0], pairs[p, 1]] += _predictive(m1, m0, s[p], r[p], K, lam1, lam2)
    cap = pi.shape[1]
    ci = np.empty(cap + 1)
    cj = np.empty(cap + 1)
    grid = np.empty((cap + 1, cap + 1))
    table = np.empty((cap, cap))
    status = OK
    for q in range(other.shape[0]):
        i = other[q, 0]
        j = other[q, 1]
        d = other_g[q]
        st = _rect_table(fam[d], theta[d], pi[i], pi[j], L, ci, cj, grid, table)
        status = max(status, st)
        acc = 0.0
        for k in range(L):
            for l in range(L):
                acc += table[k, l] * _predictive(m1, m0, k, l, K, lam1, lam2)
        out[i, j] += acc
    return status


@njit(cache=True)
def _accumulate_uv(pairs, s, r, m1, m0, K, lam1, lam2, other, other_g, fam, theta,
                   N, beta, alpha, L, draws, rng, out):
    for p in range(pairs.shape[0]):
        out[pairs[p, 0], pairs[p, 1]] += _predictive(m1, m0, s[p], r[p], K, lam1, lam2)
    wi = np.empty(L)
    wj = np.empty(L)
    Pi = np.empty(L)
    Pj = np.empty(L)
    pred = np.empty((L, L))
    for k in range(L):
        for l in range(L):
            pred[k, l] = _predictive(m1, m0, k, l, K, lam1, lam2)
    status = OK
    for q in range(other.shape[0]):
        i = other[q, 0]
        j = other[q, 1]
        d = other_g[q]
        toti = _node_weights(alpha, beta, N[i], K, L, wi)
        totj = _node_weights(alpha, beta, N[j], K, L, wj)
        acc = 0.0
        if fam[d] == INDEPENDENCE:
            for k in range(L):
                for l in range(L):
                    acc += wi[k] * wj[l] * pred[k, l]
            acc /= toti * totj
        else:
            # (u, v) of an unobserved pair follow the copula prior
            for _ in range(draws):
                uu, vv = _sample_pair(fam[d], theta[d], rng)
                status = max(status, _interval_probs(uu, wi, L, Pi))
                status = max(status, _interval_probs(vv, wj, L, Pj))
                for k in range(L):
                    for l in range(L):
                        acc += Pi[k] * Pj[l] * pred[k, l]
            acc /= draws
        out[i, j] += acc
    return status


# ---------------------------------------------------------------------------
# public single-step operations

def pi_rectangle_table(spec, pi_i, pi_j):
    """Joint probability table of (s, r) given both membership vectors.

    Entry (k, l) is the copula mass of the rectangle spanned by interval k of
    ``pi_i`` and interval l of ``pi_j``; rows sum to ``pi_i``, columns to ``pi_j``.
    """
    pi_i = np.ascontiguousarray(pi_i, dtype=np.float64)
    pi_j = np.ascontiguousarray(pi_j, dtype=np.float64)
    if pi_i.shape != pi_j.shape or pi_i.ndim != 1:
        raise DomainError("membership vectors must have equal length")
    for x in (pi_i, pi_j):
        if (x < 0).any() or abs(x.sum() - 1.0) > 1e-9:
            raise DomainError("membership vectors must be probability vectors")
    L = pi_i.shape[0]
    table = np.empty((L, L))
    st = _rect_table(spec.code, spec.theta_value, pi_i, pi_j, L, np.empty(L + 1),
                     np.empty(L + 1), np.empty((L + 1, L + 1)), table)
    if st != OK:
        raise NumericalError("negative rectangle mass beyond round-off")
    return table


def uv_interval_prob(u, alpha, beta, counts):
    """Probability that ``u`` falls in each interval of the collapsed pi_i.

    ``beta`` holds the interval weights (remainder last in hdp mode) and
    ``counts`` the node's community counts with the current pair removed;
    ``counts`` may be one shorter than ``beta`` (no count for the remainder).
    """
    beta = np.asarray(beta, dtype=np.float64)
    N = np.zeros(beta.shape[0])
    c = np.asarray(counts, dtype=np.float64)
    if c.shape[0] > beta.shape[0] or (c < 0).any():
        raise ConsistencyError("counts must be nonnegative with at most one per interval")
    N[: c.shape[0]] = c
    if not (0.0 <= u <= 1.0):
        raise DomainError(f"u must lie in [0, 1], got {u}")
    if alpha <= 0 or (beta <= 0).any():
        raise DomainError("alpha and beta must be positive")
    L = beta.shape[0]
    w = alpha * beta + N
    out = np.empty(L)
    if _interval_probs(float(u), w, L, out) != OK:
        raise NumericalError("negative interval probability beyond round-off")
    return out


def collapsed_mmsb_conditional(alpha, beta, counts):
    """E[pi_i] under the collapsed Dirichlet: (alpha beta_k + N_k) / (alpha + N)."""
    beta = np.asarray(beta, dtype=np.float64)
    N = np.zeros(beta.shape[0])
    c = np.asarray(counts, dtype=np.float64)
    N[: c.shape[0]] = c
    w = alpha * beta + N
    return w / w.sum()


def resample_beta(N, beta, alpha, gamma, rng, hdp=True):
    """One auxiliary-table update of the global weights given counts ``N`` (n x K).

    Table counts t_ik follow the Antoniak distribution; then
    beta ~ Dir(t_.1, ..., t_.K, gamma) in hdp mode (remainder last) or
    Dir(gamma + t_.k) in finite mode.  Returns a new vector.
    """
    N = np.ascontiguousarray(N, dtype=np.int64)
    if N.ndim != 2 or (N < 0).any():
        raise ConsistencyError("counts must be a nonnegative n x K matrix")
    K = N.shape[1]
    b = np.array(beta, dtype=np.float64)
    if b.shape[0] != K + int(hdp):
        raise DomainError("beta must have K (+1 remainder in hdp mode) entries")
    return _resample_beta_crf(N, K, int(hdp), b, float(alpha), float(gamma), rng).copy()


# ---------------------------------------------------------------------------
# chain configuration, trace and sampler

@dataclass
class ChainConfig:
    """Settings for one chain.

    ``K`` is the fixed community count in finite mode and the initial count in
    hdp mode.  ``copulas[d - 1]`` describes subgroup ``d``; subgroup 0 is
    always independent.
    """

    variant: str = "pi"
    mode: str = "finite"
    K: int = 4
    iterations: int = 1000
    burn_in_fraction: float = 0.5
    seed: int = 0
    copulas: list = field(default_factory=list)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    sample_beta: bool = True
    beta_init: list = None
    theta_steps: int = 5
    pi_steps: int = 1
    beta_steps: int = 5
    beta_concentration: float = 200.0
    uv_steps: int = 2
    predictive_draws: int = 4

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.mode not in MODE_ALIASES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.mode = MODE_ALIASES[self.mode]
        if self.iterations < 2:
            raise DomainError("iterations must be at least 2")
        if not 0.0 < self.burn_in_fraction < 1.0:
            raise DomainError("burn_in_fraction must lie in (0, 1)")
        if self.K < 1:
            raise DomainError("K must be at least 1")
        for name in ("theta_steps", "pi_steps", "beta_steps", "uv_steps", "predictive_draws"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")
        if self.predictive_draws < 1:
            raise DomainError("predictive_draws must be at least 1")
        if self.beta_concentration <= 0:
            raise DomainError("beta_concentration must be positive")
        if self.beta_init is not None:
            b = np.asarray(self.beta_init, dtype=np.float64)
            size = self.K + (1 if self.mode == "hdp" else 0)
            if b.shape != (size,) or (b <= 0).any() or abs(b.sum() - 1.0) > 1e-9:
                raise DomainError(f"beta_init must be a positive probability vector of length {size}")
            self.beta_init = [float(x) for x in b]
        self.copulas = [c if isinstance(c, CopulaSpec) else CopulaSpec(**c) for c in self.copulas]

    @property
    def burn_in(self):
        return int(self.iterations * self.burn_in_fraction)


@dataclass
class Trace:
    """Per-iteration records plus the accumulated posterior predictive sums."""

    K: np.ndarray
    occupied: np.ndarray
    theta: np.ndarray
    loglik: np.ndarray
    pred_sum: np.ndarray
    n_samples: int
    burn_in: int
    accept: dict

    @property
    def iterations(self):
        return self.K.shape[0]


class Sampler:
    """One Markov chain over the collapsed copula MMSB posterior.

    Only the observed entries of ``data`` enter the likelihood; every other
    off-diagonal pair is predicted by marginalizing its indicator cell.
    """

    def __init__(self, data, subgroups, cfg, rng=None):
        if subgroups.n != data.n:
            raise DomainError("subgroup map and data disagree on n")
        if subgroups.D > len(cfg.copulas):
            raise DomainError(f"subgroup map uses {subgroups.D} copulas, config declares "
                              f"{len(cfg.copulas)}")
        self.cfg = cfg
        self.data = data
        self.rng = rng if rng is not None else rng_stream(cfg.seed)
        hp = cfg.hyper
        pairs, e = data.observed_pairs()
        self.state = st = ModelState(data.n, pairs, e, cfg.K, cfg.mode, hp,
                                     with_pi=cfg.variant == "pi")
        self.g = subgroups.labels_for(pairs)
        specs = [CopulaSpec("independence")] + list(cfg.copulas)
        self.specs = specs
        self.fam = np.array([c.code for c in specs], dtype=np.int64)
        self.theta = np.array([c.theta_value for c in specs])

        off = ~data.observed_mask()
        np.fill_diagonal(off, False)
        oi, oj = np.nonzero(off)
        self.other = np.stack([oi, oj], axis=1).astype(np.int64)
        self.other_g = subgroups.labels[oi, oj].astype(np.int64)

        n, P = data.n, st.n_pairs
        # pairs touching each node, with the node's side (0 sender, 1 receiver)
        nodes = np.concatenate([pairs[:, 0], pairs[:, 1]])
        sides = np.concatenate([np.zeros(P, np.int64), np.ones(P, np.int64)])
        ids = np.concatenate([np.arange(P), np.arange(P)])
        o = np.argsort(nodes, kind="stable")
        self.node_pair = ids[o]
        self.node_side = sides[o]
        self.node_ptr = np.searchsorted(nodes[o], np.arange(n + 1)).astype(np.int64)
        self.sub_pairs = [np.nonzero(self.g == d)[0].astype(np.int64) for d in range(len(specs))]
        self.accept = {"pi": [0, 0], "beta": [0, 0], "uv": [0, 0]}
        self.accept.update({f"theta{d}": [0, 0] for d in range(1, len(specs))})
        self._initialize()

    # -- setup -----------------------------------------------------------

    def _initialize(self):
        st, rng, hp = self.state, self.rng, self.cfg.hyper
        K = st.K
        st.ensure_capacity(K + 2)
        if cfg_beta := self.cfg.beta_init:
            st.beta[: len(cfg_beta)] = cfg_beta
        elif st.hdp:
            rest = 1.0
            for k in range(K):
                b = rng.beta(1.0, hp.gamma)
                st.beta[k] = max(b * rest, 1e-300)
                rest *= 1.0 - b
            st.beta[K] = max(rest, 1e-300)
            st.beta[: K + 1] /= st.beta[: K + 1].sum()
        else:
            st.beta[:K] = _sample_dirichlet(np.full(K, hp.gamma), rng)
        for p in range(st.n_pairs):
            k, l = rng.integers(K, size=2)
            _add(p, k, l, st.pairs, st.e, st.s, st.r, st.N, st.Nk, st.m1, st.m0)
        if st.hdp:
            for k in range(K - 1, -1, -1):
                if st.Nk[k] == 0:
                    st.K = int(_compact(k, st.K, st.N, st.Nk, st.m1, st.m0, st.s, st.r,
                                        st.beta, st.pi))
        L = st.n_intervals
        if self.cfg.variant == "pi":
            for i in range(st.n):
                w = hp.alpha * st.beta[:L] + np.pad(st.N[i, : st.K], (0, L - st.K))
                st.pi[i, :L] = _sample_dirichlet(w, rng)
        else:
            st.u = np.full(st.n_pairs, 0.5)
            st.v = np.full(st.n_pairs, 0.5)
            for p in range(st.n_pairs):
                d = self.g[p]
                st.u[p], st.v[p] = _sample_pair(self.fam[d], self.theta[d], rng)

    # -- moves -----------------------------------------------------------

    def _raise_status(self, status):
        if status == NEGATIVE_MASS:
            raise NumericalError("negative probability mass beyond round-off tolerance")

    def update_pairs(self):
        """One Gibbs update of every pair's (s, r), in random order."""
        st, hp, cfg = self.state, self.cfg.hyper, self.cfg
        order = self.rng.permutation(st.n_pairs).astype(np.int64)
        pos = 0
        while pos < order.shape[0]:
            if cfg.variant == "pi":
                pos, K, status = _pair_sweep_pi(
                    order, pos, st.pairs, st.e, self.g, self.fam, self.theta, st.s, st.r,
                    st.N, st.Nk, st.m1, st.m0, st.beta, st.pi, st.K, int(st.hdp),
                    hp.alpha, hp.gamma, hp.lambda1, hp.lambda2, self.rng)
            else:
                pos, K, status, acc = _pair_sweep_uv(
                    order, pos, st.pairs, st.e, self.g, self.fam, self.theta, st.s, st.r,
                    st.u, st.v, st.N, st.Nk, st.m1, st.m0, st.beta, st.K, int(st.hdp),
                    hp.alpha, hp.gamma, hp.lambda1, hp.lambda2, cfg.uv_steps, self.rng)
                self.accept["uv"][0] += acc
            st.K = int(K)
            self._raise_status(status)
            if pos < order.shape[0]:
                st.ensure_capacity(2 * st.capacity)
        if cfg.variant == "uv":
            n_cop = sum(len(self.sub_pairs[d]) for d in range(1, len(self.specs))
                        if self.specs[d].family != "independence")
            self.accept["uv"][1] += cfg.uv_steps * n_cop

    def update_pi(self):
        st, cfg = self.state, self.cfg
        acc = _resample_pi(st.pairs, self.g, self.fam, self.theta, st.s, st.r, st.N,
                           st.beta, st.pi, st.K, int(st.hdp), cfg.hyper.alpha,
                           self.node_ptr, self.node_pair, self.node_side, cfg.pi_steps,
                           self.rng)
        self.accept["pi"][0] += acc
        self.accept["pi"][1] += cfg.pi_steps * st.n

    def update_beta(self):
        st, cfg = self.state, self.cfg
        if cfg.variant == "pi":
            acc = _resample_beta_given_pi(st.beta, st.pi, st.K, int(st.hdp), cfg.hyper.alpha,
                                          cfg.hyper.gamma, cfg.beta_concentration,
                                          cfg.beta_steps, self.rng)
            self.accept["beta"][0] += acc
            self.accept["beta"][1] += cfg.beta_steps
        else:
            _resample_beta_crf(st.N, st.K, int(st.hdp), st.beta, cfg.hyper.alpha,
                               cfg.hyper.gamma, self.rng)

    def update_theta(self):
        st, cfg = self.state, self.cfg
        for d in range(1, len(self.specs)):
            spec = self.specs[d]
            plist = self.sub_pairs[d]
            if spec.fixed or spec.proposal_scale == 0 or cfg.theta_steps == 0:
                continue
            p0, p1 = cop.prior_params(spec)
            if cfg.variant == "pi":
                th, acc = _theta_mh_pi(spec.code, self.theta[d], p0, p1, spec.proposal_scale,
                                       plist, st.pairs, st.s, st.r, st.pi, st.n_intervals,
                                       cfg.theta_steps, self.rng)
            else:
                th, acc = _theta_mh_uv(spec.code, self.theta[d], p0, p1, spec.proposal_scale,
                                       plist, st.u, st.v, cfg.theta_steps, self.rng)
            self.theta[d] = th
            self.accept[f"theta{d}"][0] += acc
            self.accept[f"theta{d}"][1] += cfg.theta_steps

    def sweep(self):
        """Pairs, then pi (pi variant), then beta, then each copula theta."""
        self.update_pairs()
        if self.cfg.variant == "pi":
            self.update_pi()
        if self.cfg.sample_beta:
            self.update_beta()
        self.update_theta()

    def accumulate_predictive(self, out):
        st, hp, cfg = self.state, self.cfg.hyper, self.cfg
        L = st.n_intervals
        if cfg.variant == "pi":
            status = _accumulate_pi(st.pairs, st.s, st.r, st.m1, st.m0, st.K, hp.lambda1,
                                    hp.lambda2, self.other, self.other_g, self.fam, self.theta,
                                    st.pi, L, out)
        else:
            status = _accumulate_uv(st.pairs, st.s, st.r, st.m1, st.m0, st.K, hp.lambda1,
                                    hp.lambda2, self.other, self.other_g, self.fam, self.theta,
                                    st.N, st.beta, hp.alpha, L, cfg.predictive_draws,
                                    self.rng, out)
        self._raise_status(status)

    def refresh_observations(self):
        """Redraw every observed e from the model given the current indicators.

        Draws B | counts, then e | B, then forgets B; used to test the sampler
        against forward simulation.  Returns the new edge vector.
        """
        st, hp = self.state, self.cfg.hyper
        K = st.K
        B = self.rng.beta(st.m1[:K, :K] + hp.lambda1, st.m0[:K, :K] + hp.lambda2)
        e = (self.rng.random(st.n_pairs) < B[st.s, st.r]).astype(np.int8)
        st.e[:] = e
        _, _, st.m1, st.m0 = st.recount()
        return e

    def pair_conditional(self, p):
        """Normalized (s, r) conditional of pair ``p`` given the rest of the state.

        The pi variant uses the rectangle table; the uv variant conditions on
        the pair's current (u, v), except for independent pairs where (u, v)
        is integrated out.  Finite mode only; the state is left unchanged.
        """
        st, hp = self.state, self.cfg.hyper
        if st.hdp:
            raise DomainError("pair_conditional is defined in finite mode")
        K = st.K
        k0, l0 = int(st.s[p]), int(st.r[p])
        _remove(p, st.pairs, st.e, st.s, st.r, st.N, st.Nk, st.m1, st.m0)
        try:
            i, j = st.pairs[p]
            d = self.g[p]
            if self.cfg.variant == "pi":
                table = np.empty((K, K))
                status = _rect_table(self.fam[d], self.theta[d], st.pi[i], st.pi[j], K,
                                     np.empty(K + 1), np.empty(K + 1),
                                     np.empty((K + 1, K + 1)), table)
            else:
                wi = hp.alpha * st.beta[:K] + st.N[i, :K]
                wj = hp.alpha * st.beta[:K] + st.N[j, :K]
                Pi, Pj = wi / wi.sum(), wj / wj.sum()
                status = OK
                if self.fam[d] != INDEPENDENCE:
                    status = max(_interval_probs(st.u[p], wi, K, Pi),
                                 _interval_probs(st.v[p], wj, K, Pj))
                table = np.outer(Pi, Pj)
            self._raise_status(status)
            m1 = st.m1[:K, :K]
            m0 = st.m0[:K, :K]
            q = (m1 + hp.lambda1) / (m1 + m0 + hp.lambda1 + hp.lambda2)
            w = table * (q if st.e[p] == 1 else 1.0 - q)
            return w / w.sum()
        finally:
            _add(p, k0, l0, st.pairs, st.e, st.s, st.r, st.N, st.Nk, st.m1, st.m0)

    def occupied(self):
        return int((self.state.Nk[: self.state.K] > 0).sum())

    def run(self, iterations=None, callback=None):
        """Run the chain and return its :class:`Trace`."""
        cfg, st = self.cfg, self.state
        iters = cfg.iterations if iterations is None else iterations
        burn = int(iters * cfg.burn_in_fraction)
        D = len(self.specs) - 1
        Ks = np.zeros(iters, dtype=np.int64)
        occ = np.zeros(iters, dtype=np.int64)
        thetas = np.zeros((iters, D))
        ll = np.zeros(iters)
        pred = np.zeros((st.n, st.n))
        for t in range(iters):
            self.sweep()
            Ks[t] = st.K
            occ[t] = self.occupied()
            thetas[t] = self.theta[1:]
            ll[t] = _edge_loglik(st.m1, st.m0, st.K, cfg.hyper.lambda1, cfg.hyper.lambda2)
            if t >= burn:
                self.accumulate_predictive(pred)
            if callback is not None:
                callback(t, self)
        np.fill_diagonal(pred, np.nan)
        return Trace(K=Ks, occupied=occ, theta=thetas, loglik=ll, pred_sum=pred,
                     n_samples=iters - burn, burn_in=burn,
                     accept={k: tuple(v) for k, v in self.accept.items()})


def run_chain(data, subgroups, cfg, rng=None):
    """Run one seeded chain on the observed entries of ``data``."""
    return Sampler(data, subgroups, cfg, rng=rng).run()
