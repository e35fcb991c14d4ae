"""Observed network, subgroup labels and the shared sampler state.

Communities are indexed from 0.  With ``K`` instantiated communities the
membership intervals are ``0..K-1`` in finite mode and ``0..K`` in hdp mode,
where index ``K`` is the remainder mass of all not-yet-seen communities.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

from .mathkernel import DomainError, TINY, _ln_beta, _sample_beta

MISSING = -1
MODES = ("finite", "hdp")
MODE_ALIASES = {"finite": "finite", "finiteK": "finite", "hdp": "hdp"}


class ConsistencyError(RuntimeError):
    """Sampler bookkeeping violated one of its invariants."""


@dataclass
class Hyperparams:
    """Concentrations alpha (node level) and gamma (global), Beta prior (lambda1, lambda2)."""

    alpha: float = 1.0
    gamma: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "gamma", "lambda1", "lambda2"):
            x = float(getattr(self, name))
            if not (np.isfinite(x) and x > 0):
                raise DomainError(f"{name} must be positive, got {x}")
            setattr(self, name, x)


class InteractionMatrix:
    """Directed binary observations ``e[i, j]``; ``-1`` marks a missing entry.

    The diagonal is always missing.
    """

    def __init__(self, values):
        e = np.array(values, dtype=np.int8)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise DomainError("interaction matrix must be square")
        if not np.isin(e, (MISSING, 0, 1)).all():
            raise DomainError("entries must be 0, 1 or missing (-1)")
        np.fill_diagonal(e, MISSING)
        self.values = e

    @property
    def n(self):
        return self.values.shape[0]

    @classmethod
    def from_entries(cls, n, i, j, e, symmetric=False):
        vals = np.full((n, n), MISSING, dtype=np.int8)
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        e = np.asarray(e, dtype=np.int8)
        vals[i, j] = e
        if symmetric:
            vals[j, i] = e
        return cls(vals)

    def observed_mask(self):
        return self.values != MISSING

    def observed_pairs(self):
        """Row-major ``(pairs, e)`` of all observed off-diagonal entries."""
        i, j = np.nonzero(self.observed_mask())
        pairs = np.stack([i, j], axis=1).astype(np.int64)
        return pairs, self.values[i, j].astype(np.int8)

    def without(self, mask):
        """Copy with the entries selected by ``mask`` set missing."""
        vals = self.values.copy()
        vals[np.asarray(mask, dtype=bool)] = MISSING
        return InteractionMatrix(vals)

    def __eq__(self, other):
        return isinstance(other, InteractionMatrix) and np.array_equal(self.values, other.values)


class SubgroupMap:
    """Per ordered pair subgroup label: 0 = independent, d >= 1 = copula d."""

    def __init__(self, labels, D=None):
        g = np.array(labels, dtype=np.int64)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise DomainError("subgroup map must be square")
        if (g < 0).any():
            raise DomainError("subgroup labels must be nonnegative")
        top = int(g.max()) if g.size else 0
        self.D = top if D is None else int(D)
        if top > self.D:
            raise DomainError(f"label {top} exceeds declared subgroup count {self.D}")
        self.labels = g

    @property
    def n(self):
        return self.labels.shape[0]

    @classmethod
    def independent(cls, n):
        return cls(np.zeros((n, n), dtype=np.int64), D=0)

    @classmethod
    def full(cls, n, d=1):
        g = np.full((n, n), d, dtype=np.int64)
        np.fill_diagonal(g, 0)
        return cls(g)

    @classmethod
    def block(cls, n, members, inside=1, outside=2):
        """Pairs with both endpoints in ``members`` get ``inside``, the rest ``outside``."""
        g = np.full((n, n), outside, dtype=np.int64)
        idx = np.asarray(members, dtype=np.int64)
        g[np.ix_(idx, idx)] = inside
        np.fill_diagonal(g, 0)
        return cls(g, D=max(inside, outside))

    def labels_for(self, pairs):
        return self.labels[pairs[:, 0], pairs[:, 1]]

    def __eq__(self, other):
        return (isinstance(other, SubgroupMap) and self.D == other.D
                and np.array_equal(self.labels, other.labels))


# ---------------------------------------------------------------------------
# count kernels

@njit(cache=True)
def _add(p, k, l, pairs, e, s, r, N, Nk, m1, m0):
    i = pairs[p, 0]
    j = pairs[p, 1]
    s[p] = k
    r[p] = l
    N[i, k] += 1
    N[j, l] += 1
    Nk[k] += 1
    Nk[l] += 1
    if e[p] == 1:
        m1[k, l] += 1
    else:
        m0[k, l] += 1


@njit(cache=True)
def _remove(p, pairs, e, s, r, N, Nk, m1, m0):
    k = s[p]
    l = r[p]
    if k < 0:
        return False
    i = pairs[p, 0]
    j = pairs[p, 1]
    N[i, k] -= 1
    N[j, l] -= 1
    Nk[k] -= 1
    Nk[l] -= 1
    if e[p] == 1:
        m1[k, l] -= 1
    else:
        m0[k, l] -= 1
    s[p] = -1
    r[p] = -1
    return True


@njit(cache=True)
def _compact(k, K, N, Nk, m1, m0, s, r, beta, pi):
    """Drop empty community ``k``; its weight joins the remainder. Returns new K."""
    n = N.shape[0]
    for c in range(k, K - 1):
        Nk[c] = Nk[c + 1]
        for i in range(n):
            N[i, c] = N[i, c + 1]
    Nk[K - 1] = 0
    for i in range(n):
        N[i, K - 1] = 0
    for a in range(k, K - 1):
        for b in range(K):
            m1[a, b] = m1[a + 1, b]
            m0[a, b] = m0[a + 1, b]
    for b in range(K):
        m1[K - 1, b] = 0
        m0[K - 1, b] = 0
    for b in range(k, K - 1):
        for a in range(K):
            m1[a, b] = m1[a, b + 1]
            m0[a, b] = m0[a, b + 1]
    for a in range(K):
        m1[a, K - 1] = 0
        m0[a, K - 1] = 0
    for p in range(s.shape[0]):
        if s[p] > k:
            s[p] -= 1
        if r[p] > k:
            r[p] -= 1
    freed = beta[k]
    for c in range(k, K):
        beta[c] = beta[c + 1]
    beta[K] = 0.0
    beta[K - 1] += freed
    for i in range(pi.shape[0]):
        freed = pi[i, k]
        for c in range(k, K):
            pi[i, c] = pi[i, c + 1]
        pi[i, K] = 0.0
        pi[i, K - 1] += freed
    return K - 1


@njit(cache=True)
def _instantiate(K, beta, pi, alpha, gamma, rng):
    """Split the remainder interval into a new community K and a new remainder."""
    rem = beta[K]
    b = _sample_beta(1.0, gamma, rng)
    beta[K] = max(b * rem, TINY)
    beta[K + 1] = max((1.0 - b) * rem, TINY)
    for i in range(pi.shape[0]):
        c = _sample_beta(alpha * beta[K], alpha * beta[K + 1], rng)
        pr = pi[i, K]
        pi[i, K] = max(c * pr, TINY)
        pi[i, K + 1] = max((1.0 - c) * pr, TINY)
    return K + 1


@njit(cache=True)
def _edge_loglik(m1, m0, K, lam1, lam2):
    base = _ln_beta(lam1, lam2)
    tot = 0.0
    for k in range(K):
        for l in range(K):
            if m1[k, l] + m0[k, l] > 0:
                tot += _ln_beta(m1[k, l] + lam1, m0[k, l] + lam2) - base
    return tot


@njit(cache=True)
def _predictive(m1, m0, k, l, K, lam1, lam2):
    if k >= K or l >= K:
        return lam1 / (lam1 + lam2)
    return (m1[k, l] + lam1) / (m1[k, l] + m0[k, l] + lam1 + lam2)


@njit(cache=True)
def _stick_invert(pi, L, u):
    acc = 0.0
    last = 0
    for k in range(L):
        if pi[k] > 0.0:
            last = k
        acc += pi[k]
        if acc >= u and pi[k] > 0.0:
            return k
    return last


def stick_invert(pi, u):
    """0-based index of the interval of ``pi`` containing ``u``: min k with cumsum >= u."""
    pi = np.asarray(pi, dtype=np.float64)
    if abs(pi.sum() - 1.0) > 1e-12 or (pi < 0).any():
        raise DomainError("pi must be a probability vector")
    if not (0.0 <= u <= 1.0):
        raise DomainError(f"u must lie in [0, 1], got {u}")
    return int(_stick_invert(pi, pi.shape[0], float(u)))


# ---------------------------------------------------------------------------

class ModelState:
    """Indicators, counts and weights of one chain.

    ``N[i, k]`` counts how often node ``i`` took community ``k`` as sender or
    receiver; ``m1[k, l]`` / ``m0[k, l]`` count observed ones / zeros with
    sender community ``k`` and receiver community ``l``.  ``beta`` and ``pi``
    hold interval weights (``pi`` only for the pi-explicit sampler).
    """

    def __init__(self, n, pairs, e, K, mode, hp, capacity=None, with_pi=False):
        if mode not in MODE_ALIASES:
            raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
        mode = MODE_ALIASES[mode]
        if K < 1 and mode == "finite":
            raise DomainError("finite mode needs K >= 1")
        self.n = int(n)
        self.pairs = np.ascontiguousarray(pairs, dtype=np.int64).reshape(-1, 2)
        self.e = np.ascontiguousarray(e, dtype=np.int8)
        self.mode = mode
        self.hp = hp
        self.K = int(K)
        cap = max(int(capacity or 0), self.K + 2, 8)
        P = self.pairs.shape[0]
        self.s = np.full(P, -1, dtype=np.int64)
        self.r = np.full(P, -1, dtype=np.int64)
        self.N = np.zeros((self.n, cap), dtype=np.int64)
        self.Nk = np.zeros(cap, dtype=np.int64)
        self.m1 = np.zeros((cap, cap), dtype=np.int64)
        self.m0 = np.zeros((cap, cap), dtype=np.int64)
        self.beta = np.zeros(cap + 1)
        self.pi = np.zeros((self.n if with_pi else 0, cap + 1))

    @property
    def hdp(self):
        return self.mode == "hdp"

    @property
    def capacity(self):
        return self.Nk.shape[0]

    @property
    def n_intervals(self):
        return self.K + (1 if self.hdp else 0)

    @property
    def n_pairs(self):
        return self.pairs.shape[0]

    def ensure_capacity(self, needed):
        cap = self.capacity
        if needed <= cap:
            return
        new = max(needed, 2 * cap)
        self.N = np.pad(self.N, ((0, 0), (0, new - cap)))
        self.Nk = np.pad(self.Nk, (0, new - cap))
        self.m1 = np.pad(self.m1, ((0, new - cap), (0, new - cap)))
        self.m0 = np.pad(self.m0, ((0, new - cap), (0, new - cap)))
        self.beta = np.pad(self.beta, (0, new - cap))
        self.pi = np.pad(self.pi, ((0, 0), (0, new - cap)))

    # -- bookkeeping -----------------------------------------------------

    def instantiate(self, rng):
        """Open a new community by splitting the remainder interval (hdp only)."""
        if not self.hdp:
            raise ConsistencyError("finite mode cannot grow K")
        self.ensure_capacity(self.K + 2)
        self.K = int(_instantiate(self.K, self.beta, self.pi, self.hp.alpha, self.hp.gamma, rng))

    def add_pair(self, p, k, l, rng=None):
        """Assign pair ``p`` to cell ``(k, l)``; index ``K`` opens a new community."""
        if self.s[p] >= 0:
            raise ConsistencyError(f"pair {p} is already assigned")
        top = self.K + (1 if self.hdp else 0)
        if not (0 <= k < top and 0 <= l < top):
            raise ConsistencyError(f"cell ({k}, {l}) out of range for K={self.K}")
        if k == self.K or l == self.K:
            if rng is None:
                raise ConsistencyError("opening a community needs an rng")
            new = self.K
            self.instantiate(rng)
            k = new if k == new else k
            l = new if l == new else l
        _add(p, k, l, self.pairs, self.e, self.s, self.r, self.N, self.Nk, self.m1, self.m0)

    def remove_pair(self, p):
        """Unassign pair ``p``; in hdp mode emptied communities are compacted away."""
        k, l = int(self.s[p]), int(self.r[p])
        if not _remove(p, self.pairs, self.e, self.s, self.r, self.N, self.Nk, self.m1, self.m0):
            raise ConsistencyError(f"pair {p} is not assigned")
        if self.hdp:
            if self.Nk[k] == 0:
                self.K = int(_compact(k, self.K, self.N, self.Nk, self.m1, self.m0,
                                      self.s, self.r, self.beta, self.pi))
                if l > k:
                    l -= 1
                elif l == k:
                    return
            if self.Nk[l] == 0:
                self.K = int(_compact(l, self.K, self.N, self.Nk, self.m1, self.m0,
                                      self.s, self.r, self.beta, self.pi))

    def recount(self):
        """Recompute all counts from the indicator arrays."""
        N = np.zeros_like(self.N)
        Nk = np.zeros_like(self.Nk)
        m1 = np.zeros_like(self.m1)
        m0 = np.zeros_like(self.m0)
        ok = self.s >= 0
        i, j = self.pairs[ok, 0], self.pairs[ok, 1]
        k, l = self.s[ok], self.r[ok]
        np.add.at(N, (i, k), 1)
        np.add.at(N, (j, l), 1)
        np.add.at(Nk, k, 1)
        np.add.at(Nk, l, 1)
        np.add.at(m1, (k, l), self.e[ok] == 1)
        np.add.at(m0, (k, l), self.e[ok] == 0)
        return N, Nk, m1, m0

    def check_consistency(self):
        """Raise ConsistencyError unless incremental counts equal a full recount."""
        N, Nk, m1, m0 = self.recount()
        for name, a, b in (("N", self.N, N), ("Nk", self.Nk, Nk),
                           ("m1", self.m1, m1), ("m0", self.m0, m0)):
            if not np.array_equal(a, b):
                raise ConsistencyError(f"incremental {name} differs from recount")
        if (self.s >= self.K).any() or (self.r >= self.K).any():
            raise ConsistencyError("indicator refers to an uninstantiated community")
        if self.hdp and (self.Nk[: self.K] == 0).any():
            raise ConsistencyError("empty community was not compacted")
        L = self.n_intervals
        if abs(self.beta[:L].sum() - 1.0) > 1e-9 or (self.beta[L:] != 0).any():
            raise ConsistencyError("beta is not a probability vector over the live intervals")
        if self.pi.shape[0]:
            if np.abs(self.pi[:, :L].sum(axis=1) - 1.0).max() > 1e-9:
                raise ConsistencyError("pi rows do not sum to one")

    # -- likelihood ------------------------------------------------------

    def edge_loglik(self):
        return collapsed_edge_loglik(self.m1, self.m0, self.K, self.hp)

    def predictive(self, k, l):
        return predictive_edge_prob(self.m1, self.m0, self.hp, k, l, self.K)


def collapsed_edge_loglik(m1, m0, K, hp):
    """Beta-Bernoulli marginal likelihood sum_{k,l} ln B(m1+l1, m0+l2) - ln B(l1, l2)."""
    return float(_edge_loglik(np.asarray(m1, dtype=np.int64), np.asarray(m0, dtype=np.int64),
                              int(K), hp.lambda1, hp.lambda2))


def predictive_edge_prob(m1, m0, hp, k, l, K=None, exclude=None):
    """Posterior mean of B_kl, optionally with one observation ``exclude=e`` removed.

    Cells at or beyond ``K`` are unseen communities and get the prior mean.
    """
    if K is None:
        K = np.asarray(m1).shape[0]
    if k >= K or l >= K:
        return hp.lambda1 / (hp.lambda1 + hp.lambda2)
    a = float(m1[k, l])
    b = float(m0[k, l])
    if exclude is not None:
        if exclude == 1:
            a -= 1
        else:
            b -= 1
        if a < 0 or b < 0:
            raise ConsistencyError("excluded observation is not counted in this cell")
    return (a + hp.lambda1) / (a + b + hp.lambda1 + hp.lambda2)
