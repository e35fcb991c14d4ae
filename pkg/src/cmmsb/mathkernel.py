"""Special functions and seeded random variates.

Every sampler takes an explicit ``numpy.random.Generator`` so that the same
functions run unchanged inside numba-compiled sweeps and from plain Python.
"""
import math

import numpy as np
from numba import njit

__all__ = [
    "DomainError",
    "rng_stream",
    "ln_gamma",
    "ln_beta",
    "reg_inc_beta",
    "sample_gamma",
    "sample_beta",
    "sample_dirichlet",
]

# smallest positive normal double; floor for simplex entries so logs stay finite
TINY = 2.2250738585072014e-308


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


def rng_stream(seed, stream_id=0):
    """Return a PCG64 generator for ``(seed, stream_id)``.

    Distinct stream ids yield statistically independent sequences; identical
    pairs yield bit-identical ones.
    """
    if seed < 0 or seed >= 2**64:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


def _check_positive(name, x):
    if not (math.isfinite(x) and x > 0):
        raise DomainError(f"{name} must be positive and finite, got {x}")


def ln_gamma(x):
    """log Gamma(x) for x > 0."""
    _check_positive("x", x)
    return math.lgamma(x)


@njit(cache=True)
def _ln_beta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def ln_beta(a, b):
    """log B(a, b) = lnG(a) + lnG(b) - lnG(a+b)."""
    _check_positive("a", a)
    _check_positive("b", b)
    return _ln_beta(a, b)


@njit(cache=True)
def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    fpmin = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, 5001):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


@njit(cache=True)
def _betainc(x, a, b):
    """Regularized incomplete beta I_x(a, b); no argument checking."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _betacf(b, a, 1.0 - x) / b


def reg_inc_beta(u, a, b):
    """Regularized incomplete beta function I_u(a, b), the Beta(a, b) CDF at u."""
    _check_positive("a", a)
    _check_positive("b", b)
    if not (0.0 <= u <= 1.0):
        raise DomainError(f"u must lie in [0, 1], got {u}")
    return _betainc(float(u), float(a), float(b))


@njit(cache=True)
def _log_gamma_variate(shape, rng):
    # Marsaglia-Tsang squeeze; shapes below one are boosted by U^(1/shape),
    # applied in log space so tiny shapes do not underflow to zero
    boost = 0.0
    if shape < 1.0:
        boost = math.log(rng.random()) / shape
        shape += 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = rng.standard_normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        uu = rng.random()
        if uu < 1.0 - 0.0331 * x * x * x * x:
            return math.log(d * v) + boost
        if math.log(uu) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return math.log(d * v) + boost


@njit(cache=True)
def _sample_gamma(shape, rng):
    return math.exp(_log_gamma_variate(shape, rng))


@njit(cache=True)
def _sample_beta(a, b, rng):
    la = _log_gamma_variate(a, rng)
    lb = _log_gamma_variate(b, rng)
    # 1 / (1 + exp(lb - la)) without overflow
    t = lb - la
    if t > 0:
        e = math.exp(-t)
        x = e / (1.0 + e)
    else:
        x = 1.0 / (1.0 + math.exp(t))
    return min(max(x, TINY), 1.0 - 1e-16)


@njit(cache=True)
def _sample_dirichlet(weights, rng):
    """Dirichlet draw; zero weights give exact zeros (degenerate components)."""
    k = weights.shape[0]
    logs = np.empty(k)
    top = -np.inf
    for q in range(k):
        if weights[q] > 0.0:
            logs[q] = _log_gamma_variate(weights[q], rng)
            if logs[q] > top:
                top = logs[q]
        else:
            logs[q] = -np.inf
    out = np.zeros(k)
    total = 0.0
    for q in range(k):
        if weights[q] > 0.0:
            out[q] = max(math.exp(logs[q] - top), TINY)
            total += out[q]
    for q in range(k):
        out[q] /= total
    return out


def sample_gamma(shape, rng):
    """Gamma(shape, 1) variate."""
    _check_positive("shape", shape)
    return _sample_gamma(float(shape), rng)


def sample_beta(a, b, rng):
    """Beta(a, b) variate in (0, 1)."""
    _check_positive("a", a)
    _check_positive("b", b)
    return _sample_beta(float(a), float(b), rng)


def sample_dirichlet(weights, rng):
    """Dirichlet(weights) draw on the simplex."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise DomainError("weights must be a non-empty vector")
    for x in w:
        _check_positive("weight", float(x))
    return _sample_dirichlet(w, rng)
