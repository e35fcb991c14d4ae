"""Bivariate copulas coupling a pair of membership indicators.

Three families are supported: independence, Gumbel (theta >= 1, upper-tail
dependence) and Gaussian (correlation theta in (-1, 1)).  The numba kernels
take an integer family code and a float parameter so they can be called from
compiled sweeps; :class:`CopulaSpec` is the user-facing description.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .mathkernel import DomainError

INDEPENDENCE = 0
GUMBEL = 1
GAUSSIAN = 2

FAMILIES = {"independence": INDEPENDENCE, "gumbel": GUMBEL, "gaussian": GAUSSIAN}

# rectangle masses more negative than this are a bug, not round-off
NEG_TOL = 1e-12


class NumericalError(ArithmeticError):
    """A quantity that must be nonnegative came out clearly negative."""


@dataclass
class CopulaSpec:
    """Copula family, current parameter, prior and proposal settings.

    Parameters
    ----------
    family : str
        ``"independence"``, ``"gumbel"`` or ``"gaussian"``.
    theta : float or None
        Gumbel theta >= 1, Gaussian correlation in (-1, 1); must be None for
        the independence family.
    prior : dict
        Gumbel: ``{"rate": r}``, theta - 1 ~ Exponential(r).  Gaussian:
        ``{"low": a, "high": b}``, theta ~ Uniform(a, b) within (-1, 1).
    proposal_scale : float
        Random-walk step on the unconstrained transform of theta.
    fixed : bool
        Hold theta constant during sampling.
    """

    family: str
    theta: float = None
    prior: dict = field(default_factory=dict)
    proposal_scale: float = 0.3
    fixed: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown copula family {self.family!r}")
        if self.family == "independence":
            if self.theta is not None:
                raise DomainError("independence copula takes no theta")
            self.fixed = True
        elif self.theta is None:
            raise DomainError(f"{self.family} copula requires theta")
        else:
            self.theta = float(self.theta)
        if self.proposal_scale < 0:
            raise DomainError("proposal_scale must be nonnegative")
        if self.family == "gumbel":
            self.prior = {"rate": 0.5, **self.prior}
            if not self.prior["rate"] > 0:
                raise DomainError("gumbel prior rate must be positive")
            if not self.theta >= 1.0:
                raise DomainError(f"gumbel theta must be >= 1, got {self.theta}")
            if not self.fixed and self.theta == 1.0:
                # log(theta - 1) walk cannot leave the boundary
                raise DomainError("a sampled gumbel theta must start above 1")
        elif self.family == "gaussian":
            self.prior = {"low": -1.0, "high": 1.0, **self.prior}
            lo, hi = self.prior["low"], self.prior["high"]
            if not -1.0 <= lo < hi <= 1.0:
                raise DomainError("gaussian prior bounds must satisfy -1 <= low < high <= 1")
            if not -1.0 < self.theta < 1.0:
                raise DomainError(f"gaussian theta must lie in (-1, 1), got {self.theta}")

    @property
    def code(self):
        return FAMILIES[self.family]

    @property
    def theta_value(self):
        return 1.0 if self.theta is None else self.theta

    def with_theta(self, theta):
        return CopulaSpec(self.family, theta, dict(self.prior), self.proposal_scale, self.fixed)

    def to_dict(self):
        return {
            "family": self.family,
            "theta": self.theta,
            "prior": dict(self.prior),
            "proposal_scale": self.proposal_scale,
            "fixed": self.fixed,
        }


# ---------------------------------------------------------------------------
# normal distribution helpers

@njit(cache=True)
def _norm_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@njit(cache=True)
def _ndtri(p):
    # Wichura AS241 (PPND16) followed by one Newton step
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r
                    + 67265.770927008700853) * r + 45921.953931549871457) * r
                  + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608)
        den = (((((((r * 5226.495278852545925 + 28729.085735721942674) * r
                    + 39307.89580009271061) * r + 21213.794301586595867) * r
                  + 5394.1960214247511077) * r + 687.1870074920579083) * r
                + 42.313330701600911252) * r + 1.0)
        x = q * num / den
    else:
        r = p if q < 0 else 1.0 - p
        r = math.sqrt(-math.log(r))
        if r <= 5.0:
            r -= 1.6
            num = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r
                        + 0.24178072517745061177) * r + 1.27045825245236838258) * r
                      + 3.64784832476320460504) * r + 5.7694972214606914055) * r
                    + 4.6303378461565452959) * r + 1.42343711074968357734)
            den = (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r
                        + 0.0151986665636164571966) * r + 0.14810397642748007459) * r
                      + 0.68976733498510000455) * r + 1.6763848301838038494) * r
                    + 2.05319162663775882187) * r + 1.0)
        else:
            r -= 5.0
            num = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r
                        + 0.0012426609473880784386) * r + 0.026532189526576123093) * r
                      + 0.29656057182850489123) * r + 1.7848265399172913358) * r
                    + 5.4637849111641143699) * r + 6.6579046435011037772)
            den = (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r
                        + 1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r
                      + 0.0148753612908506148525) * r + 0.13692988092273580531) * r
                    + 0.59983220655588793769) * r + 1.0)
        x = num / den
        if q < 0:
            x = -x
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    if pdf > 0:
        x -= (_norm_cdf(x) - p) / pdf
    return x


_GL_W6 = np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904])
_GL_X6 = np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970])
_GL_W12 = np.array([0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                    0.2031674267230659, 0.2334925365383547, 0.2491470458134029])
_GL_X12 = np.array([0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                    0.5873179542866171, 0.3678314989981802, 0.1252334085114692])
_GL_W20 = np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                    0.1527533871307259])
_GL_X20 = np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                    0.07652652113349733])


@njit(cache=True)
def _bvnu(dh, dk, r):
    """P(X > dh, Y > dk) for a standard bivariate normal with correlation r.

    Drezner-Wesolowsky quadrature as refined by Genz (2004).
    """
    if r == 0.0:
        return _norm_cdf(-dh) * _norm_cdf(-dk)
    tp = 2.0 * math.pi
    h = dh
    k = dk
    hk = h * k
    bvn = 0.0
    ar = abs(r)
    if ar < 0.3:
        w = _GL_W6
        xg = _GL_X6
    elif ar < 0.75:
        w = _GL_W12
        xg = _GL_X12
    else:
        w = _GL_W20
        xg = _GL_X20
    ng = w.shape[0]
    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r) / 2.0
        for q in range(ng):
            for sgn in (-1.0, 1.0):
                sn = math.sin(asr * (1.0 + sgn * xg[q]))
                bvn += w[q] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / tp + _norm_cdf(-h) * _norm_cdf(-k)
    else:
        if r < 0:
            k = -k
            hk = -hk
        if ar < 1.0:
            as_ = 1.0 - r * r
            a = math.sqrt(as_)
            bs = (h - k) ** 2
            asr = -(bs / as_ + hk) / 2.0
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 80.0
            if asr > -100.0:
                bvn = a * math.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0
                                           + c * d * as_ * as_)
            if hk > -100.0:
                b = math.sqrt(bs)
                sp = math.sqrt(tp) * _norm_cdf(-b / a)
                bvn = bvn - math.exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
            a = a / 2.0
            tot = 0.0
            for q in range(ng):
                for sgn in (-1.0, 1.0):
                    xs = (a * (1.0 + sgn * xg[q])) ** 2
                    asr = -(bs / xs + hk) / 2.0
                    if asr > -100.0:
                        sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs)
                        rs = math.sqrt(1.0 - xs)
                        ep = math.exp(-(hk / 2.0) * xs / (1.0 + rs) ** 2) / rs
                        tot += w[q] * math.exp(asr) * (sp - ep)
            bvn = (a * tot - bvn) / tp
        if r > 0:
            bvn = bvn + _norm_cdf(-max(h, k))
        elif h >= k:
            bvn = -bvn
        else:
            if h < 0:
                lo = _norm_cdf(k) - _norm_cdf(h)
            else:
                lo = _norm_cdf(-h) - _norm_cdf(-k)
            bvn = lo - bvn
    return min(max(bvn, 0.0), 1.0)


# ---------------------------------------------------------------------------
# copula kernels

@njit(cache=True)
def _gumbel_a(x, y, theta):
    # ((x^theta + y^theta))^(1/theta) for x, y >= 0 without overflow
    m = max(x, y)
    if m == 0.0:
        return 0.0
    lo = min(x, y)
    return m * (1.0 + (lo / m) ** theta) ** (1.0 / theta)


@njit(cache=True)
def _cdf(fam, theta, u, v):
    if u <= 0.0 or v <= 0.0:
        return 0.0
    if u >= 1.0:
        return min(v, 1.0)
    if v >= 1.0:
        return u
    if fam == INDEPENDENCE:
        return u * v
    if fam == GUMBEL:
        if theta == 1.0:
            return u * v
        return math.exp(-_gumbel_a(-math.log(u), -math.log(v), theta))
    return _bvnu(-_ndtri(u), -_ndtri(v), theta)


@njit(cache=True)
def _rect(fam, theta, ulo, uhi, vlo, vhi):
    if fam == INDEPENDENCE:
        return (uhi - ulo) * (vhi - vlo)
    return (_cdf(fam, theta, uhi, vhi) + _cdf(fam, theta, ulo, vlo)
            - _cdf(fam, theta, uhi, vlo) - _cdf(fam, theta, ulo, vhi))


@njit(cache=True)
def _log_density(fam, theta, u, v):
    if fam == INDEPENDENCE:
        return 0.0
    if fam == GUMBEL:
        if theta == 1.0:
            return 0.0
        x = -math.log(u)
        y = -math.log(v)
        a = _gumbel_a(x, y, theta)
        # c = C (xy)^(t-1) / (uv) * S^(1/t - 2) * (A + t - 1),  S = A^t
        return (-a + (theta - 1.0) * (math.log(x) + math.log(y)) + x + y
                + (1.0 - 2.0 * theta) * math.log(a) + math.log(a + theta - 1.0))
    zx = _ndtri(u)
    zy = _ndtri(v)
    one = 1.0 - theta * theta
    return (-(theta * theta * (zx * zx + zy * zy) - 2.0 * theta * zx * zy) / (2.0 * one)
            - 0.5 * math.log(one))


@njit(cache=True)
def _positive_stable(alpha, rng):
    # Kanter's representation: Laplace transform exp(-t^alpha), 0 < alpha < 1
    w = rng.standard_exponential()
    ang = math.pi * rng.random()
    while ang == 0.0:
        ang = math.pi * rng.random()
    return (math.sin(alpha * ang) / math.sin(ang) ** (1.0 / alpha)
            * (math.sin((1.0 - alpha) * ang) / w) ** ((1.0 - alpha) / alpha))


@njit(cache=True)
def _sample_pair(fam, theta, rng):
    while True:
        if fam == INDEPENDENCE or (fam == GUMBEL and theta == 1.0):
            u = rng.random()
            v = rng.random()
        elif fam == GUMBEL:
            # Marshall-Olkin: frailty V ~ stable(1/theta), u = psi(E/V)
            alpha = 1.0 / theta
            vv = _positive_stable(alpha, rng)
            u = math.exp(-(rng.standard_exponential() / vv) ** alpha)
            v = math.exp(-(rng.standard_exponential() / vv) ** alpha)
        else:
            z1 = rng.standard_normal()
            z2 = theta * z1 + math.sqrt(1.0 - theta * theta) * rng.standard_normal()
            u = _norm_cdf(z1)
            v = _norm_cdf(z2)
        if 0.0 < u < 1.0 and 0.0 < v < 1.0:
            return u, v


# ---------------------------------------------------------------------------
# public API

def _check_unit(name, x):
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {x}")


def copula_cdf(spec, u, v):
    """C(u, v) for the copula described by ``spec``."""
    _check_unit("u", u)
    _check_unit("v", v)
    return _cdf(spec.code, spec.theta_value, float(u), float(v))


def copula_log_density(spec, u, v):
    """log c(u, v) for interior points."""
    if not (0.0 < u < 1.0 and 0.0 < v < 1.0):
        raise DomainError("density is evaluated on the open unit square")
    return _log_density(spec.code, spec.theta_value, float(u), float(v))


def rectangle_mass(spec, u_lo, u_hi, v_lo, v_hi):
    """Copula probability of the rectangle [u_lo, u_hi] x [v_lo, v_hi]."""
    for name, x in (("u_lo", u_lo), ("u_hi", u_hi), ("v_lo", v_lo), ("v_hi", v_hi)):
        _check_unit(name, x)
    if u_lo > u_hi or v_lo > v_hi:
        raise DomainError("rectangle bounds are inverted")
    m = _rect(spec.code, spec.theta_value, float(u_lo), float(u_hi), float(v_lo), float(v_hi))
    if m < -NEG_TOL:
        raise NumericalError(f"negative rectangle mass {m:.3e}")
    return min(max(m, 0.0), 1.0)


def sample_pair(spec, rng):
    """One (u, v) draw from the copula, both coordinates in (0, 1)."""
    return _sample_pair(spec.code, spec.theta_value, rng)


def sample_pairs(spec, size, rng):
    out = np.empty((size, 2))
    for t in range(size):
        out[t] = _sample_pair(spec.code, spec.theta_value, rng)
    return out


# ---------------------------------------------------------------------------
# parameter prior and random-walk proposal

@njit(cache=True)
def _to_free(fam, theta):
    if fam == GUMBEL:
        return math.log(theta - 1.0) if theta > 1.0 else -np.inf
    return math.atanh(theta)


@njit(cache=True)
def _from_free(fam, phi):
    if fam == GUMBEL:
        return 1.0 + math.exp(phi)
    return math.tanh(phi)


@njit(cache=True)
def _log_prior(fam, theta, p0, p1):
    """Log prior; for Gumbel p0 is the exponential rate, for Gaussian (p0, p1) the bounds."""
    if fam == INDEPENDENCE:
        return 0.0
    if fam == GUMBEL:
        if theta < 1.0:
            return -np.inf
        return math.log(p0) - p0 * (theta - 1.0)
    if not (p0 < theta < p1):
        return -np.inf
    return -math.log(p1 - p0)


@njit(cache=True)
def _log_jacobian(fam, theta):
    # log |d theta / d phi| of the unconstrained transform
    if fam == GUMBEL:
        return math.log(theta - 1.0)
    return math.log(1.0 - theta * theta)


def prior_params(spec):
    if spec.family == "gumbel":
        return float(spec.prior["rate"]), 0.0
    if spec.family == "gaussian":
        return float(spec.prior["low"]), float(spec.prior["high"])
    return 0.0, 0.0


def theta_log_prior(spec, theta):
    """Log prior density of ``theta``; -inf outside the family domain."""
    if spec.family == "independence":
        return 0.0
    p0, p1 = prior_params(spec)
    return _log_prior(spec.code, float(theta), p0, p1)


def propose_theta(spec, current_theta, rng):
    """Symmetric random walk on log(theta - 1) (Gumbel) or atanh(theta) (Gaussian)."""
    if spec.family == "independence":
        return None
    phi = _to_free(spec.code, float(current_theta))
    return _from_free(spec.code, phi + spec.proposal_scale * rng.standard_normal())


def sample_theta_prior(spec, rng):
    """Draw theta from its prior."""
    if spec.family == "gumbel":
        return 1.0 + rng.exponential(1.0 / spec.prior["rate"])
    if spec.family == "gaussian":
        return rng.uniform(spec.prior["low"], spec.prior["high"])
    return None
