"""Marginal distribution families for the transformed field.

Each family maps a linear predictor ``eta = x'beta``, a dispersion ``nu``
and (for the two Gaussian-based families) the CAR marginal variance
``sigma2`` to a continuous distribution on (0, inf) or (0, 1):

=============  =====================================  =========
kind           distribution                            support
=============  =====================================  =========
``ln``         LogNormal(eta, nu * sigma2)             (0, inf)
``ln2``        LogNormal(eta, nu)                      (0, inf)
``gsc``        Gamma(shape 1/nu, scale nu * e^eta)     (0, inf)
``gsh``        Gamma(shape e^eta / nu, scale nu)       (0, inf)
``beta-logit`` Beta(nu p, nu (1 - p)), p = expit(eta)  (0, 1)
``logit``      LogitNormal(eta, nu * sigma2)           (0, 1)
=============  =====================================  =========

LogNormal(a, b) and LogitNormal(a, b) have location ``a`` and variance
``b`` on the log / logit scale.  Both gamma models have mean ``e^eta``.

Besides the scalar-style API (:func:`resolve`, :func:`quantile`,
:func:`cdf`, :func:`log_density`) the module exposes array kernels that
work on standard-normal scores directly (:func:`from_normal_score`,
:func:`normal_score`); these keep full precision in both tails and are
what the field sampler and the MCMC call.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from .errors import DomainError, MissingSigma2, NonFiniteLinearPredictor, NumericalUnderflow, SupportError

__all__ = [
    "Kind",
    "MarginalFamily",
    "SiteMarginal",
    "resolve",
    "resolve_params",
    "quantile",
    "cdf",
    "sf",
    "log_density",
    "mean",
    "from_normal_score",
    "normal_score",
    "in_support",
    "logpdf",
    "U_CLAMP",
]

# Phi(eps) underflows for |eps| > ~8; tail probabilities are floored here
U_CLAMP = 1e-15
_QUANTILE_RTOL = 1e-12
_LOG_2PI = np.log(2.0 * np.pi)


class Kind(str, enum.Enum):
    LN = "ln"
    LN2 = "ln2"
    GSC = "gsc"
    GSH = "gsh"
    BETA_LOGIT = "beta-logit"
    LOGIT = "logit"

    @classmethod
    def parse(cls, token):
        if isinstance(token, cls):
            return token
        t = str(token).strip().lower().replace("_", "-")
        aliases = {"betalogit": "beta-logit", "beta": "beta-logit", "lognormal": "ln"}
        return cls(aliases.get(t, t))

    @property
    def needs_sigma2(self):
        return self in (Kind.LN, Kind.LOGIT)

    @property
    def dist(self):
        return _DIST[self]

    @property
    def unit_support(self):
        return self in (Kind.BETA_LOGIT, Kind.LOGIT)


_DIST = {
    Kind.LN: "lognormal",
    Kind.LN2: "lognormal",
    Kind.GSC: "gamma",
    Kind.GSH: "gamma",
    Kind.BETA_LOGIT: "beta",
    Kind.LOGIT: "logitnormal",
}


@dataclass(frozen=True)
class MarginalFamily:
    """A family together with its regression coefficients and dispersion."""

    kind: Kind
    beta: tuple
    nu: float

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        object.__setattr__(self, "beta", tuple(float(b) for b in np.atleast_1d(self.beta)))
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"nu must be positive and finite, got {self.nu}")

    @property
    def needs_sigma2(self):
        return self.kind.needs_sigma2


@dataclass(frozen=True)
class SiteMarginal:
    """A resolved marginal, possibly for many sites at once.

    ``a`` and ``b`` are the two distribution parameters: (location,
    variance) for the log/logit-normal families, (shape, scale) for gamma
    and (alpha, beta) for beta.  They may be scalars or equal-length arrays.
    """

    kind: Kind
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise NonFiniteLinearPredictor(f"non-finite {self.kind.value} parameters")
        positive_a = self.kind.dist in ("gamma", "beta")
        if np.any(b <= 0) or (positive_a and np.any(a <= 0)):
            raise NonFiniteLinearPredictor(f"non-positive {self.kind.value} parameters")

    def __len__(self):
        return int(np.broadcast(self.a, self.b).size)

    def __getitem__(self, i):
        a, b = np.broadcast_arrays(self.a, self.b)
        return SiteMarginal(self.kind, a[i], b[i])

    @property
    def params(self):
        names = {
            "lognormal": ("loc", "var"),
            "logitnormal": ("loc", "var"),
            "gamma": ("shape", "scale"),
            "beta": ("alpha", "beta"),
        }[self.kind.dist]
        return dict(zip(names, (self.a, self.b)))


# --------------------------------------------------------------------------
# resolution


def resolve_params(kind, eta, nu, sigma2=None):
    """Distribution parameters ``(a, b)`` from a linear predictor, no checks."""
    if kind is Kind.LN:
        return eta, nu * sigma2
    if kind is Kind.LN2:
        return eta, np.broadcast_to(nu, np.shape(eta))
    if kind is Kind.GSC:
        return np.broadcast_to(1.0 / nu, np.shape(eta)), nu * np.exp(eta)
    if kind is Kind.GSH:
        return np.exp(eta) / nu, np.broadcast_to(nu, np.shape(eta))
    if kind is Kind.BETA_LOGIT:
        p = sc.expit(eta)
        return nu * p, nu * sc.expit(-eta)
    if kind is Kind.LOGIT:
        return eta, nu * sigma2
    raise ValueError(kind)


def resolve(family, x, sigma2=None):
    """Resolve ``family`` at covariates ``x`` (``(q,)`` or ``(n, q)``)."""
    kind = Kind.parse(family.kind)
    x = np.asarray(x, dtype=float)
    beta = np.asarray(family.beta, dtype=float)
    if x.shape[-1] != beta.size:
        raise ValueError(f"covariate dimension {x.shape[-1]} != len(beta) {beta.size}")
    if kind.needs_sigma2:
        if sigma2 is None:
            raise MissingSigma2(f"family {kind.value} needs the CAR marginal variance")
        sigma2 = np.asarray(sigma2, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        eta = x @ beta
        if not np.all(np.isfinite(eta)):
            raise NonFiniteLinearPredictor("x'beta is not finite")
        a, b = resolve_params(kind, eta, family.nu, sigma2)
    return SiteMarginal(kind, np.array(a), np.array(b))


# --------------------------------------------------------------------------
# elementary functions on (kind, a, b)


def _lower_upper(kind, z, a, b):
    """``(F(z), 1 - F(z))`` with each tail computed directly."""
    d = kind.dist
    if d == "lognormal":
        s = (np.log(z) - a) / np.sqrt(b)
        return sc.ndtr(s), sc.ndtr(-s)
    if d == "logitnormal":
        s = (sc.logit(z) - a) / np.sqrt(b)
        return sc.ndtr(s), sc.ndtr(-s)
    if d == "gamma":
        return sc.gammainc(a, z / b), sc.gammaincc(a, z / b)
    return sc.betainc(a, b, z), sc.betaincc(a, b, z)


def logpdf(kind, z, a, b):
    """Log density kernel on raw arrays, no support check."""
    d = kind.dist
    if d == "lognormal":
        lz = np.log(z)
        return -lz - 0.5 * (_LOG_2PI + np.log(b)) - (lz - a) ** 2 / (2.0 * b)
    if d == "logitnormal":
        lz = sc.logit(z)
        return -np.log(z) - np.log1p(-z) - 0.5 * (_LOG_2PI + np.log(b)) - (lz - a) ** 2 / (2.0 * b)
    if d == "gamma":
        return sc.xlogy(a - 1.0, z) - z / b - sc.gammaln(a) - a * np.log(b)
    return sc.xlogy(a - 1.0, z) + sc.xlog1py(b - 1.0, -z) - sc.betaln(a, b)


def in_support(kind, z):
    """Elementwise support indicator."""
    z = np.asarray(z, dtype=float)
    ok = np.isfinite(z) & (z > 0)
    if kind.unit_support:
        ok &= z < 1
    return ok


def _tail_inverse_raw(kind, t, a, b, upper):
    """scipy inverse of the lower (``upper=False``) or upper tail at ``t``.

    Each element calls exactly one inverse.  Upper gamma tails use the
    complementary inverse only below ``t = 1e-3``, where ``1 - t`` would
    lose relative precision; upper beta tails use ``1 - I^{-1}(b, a, t)``.
    """
    d = kind.dist
    if d in ("lognormal", "logitnormal"):
        s = np.where(upper, -sc.ndtri(t), sc.ndtri(t))
        y = a + np.sqrt(b) * s
        return np.exp(y) if d == "lognormal" else sc.expit(y)
    x = np.empty_like(t)
    if d == "gamma":
        far = upper & (t < 1e-3)
        near = ~far
        x[near] = sc.gammaincinv(a[near], np.where(upper[near], 1.0 - t[near], t[near]))
        x[far] = sc.gammainccinv(a[far], t[far])
        return x * b
    lo = ~upper
    x[lo] = sc.betaincinv(a[lo], b[lo], t[lo])
    x[upper] = 1.0 - sc.betaincinv(b[upper], a[upper], t[upper])
    return x


def _tail_value(kind, x, a, b, upper):
    """``F(x)`` where ``upper`` is False, ``1 - F(x)`` where it is True."""
    out = np.empty_like(x)
    lo = ~upper
    if kind.dist == "gamma":
        out[lo] = sc.gammainc(a[lo], x[lo] / b[lo])
        out[upper] = sc.gammaincc(a[upper], x[upper] / b[upper])
    else:
        out[lo] = sc.betainc(a[lo], b[lo], x[lo])
        out[upper] = sc.betaincc(a[upper], b[upper], x[upper])
    return out


def _polish(kind, x, t, a, b, upper):
    """Bracketed Newton with bisection fallback on the relevant tail.

    Solves ``F(x) = t`` (lower) or ``1 - F(x) = t`` (upper) to a relative
    tolerance of 1e-12 in probability.  Only entries whose residual is
    already outside tolerance are iterated.
    """
    x = np.array(x, dtype=float)
    unit = kind.unit_support

    def g(xx, tt, aa, bb, up):
        v = _tail_value(kind, xx, aa, bb, up)
        return np.where(up, tt - v, v - tt)

    with np.errstate(all="ignore"):
        resid = g(x, t, a, b, upper)
        # roots below the normal range are left as they are
        bad = ~(np.abs(resid) <= _QUANTILE_RTOL * t) & (x > 2.0 * np.finfo(float).tiny)
        if unit:
            bad &= x < 1
    idx = np.flatnonzero(bad)
    if idx.size == 0:
        return x
    xs, ts, as_, bs, us = x[idx], t[idx], a[idx], b[idx], upper[idx]
    top = 1.0 if unit else np.inf
    lo = np.zeros_like(xs)
    hi = np.full_like(xs, top)
    with np.errstate(all="ignore"):
        r = g(xs, ts, as_, bs, us)
        lo = np.where(r < 0, xs, lo)
        hi = np.where(r > 0, xs, hi)
        # finite upper bracket for (0, inf) supports
        probe = np.where(np.isfinite(hi), hi, np.maximum(2.0 * xs, 1.0))
        for _ in range(2000):
            need = ~np.isfinite(hi)
            if not need.any():
                break
            rp = g(probe, ts, as_, bs, us)
            hi = np.where(need & (rp >= 0), probe, hi)
            lo = np.where(need & (rp < 0), probe, lo)
            probe = np.where(need, probe * 2.0, probe)
        for _ in range(200):
            r = g(xs, ts, as_, bs, us)
            done = (np.abs(r) <= _QUANTILE_RTOL * ts) | (hi - lo <= 4e-16 * hi + 1e-320)
            if done.all():
                break
            lo = np.where(r < 0, xs, lo)
            hi = np.where(r > 0, xs, hi)
            dens = np.exp(logpdf(kind, xs, as_, bs))
            newton = xs - r / dens
            # lower tails behave like C x^a near 0, so Newton on log F
            # against log x converges in a step or two there
            v = np.where(us, ts - r, r + ts)
            log_newton = xs * np.exp(-(np.log(v) - np.log(ts)) * v / (xs * dens))
            newton = np.where(us, newton, log_newton)
            # geometric bisection; with no positive lower bracket yet, jump
            # down by a large factor so tiny quantiles are reached quickly
            mid = np.where(lo > 0, np.sqrt(lo * hi), 1e-8 * hi)
            mid = np.where(unit & (hi > 0.5), 0.5 * (lo + hi), mid)
            ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
            xs = np.where(done, xs, np.where(ok, newton, mid))
    x[idx] = xs
    return x


def _tail_inverse(kind, t, a, b, upper, polish=True):
    t, a, b, upper = np.broadcast_arrays(
        np.asarray(t, float), np.asarray(a, float), np.asarray(b, float), np.asarray(upper, bool)
    )
    shape = t.shape
    t, a, b, upper = (np.atleast_1d(v) for v in (t, a, b, upper))
    if kind.dist == "beta":
        # Doubles cannot resolve a root just below 1, so roots above 1/2 are
        # solved for y = 1 - x using 1 - I_x(a, b) = I_y(b, a).  The tail
        # flag flips with the reflection; the target stays the small tail.
        with np.errstate(all="ignore"):
            half = np.where(upper, sc.betaincc(a, b, 0.5) > t, sc.betainc(a, b, 0.5) < t)
            aa, bb = np.where(half, b, a), np.where(half, a, b)
            flag = upper ^ half
            y = np.empty_like(t)
            y[flag] = sc.betainccinv(aa[flag], bb[flag], t[flag])
            y[~flag] = sc.betaincinv(aa[~flag], bb[~flag], t[~flag])
        if polish:
            y = _polish(kind, y, t, aa, bb, flag)
        x = np.where(half, 1.0 - y, y)
        return _into_support(kind, x).reshape(shape)
    with np.errstate(all="ignore"):
        x = _tail_inverse_raw(kind, t, a, b, upper)
    if polish and kind.dist == "gamma":
        x = _polish(kind, x, t, a, b, upper)
    return _into_support(kind, x).reshape(shape)


_TINY = np.nextafter(0.0, 1.0)
_BELOW_ONE = np.nextafter(1.0, 0.0)


def _into_support(kind, x):
    """Pull values that rounded onto a support boundary back inside it."""
    hi = _BELOW_ONE if kind.unit_support else np.inf
    return np.clip(x, _TINY, hi)


# --------------------------------------------------------------------------
# public scalar-style API (works elementwise on arrays too)


def quantile(m, u):
    """``F^{-1}(u)`` for ``0 < u < 1``; ``u`` is clamped to [1e-15, 1 - 1e-15]."""
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0) | ~(u < 1)):
        raise DomainError("quantile requires 0 < u < 1")
    upper = u > 0.5
    t = np.where(upper, 1.0 - u, u)
    t = np.maximum(t, U_CLAMP)
    x = _tail_inverse(m.kind, t, m.a, m.b, upper)
    return x[()] if x.ndim == 0 else x


def cdf(m, z):
    z = np.asarray(z, dtype=float)
    if not np.all(in_support(m.kind, z)):
        raise SupportError(f"value outside the support of {m.kind.value}")
    lo, _ = _lower_upper(m.kind, z, m.a, m.b)
    return lo[()] if np.ndim(lo) == 0 else lo


def sf(m, z):
    z = np.asarray(z, dtype=float)
    if not np.all(in_support(m.kind, z)):
        raise SupportError(f"value outside the support of {m.kind.value}")
    _, up = _lower_upper(m.kind, z, m.a, m.b)
    return up[()] if np.ndim(up) == 0 else up


def log_density(m, z):
    z = np.asarray(z, dtype=float)
    if not np.all(in_support(m.kind, z)):
        raise SupportError(f"value outside the support of {m.kind.value}")
    out = logpdf(m.kind, z, m.a, m.b)
    return out[()] if np.ndim(out) == 0 else out


def mean(m):
    """Analytic mean (Gauss-Hermite for the logit-normal)."""
    d = m.kind.dist
    if d == "lognormal":
        return np.exp(m.a + 0.5 * m.b)
    if d == "gamma":
        return m.a * m.b
    if d == "beta":
        return m.a / (m.a + m.b)
    nodes, weights = np.polynomial.hermite_e.hermegauss(80)
    y = np.asarray(m.a)[..., None] + np.sqrt(np.asarray(m.b))[..., None] * nodes
    return (sc.expit(y) * weights).sum(-1) / weights.sum()


# --------------------------------------------------------------------------
# normal-score kernels


def from_normal_score(kind, eps, a, b, polish=None):
    """``F^{-1}(Phi(eps))`` elementwise, tail-accurate, no validation.

    Log/logit-normal margins are transformed exactly; gamma and beta go
    through the lower tail for ``eps <= 0`` and the upper tail otherwise,
    with tail probabilities floored at :data:`U_CLAMP`.

    ``polish`` defaults to True for beta margins and False for gamma, whose
    scipy inverses already meet the 1e-12 tolerance.
    """
    kind = Kind.parse(kind)
    eps = np.asarray(eps, dtype=float)
    d = kind.dist
    if d == "lognormal":
        return np.exp(a + np.sqrt(b) * eps)
    if d == "logitnormal":
        return _into_support(kind, sc.expit(a + np.sqrt(b) * eps))
    if polish is None:
        polish = d == "beta"
    upper = eps > 0
    t = np.maximum(sc.ndtr(-np.abs(eps)), U_CLAMP)
    return _tail_inverse(kind, t, a, b, upper, polish=polish)


def normal_score(kind, z, a, b, strict=False):
    """``Phi^{-1}(F(z))`` elementwise, computed from the smaller tail.

    With ``strict=True`` a tail probability below :data:`U_CLAMP` raises
    :class:`NumericalUnderflow` instead of being clamped.
    """
    kind = Kind.parse(kind)
    z = np.asarray(z, dtype=float)
    d = kind.dist
    if d == "lognormal":
        return (np.log(z) - a) / np.sqrt(b)
    if d == "logitnormal":
        return (sc.logit(z) - a) / np.sqrt(b)
    lo, up = _lower_upper(kind, z, a, b)
    t = np.minimum(lo, up)
    if strict and np.any(t < U_CLAMP * (1 - 1e-12)):
        raise NumericalUnderflow("marginal CDF value lies beyond the 1e-15 clamp")
    t = np.maximum(t, U_CLAMP)
    s = sc.ndtri(t)
    return np.where(lo <= up, s, -s)
