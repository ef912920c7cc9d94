"""Sampling and density of a transformed Gaussian Markov random field.

A draw is produced in three steps: ``w ~ N(0, Q^{-1})`` from the Cholesky
factor, ``eps_i = w_i / sigma_i`` so every latent margin is standard
normal, and ``mu_i = F_i^{-1}(Phi(eps_i))``.  The dependence is therefore
the Gaussian copula with correlation ``Psi = S^{-1} Q^{-1} S^{-1}``
whatever the margins are.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import margins as mg
from .errors import SupportError
from .lattice import copula_correlation

__all__ = ["TgmrfSample", "sample_field", "sample_latent", "log_joint_density", "markov_check"]


@dataclass(frozen=True)
class TgmrfSample:
    """Latent standardised scores ``epsilon`` and transformed values ``mu``.

    Both have shape ``(n,)`` for a single draw or ``(size, n)``.
    """

    epsilon: np.ndarray
    mu: np.ndarray


def _groups(marginals, n):
    """Normalise ``marginals`` to ``[(kind, index, a, b), ...]``.

    Accepts one vector-valued :class:`SiteMarginal` covering all sites or a
    sequence of per-site marginals (kinds may differ between sites).
    """
    if isinstance(marginals, mg.SiteMarginal):
        a, b = np.broadcast_arrays(marginals.a, marginals.b)
        if a.ndim == 0:
            a, b = np.full(n, float(a)), np.full(n, float(b))
        if a.shape != (n,):
            raise ValueError(f"expected marginals for {n} sites, got {a.shape}")
        return [(marginals.kind, np.arange(n), a, b)]
    marginals = list(marginals)
    if len(marginals) != n:
        raise ValueError(f"expected {n} marginals, got {len(marginals)}")
    out = []
    for kind in dict.fromkeys(m.kind for m in marginals):
        idx = np.array([i for i, m in enumerate(marginals) if m.kind is kind])
        a = np.array([float(marginals[i].a) for i in idx])
        b = np.array([float(marginals[i].b) for i in idx])
        out.append((kind, idx, a, b))
    return out


def sample_latent(prec, rng, size=None):
    """Standardised latent field ``eps ~ N(0, Psi)``."""
    n = prec.n_sites
    m = 1 if size is None else int(size)
    z = rng.standard_normal((n, m))
    w = prec.chol.solve_lt(z)
    eps = (w / np.sqrt(prec.sigma2)[:, None]).T
    return eps[0] if size is None else eps


def sample_field(prec, marginals, rng, size=None):
    """Draw from TGMRF(F, Q).

    Parameters
    ----------
    prec : CarPrecision
    marginals : SiteMarginal or sequence of SiteMarginal
        One resolved marginal per site.
    rng : numpy.random.Generator
    size : int, optional
        Number of independent draws; ``None`` returns a single field.
    """
    groups = _groups(marginals, prec.n_sites)
    eps = sample_latent(prec, rng, size)
    mu = np.empty_like(eps)
    for kind, idx, a, b in groups:
        mu[..., idx] = mg.from_normal_score(kind, eps[..., idx], a, b)
    return TgmrfSample(epsilon=eps, mu=mu)


def log_joint_density(prec, marginals, mu):
    """Log density of ``mu`` under TGMRF(F, Q).

    Uses the unit-diagonal copula form; with ``eps_i = Phi^{-1}(F_i(mu_i))``

        log h = -1/2 log|Psi| - 1/2 eps'(Psi^{-1} - I) eps + sum log f_i(mu_i).
    """
    mu = np.asarray(mu, dtype=float)
    n = prec.n_sites
    if mu.shape != (n,):
        raise ValueError(f"mu must have shape ({n},)")
    eps = np.empty(n)
    logf = 0.0
    for kind, idx, a, b in _groups(marginals, n):
        z = mu[idx]
        if not np.all(mg.in_support(kind, z)):
            raise SupportError(f"mu outside the support of {kind.value}")
        eps[idx] = mg.normal_score(kind, z, a, b, strict=True)
        logf += float(np.sum(mg.logpdf(kind, z, a, b)))
    psi = copula_correlation(prec)
    quad = psi.quad_form(eps) - float(eps @ eps)
    return -0.5 * psi.logdet() - 0.5 * quad + logf


def markov_check(prec, i, j):
    """True when sites ``i`` and ``j`` are conditionally independent given the rest."""
    if i == j:
        raise ValueError("markov_check needs two distinct sites")
    return prec.Q[i, j] == 0
