"""Observation layer: Poisson counts or Bernoulli presence given ``mu``."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special as sc

from .errors import SupportError

__all__ = [
    "Likelihood",
    "Dataset",
    "pointwise_loglik",
    "loglik_vector",
    "total_loglik",
    "sample_observations",
    "read_dataset",
    "write_dataset",
]

# Bernoulli means are kept this far from {0, 1}
BERNOULLI_EPS = 1e-12


class Likelihood(str, enum.Enum):
    POISSON = "poisson"
    BERNOULLI = "bernoulli"

    @classmethod
    def parse(cls, token):
        return token if isinstance(token, cls) else cls(str(token).strip().lower())


@dataclass(frozen=True)
class Dataset:
    """Responses ``y`` and covariates ``X`` (first column the intercept)."""

    y: np.ndarray
    X: np.ndarray
    likelihood: Likelihood = Likelihood.POISSON
    graph_ref: str = "lfdp"

    def __post_init__(self):
        lik = Likelihood.parse(self.likelihood)
        y = np.asarray(self.y)
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if y.ndim != 1 or X.shape[0] != y.size:
            raise ValueError("y must be a vector with one row of X per site")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains missing or non-finite values")
        if np.any(y != np.round(y)) or np.any(y < 0):
            raise ValueError("responses must be non-negative integers")
        if lik is Likelihood.BERNOULLI and np.any(y > 1):
            raise ValueError("Bernoulli responses must be 0 or 1")
        y = y.astype(np.int64)
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "likelihood", lik)

    @property
    def n_sites(self):
        return self.y.size

    @property
    def n_covariates(self):
        return self.X.shape[1]


def loglik_vector(likelihood, y, mu):
    """Elementwise log-pmf without support checks.

    Invalid means give ``-inf`` (or 0 for a Poisson zero count at mu = 0),
    which is what a Metropolis step wants.
    """
    y = np.asarray(y)
    mu = np.asarray(mu, dtype=float)
    if likelihood is Likelihood.POISSON:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = sc.xlogy(y, mu) - mu - sc.gammaln(y + 1.0)
        return np.where(np.isfinite(mu) & (mu >= 0), out, -np.inf)
    m = np.clip(mu, BERNOULLI_EPS, 1.0 - BERNOULLI_EPS)
    return np.where(y == 1, np.log(m), np.log1p(-m))


def pointwise_loglik(likelihood, y_i, mu_i):
    """Exact log-pmf of one response."""
    likelihood = Likelihood.parse(likelihood)
    mu_i = float(mu_i)
    if likelihood is Likelihood.POISSON:
        if not (np.isfinite(mu_i) and mu_i > 0):
            raise SupportError(f"Poisson mean must be positive, got {mu_i}")
        if y_i < 0 or y_i != int(y_i):
            raise SupportError(f"invalid Poisson count {y_i}")
    else:
        if not 0.0 < mu_i < 1.0:
            raise SupportError(f"Bernoulli mean must lie in (0, 1), got {mu_i}")
        if y_i not in (0, 1):
            raise SupportError(f"invalid Bernoulli response {y_i}")
    return float(loglik_vector(likelihood, y_i, mu_i))


def total_loglik(likelihood, data, mu):
    """Sum of pointwise terms; responses are independent given ``mu``."""
    likelihood = Likelihood.parse(likelihood)
    mu = np.asarray(mu, dtype=float)
    y = data.y if isinstance(data, Dataset) else np.asarray(data)
    if mu.shape != y.shape:
        raise ValueError("mu and y must have the same shape")
    _check_means(likelihood, mu)
    return float(np.sum(loglik_vector(likelihood, y, mu)))


def _check_means(likelihood, mu):
    if likelihood is Likelihood.POISSON:
        if not np.all(np.isfinite(mu) & (mu > 0)):
            raise SupportError("Poisson means must be positive")
    elif not np.all((mu > 0) & (mu < 1)):
        raise SupportError("Bernoulli means must lie in (0, 1)")


def sample_observations(likelihood, mu, rng):
    likelihood = Likelihood.parse(likelihood)
    mu = np.asarray(mu, dtype=float)
    _check_means(likelihood, mu)
    if likelihood is Likelihood.POISSON:
        return rng.poisson(mu)
    return (rng.random(mu.shape) < mu).astype(np.int64)


# --------------------------------------------------------------------------
# CSV: header site,y,x1,...,xq


def write_dataset(data, path):
    q = data.n_covariates
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site", "y"] + [f"x{k + 1}" for k in range(q)])
        for i in range(data.n_sites):
            w.writerow([i, int(data.y[i])] + [repr(float(v)) for v in data.X[i]])


def read_dataset(path, likelihood="poisson", graph_ref=None):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    if header[:2] != ["site", "y"]:
        raise ValueError(f"{path}: expected header starting with 'site,y'")
    body.sort(key=lambda r: int(r[0]))
    y = np.array([int(r[1]) for r in body])
    X = np.array([[float(v) for v in r[2:]] for r in body])
    return Dataset(y=y, X=X, likelihood=likelihood, graph_ref=graph_ref or Path(path).stem)
