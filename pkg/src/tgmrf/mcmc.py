"""Metropolis-within-Gibbs posterior sampling for TGMRF regressions.

The unknowns are the regression coefficients ``beta``, the dispersion
``nu``, the CAR dependence ``rho`` and the standardised latent field
``eps ~ N(0, Psi(rho))``.  The conditional means are deterministic given
those: ``mu_i = F_i^{-1}(Phi(eps_i))`` with ``F_i`` resolved from
``(x_i'beta, nu, sigma2_i(rho))``.  Working with ``eps`` rather than
``mu`` means no Jacobian of the marginal transform ever appears.

One iteration is

1. single-site random-walk moves on ``eps``, one colour class of the graph
   at a time (sites of a class are conditionally independent, so their
   moves are vectorised);
2. a joint random-walk move on ``beta``;
3. a ``beta`` move that holds every ``mu_i`` fixed and carries ``eps`` along;
4. a random-walk move on ``log nu``;
5. a random-walk move on ``logit rho``.

Proposal scales adapt during burn-in only and are frozen afterwards.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special as sc

from . import margins as mg
from .errors import NonConvergentCholesky, NumericalUnderflow, SamplerFailure
from .glmm import Dataset, Likelihood, loglik_vector
from .lattice import car_structure, color_classes

__all__ = [
    "Priors",
    "ChainConfig",
    "TgmrfModel",
    "State",
    "PosteriorChain",
    "MetropolisWithinGibbs",
    "log_posterior",
    "log_acceptance_ratio",
    "latent_log_density",
    "restandardize_on_rho",
    "run_chain",
    "simulate_prior_predictive",
    "split_rhat",
    "batch_means_se",
]

_LOG_2PI = math.log(2.0 * math.pi)

# adapted random-walk scales stay in this range; wider steps on unit-scale
# or log/logit-scale coordinates only waste likelihood evaluations
_SCALE_BOUNDS = (1e-3, 3.0)

# the coefficient-shift move is vetoed unless the new scores reproduce the
# stored means to this relative accuracy
_SHIFT_RTOL = 1e-8


@dataclass(frozen=True)
class Priors:
    """beta_k ~ N(0, 1/beta_precision), nu ~ Gamma(shape, scale), rho ~ U(0, 1)."""

    beta_precision: float = 0.01
    nu_shape: float = 0.01
    nu_scale: float = 100.0

    def __post_init__(self):
        if min(self.beta_precision, self.nu_shape, self.nu_scale) <= 0:
            raise ValueError("prior hyperparameters must be positive")

    def log_beta(self, beta):
        beta = np.asarray(beta, dtype=float)
        tau = self.beta_precision
        return float(0.5 * beta.size * (math.log(tau) - _LOG_2PI) - 0.5 * tau * beta @ beta)

    def log_nu(self, nu):
        if not nu > 0:
            return -np.inf
        k, s = self.nu_shape, self.nu_scale
        return (k - 1.0) * math.log(nu) - nu / s - math.lgamma(k) - k * math.log(s)

    @staticmethod
    def log_rho(rho):
        return 0.0 if 0.0 <= rho < 1.0 else -np.inf

    def log_prior(self, beta, nu, rho):
        return self.log_beta(beta) + self.log_nu(nu) + self.log_rho(rho)

    def sample(self, q, rng):
        beta = rng.standard_normal(q) / math.sqrt(self.beta_precision)
        nu = rng.gamma(self.nu_shape, self.nu_scale)
        rho = rng.random()
        return beta, nu, rho


@dataclass(frozen=True)
class ChainConfig:
    n_iter: int = 20_000
    burn_in: int = 5_000
    thin: int = 5
    adapt_window: int = 50
    target_accept_scalar: float = 0.44
    target_accept_block: float = 0.234
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1 or self.adapt_window < 1:
            raise ValueError("thin and adapt_window must be >= 1")

    @property
    def n_retained(self):
        return len(range(self.burn_in, self.n_iter, self.thin))


@dataclass(frozen=True, eq=False)
class TgmrfModel:
    """Graph + marginal family + data + priors.

    ``use_likelihood=False`` turns the model into its prior, which is how
    prior-recovery runs and forward simulation are expressed.
    """

    graph: object
    family: mg.Kind
    data: Dataset
    priors: Priors = Priors()
    use_likelihood: bool = True

    def __post_init__(self):
        object.__setattr__(self, "family", mg.Kind.parse(self.family))
        if self.data.n_sites != self.graph.n_sites:
            raise ValueError("dataset and graph sizes differ")
        lik = self.data.likelihood
        if lik is Likelihood.BERNOULLI and not self.family.unit_support:
            raise ValueError(f"family {self.family.value} cannot model Bernoulli rates")
        if lik is Likelihood.POISSON and self.family.unit_support:
            raise ValueError(f"family {self.family.value} cannot model Poisson intensities")

    @property
    def likelihood(self):
        return self.data.likelihood

    @property
    def n_sites(self):
        return self.graph.n_sites

    @property
    def n_covariates(self):
        return self.data.n_covariates

    def with_data(self, data):
        return replace(self, data=data)


@dataclass(frozen=True)
class State:
    beta: np.ndarray
    nu: float
    rho: float
    epsilon: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", np.array(self.beta, dtype=float))
        object.__setattr__(self, "epsilon", np.array(self.epsilon, dtype=float))

    def in_support(self):
        return self.nu > 0 and 0.0 <= self.rho < 1.0 and np.all(np.isfinite(self.epsilon))


# --------------------------------------------------------------------------
# densities


def latent_log_density(structure, rho, eps, sigma2=None, logdet=None):
    """log N(eps; 0, Psi(rho)) using ``Psi^{-1} = S Q S``."""
    eps = np.asarray(eps, dtype=float)
    g = structure.graph
    if sigma2 is None:
        sigma2 = structure.sigma2(rho)
    if logdet is None:
        logdet = structure.logdet(rho)
    w = np.sqrt(sigma2) * eps
    quad = float(g.n_neighbors @ (w * w) - rho * (w @ (g.adjacency @ w)))
    n = eps.size
    return -0.5 * n * _LOG_2PI + 0.5 * (logdet + float(np.sum(np.log(sigma2)))) - 0.5 * quad


def _means(model, beta, nu, sigma2, eps, idx=None):
    kind = model.family
    X = model.data.X if idx is None else model.data.X[idx]
    s2 = sigma2 if idx is None else sigma2[idx]
    e = eps if idx is None else eps[idx]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        a, b = mg.resolve_params(kind, X @ beta, nu, s2)
        return mg.from_normal_score(kind, e, np.asarray(a, float), np.asarray(b, float))


def log_posterior(model, state):
    """Unnormalised log posterior; ``-inf`` outside the support."""
    if not state.in_support():
        return -np.inf
    st = car_structure(model.graph)
    sigma2 = st.sigma2(state.rho)
    lp = model.priors.log_prior(state.beta, state.nu, state.rho)
    lp += latent_log_density(st, state.rho, state.epsilon, sigma2=sigma2)
    if model.use_likelihood:
        mu = _means(model, state.beta, state.nu, sigma2, state.epsilon)
        lp += float(np.sum(loglik_vector(model.likelihood, model.data.y, mu)))
    return lp if np.isfinite(lp) else -np.inf


def _log_target_unconstrained(model, state):
    lp = log_posterior(model, state)
    if not np.isfinite(lp):
        return -np.inf
    # Jacobians of nu = exp(t) and rho = expit(s)
    return lp + math.log(state.nu) + math.log(state.rho) + math.log1p(-state.rho)


def log_acceptance_ratio(model, current, proposal):
    """Log Metropolis ratio for a symmetric random walk on ``(beta, log nu, logit rho, eps)``."""
    return _log_target_unconstrained(model, proposal) - _log_target_unconstrained(model, current)


def restandardize_on_rho(prec_old, prec_new, epsilon):
    """Map the latent field across a change of ``rho``.

    ``eps`` lives on the unit-variance scale for every ``rho``, so this is
    the identity; only the prior ``N(0, Psi(rho))`` changes.
    """
    if prec_old is not None and prec_new is not None and prec_old.graph is not prec_new.graph:
        raise ValueError("precisions refer to different graphs")
    return epsilon


# --------------------------------------------------------------------------
# sampler


@dataclass
class PosteriorChain:
    """Retained draws plus the per-draw pointwise log-likelihood matrix."""

    family: mg.Kind
    iterations: np.ndarray
    beta: np.ndarray
    nu: np.ndarray
    rho: np.ndarray
    epsilon: np.ndarray
    lp: np.ndarray
    pointwise_loglik: np.ndarray
    acceptance: dict = field(default_factory=dict)
    config: ChainConfig | None = None

    @property
    def n_draws(self):
        return self.iterations.size

    def thinned(self, k):
        sl = slice(None, None, k)
        return replace(
            self,
            iterations=self.iterations[sl],
            beta=self.beta[sl],
            nu=self.nu[sl],
            rho=self.rho[sl],
            epsilon=self.epsilon[sl],
            lp=self.lp[sl],
            pointwise_loglik=self.pointwise_loglik[sl],
        )

    def parameters(self):
        """Dict of named scalar parameter traces."""
        out = {f"beta{k}": self.beta[:, k] for k in range(self.beta.shape[1])}
        out["nu"] = self.nu
        out["rho"] = self.rho
        return out

    def summary(self):
        """Posterior mean, sd and split-Rhat per parameter."""
        return {
            name: {"mean": float(v.mean()), "sd": float(v.std(ddof=1)), "rhat": split_rhat(v)}
            for name, v in self.parameters().items()
        }

    def write_csv(self, path):
        q = self.beta.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter"] + [f"beta{k}" for k in range(q)] + ["nu", "rho", "lp"])
            for s in range(self.n_draws):
                w.writerow(
                    [int(self.iterations[s])]
                    + [repr(float(b)) for b in self.beta[s]]
                    + [repr(float(self.nu[s])), repr(float(self.rho[s])), repr(float(self.lp[s]))]
                )

    def write_latent_csv(self, path):
        n = self.epsilon.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter"] + [f"eps{i}" for i in range(n)])
            for s in range(self.n_draws):
                w.writerow([int(self.iterations[s])] + [repr(float(e)) for e in self.epsilon[s]])


class MetropolisWithinGibbs:
    """Stateful transition kernel; :func:`run_chain` is the usual entry point.

    The kernel is exposed so that validation code can alternate it with
    data resampling (successive-conditional simulation).
    """

    def __init__(self, model, config, rng, init=None):
        self.model = model
        self.config = config
        self.rng = rng
        g = model.graph
        self.structure = car_structure(g)
        self.nn = g.n_neighbors.astype(float)
        self.A = g.adjacency
        self.colors = [(idx, self.A[idx]) for idx in color_classes(g)]
        self.kind = model.family
        self.X = model.data.X
        self.y = model.data.y
        self.lik = model.likelihood
        n, q = model.n_sites, model.n_covariates

        # upper bound on the total log-likelihood, used to reject proposals
        # whose prior ratio alone rules them out before any means are computed
        self.ll_ceiling = self._saturated_loglik()

        # proposal scales
        self.eps_scale = np.full(n, 0.8)
        self.beta_scale = 2.38 / math.sqrt(q)
        self.shift_scale = 2.38 / math.sqrt(q)
        self.beta_cov_chol = np.linalg.cholesky(self._initial_beta_cov())
        self.lognu_scale = 0.3
        self.logitrho_scale = 1.0

        self._acc = {"eps": np.zeros(n), "beta": 0, "shift": 0, "nu": 0, "rho": 0}
        self._win = {"eps": np.zeros(n), "beta": 0, "shift": 0, "nu": 0, "rho": 0}
        self._n_adapt = 0
        self._beta_hist = []

        self.set_state(init if init is not None else self.initial_state())

    # ---- setup -----------------------------------------------------------

    def _initial_beta_cov(self):
        X, y = self.X, self.y
        if self.lik is Likelihood.POISSON:
            w = np.maximum(y, 0.5).astype(float)
        else:
            p = np.clip(y.mean(), 0.05, 0.95)
            w = np.full(y.size, p * (1 - p))
        info = X.T @ (X * w[:, None])
        info += 1e-6 * np.eye(X.shape[1])
        return 0.1 * np.linalg.inv(info)

    def _saturated_loglik(self):
        if not self.model.use_likelihood or self.lik is Likelihood.BERNOULLI:
            return 0.0
        y = self.y.astype(float)
        return float(np.sum(sc.xlogy(y, y) - y - sc.gammaln(y + 1.0)))

    def _hopeless(self, log_u, log_ratio_without_lik):
        """True when acceptance is impossible even at the saturated likelihood."""
        return log_u >= log_ratio_without_lik + self.ll_ceiling - float(self.ll.sum())

    def initial_state(self):
        """Data-driven start: intercept at the mean response, eps at its score."""
        y, q, n = self.y, self.X.shape[1], self.y.size
        beta = np.zeros(q)
        if self.lik is Likelihood.POISSON:
            beta[0] = math.log(y.mean() + 0.5)
            target = y + 0.5
        else:
            beta[0] = float(sc.logit(np.clip(y.mean(), 0.05, 0.95)))
            target = 0.25 + 0.5 * y
        nu, rho = 1.0, 0.5
        sigma2 = self.structure.sigma2(rho)
        a, b = mg.resolve_params(self.kind, self.X @ beta, nu, sigma2)
        eps = mg.normal_score(self.kind, target.astype(float), np.asarray(a, float), np.asarray(b, float))
        eps = np.clip(eps, -3.0, 3.0)
        return State(beta=beta, nu=nu, rho=rho, epsilon=eps)

    def set_state(self, state):
        self.beta = np.array(state.beta, dtype=float)
        self.nu = float(state.nu)
        self.rho = float(state.rho)
        self.eps = np.array(state.epsilon, dtype=float)
        self._refresh_rho(self.rho)
        self._refresh_means()

    def set_response(self, y):
        """Swap in new responses (same sites, same covariates)."""
        self.y = np.asarray(y)
        self.ll_ceiling = self._saturated_loglik()
        self.ll = self._loglik(self.y, self.mu)

    def _refresh_rho(self, rho):
        s2 = self.structure.sigma2(rho)
        if not np.all(np.isfinite(s2) & (s2 > 0)):
            raise NonConvergentCholesky(f"invalid marginal variances at rho={rho}")
        self.sigma2 = s2
        self.sigma = np.sqrt(s2)
        self.logdet = self.structure.logdet(rho)

    def _params(self, beta, nu, sigma2):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            a, b = mg.resolve_params(self.kind, self.X @ beta, nu, sigma2)
        return np.asarray(a, float) * np.ones(self.y.size), np.asarray(b, float) * np.ones(self.y.size)

    def _mu(self, eps, a, b):
        with np.errstate(all="ignore"):
            return mg.from_normal_score(self.kind, eps, a, b)

    def _loglik(self, y, mu):
        if not self.model.use_likelihood:
            return np.zeros(mu.shape)
        return loglik_vector(self.lik, y, mu)

    def _refresh_means(self):
        self.a, self.b = self._params(self.beta, self.nu, self.sigma2)
        self.mu = self._mu(self.eps, self.a, self.b)
        self.ll = self._loglik(self.y, self.mu)

    # ---- state access ----------------------------------------------------

    @property
    def state(self):
        return State(beta=self.beta.copy(), nu=self.nu, rho=self.rho, epsilon=self.eps.copy())

    def latent_logp(self):
        return latent_log_density(self.structure, self.rho, self.eps, sigma2=self.sigma2, logdet=self.logdet)

    def log_posterior(self):
        lp = self.model.priors.log_prior(self.beta, self.nu, self.rho) + self.latent_logp() + float(self.ll.sum())
        if math.isnan(lp):
            raise SamplerFailure("log posterior is NaN", state=self.state)
        return lp

    # ---- updates ---------------------------------------------------------

    def _accept(self, log_ratio):
        return math.log(self.rng.random()) < log_ratio

    def update_latent(self):
        rng = self.rng
        rho = self.rho
        sig = self.sigma
        w = sig * self.eps
        for idx, A_rows in self.colors:
            s = sig[idx]
            nn = self.nn[idx]
            prec = s * s * nn
            cond_mean = rho * (A_rows @ w) / (s * nn)
            e_old = self.eps[idx]
            e_new = e_old + self.eps_scale[idx] * rng.standard_normal(idx.size)
            mu_new = self._mu(e_new, self.a[idx], self.b[idx])
            ll_new = self._loglik(self.y[idx], mu_new)
            log_ratio = (ll_new - self.ll[idx]) - 0.5 * prec * ((e_new - cond_mean) ** 2 - (e_old - cond_mean) ** 2)
            u = rng.random(idx.size)
            ok = np.log(u) < log_ratio
            if ok.any():
                j = idx[ok]
                self.eps[j] = e_new[ok]
                self.mu[j] = mu_new[ok]
                self.ll[j] = ll_new[ok]
                w[j] = sig[j] * e_new[ok]
                self._win["eps"][j] += 1

    def update_beta(self):
        z = self.rng.standard_normal(self.beta.size)
        prop = self.beta + self.beta_scale * (self.beta_cov_chol @ z)
        pri = self.model.priors
        log_u = math.log(self.rng.random())
        prior_ratio = pri.log_beta(prop) - pri.log_beta(self.beta)
        if self._hopeless(log_u, prior_ratio):
            return
        a, b = self._params(prop, self.nu, self.sigma2)
        mu = self._mu(self.eps, a, b)
        ll = self._loglik(self.y, mu)
        log_ratio = float(ll.sum() - self.ll.sum()) + prior_ratio
        if log_u < log_ratio:
            self.beta, self.a, self.b, self.mu, self.ll = prop, a, b, mu, ll
            self._win["beta"] += 1

    def update_beta_shift(self):
        """Move ``beta`` while holding every mean ``mu_i`` fixed.

        The latent scores follow the coefficients through
        ``eps'_i = Phi^{-1}(F'_i(mu_i))``, so the likelihood cancels and only
        the priors and the Jacobian of the score map enter.  This travels
        along the ridge between the intercept and the level of ``eps`` that
        single-site moves cross slowly.
        """
        z = self.rng.standard_normal(self.beta.size)
        prop = self.beta + self.shift_scale * (self.beta_cov_chol @ z)
        pri = self.model.priors
        a, b = self._params(prop, self.nu, self.sigma2)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(b > 0)):
            return
        if self.kind.unit_support and not np.all(a > 0):
            return
        try:
            with np.errstate(all="ignore"):
                eps = mg.normal_score(self.kind, self.mu, a, b, strict=True)
                log_jac = float(
                    np.sum(mg.logpdf(self.kind, self.mu, a, b) - mg.logpdf(self.kind, self.mu, self.a, self.b))
                    + 0.5 * (eps @ eps - self.eps @ self.eps)
                )
        except NumericalUnderflow:
            return
        if not (np.all(np.isfinite(eps)) and math.isfinite(log_jac)):
            return
        lat_new = latent_log_density(self.structure, self.rho, eps, sigma2=self.sigma2, logdet=self.logdet)
        log_ratio = pri.log_beta(prop) - pri.log_beta(self.beta) + lat_new - self.latent_logp() + log_jac
        if self._accept(log_ratio) and self._score_map_inverts(eps, a, b):
            self.beta, self.a, self.b, self.eps = prop, a, b, eps
            self._win["shift"] += 1

    def _score_map_inverts(self, eps, a, b):
        """True when ``eps`` maps back to the stored means.

        A margin whose CDF is flat around ``mu_i`` (beta parameters near 0
        put all mass at the two ends) sends a whole interval of means to one
        score, so the move would desynchronise ``eps`` and ``mu``.
        """
        with np.errstate(all="ignore"):
            back = self._mu(eps, a, b)
        scale = np.minimum(self.mu, 1.0 - self.mu) if self.kind.unit_support else self.mu
        return bool(np.all(np.abs(back - self.mu) <= _SHIFT_RTOL * scale))

    def update_nu(self):
        log_nu = math.log(self.nu) + self.lognu_scale * self.rng.standard_normal()
        prop = math.exp(log_nu)
        if not (0.0 < prop < np.inf):
            return
        pri = self.model.priors
        log_u = math.log(self.rng.random())
        prior_ratio = pri.log_nu(prop) - pri.log_nu(self.nu) + (log_nu - math.log(self.nu))
        if self._hopeless(log_u, prior_ratio):
            return
        a, b = self._params(self.beta, prop, self.sigma2)
        mu = self._mu(self.eps, a, b)
        ll = self._loglik(self.y, mu)
        log_ratio = float(ll.sum() - self.ll.sum()) + prior_ratio
        if log_u < log_ratio:
            self.nu, self.a, self.b, self.mu, self.ll = prop, a, b, mu, ll
            self._win["nu"] += 1

    def update_rho(self):
        x = math.log(self.rho) - math.log1p(-self.rho) + self.logitrho_scale * self.rng.standard_normal()
        prop = float(sc.expit(x))
        if not 0.0 < prop < 1.0:
            return
        old = (self.rho, self.sigma2, self.sigma, self.logdet)
        lat_old = self.latent_logp()
        self._refresh_rho(prop)
        self.eps = restandardize_on_rho(None, None, self.eps)
        lat_new = latent_log_density(self.structure, prop, self.eps, sigma2=self.sigma2, logdet=self.logdet)
        if self.kind.needs_sigma2:
            a, b = self._params(self.beta, self.nu, self.sigma2)
            mu = self._mu(self.eps, a, b)
            ll = self._loglik(self.y, mu)
        else:
            a, b, mu, ll = self.a, self.b, self.mu, self.ll
        jac = math.log(prop) + math.log1p(-prop) - math.log(old[0]) - math.log1p(-old[0])
        log_ratio = float(ll.sum() - self.ll.sum()) + lat_new - lat_old + jac
        if self._accept(log_ratio):
            self.rho = prop
            self.a, self.b, self.mu, self.ll = a, b, mu, ll
            self._win["rho"] += 1
        else:
            self.rho, self.sigma2, self.sigma, self.logdet = old

    def sweep(self):
        self.update_latent()
        self.update_beta()
        self.update_beta_shift()
        self.update_nu()
        self.update_rho()

    # ---- adaptation ------------------------------------------------------

    def adapt(self, window, iteration):
        """Nudge log proposal scales toward the target acceptance rates."""
        cfg = self.config
        self._n_adapt += 1
        gain = 2.0 / math.sqrt(self._n_adapt)
        win = self._win
        lo, hi = _SCALE_BOUNDS
        self.eps_scale = np.clip(
            self.eps_scale * np.exp(gain * (win["eps"] / window - cfg.target_accept_scalar)), lo, hi
        )
        self.lognu_scale = min(max(self.lognu_scale * math.exp(gain * (win["nu"] / window - cfg.target_accept_scalar)), lo), hi)
        self.logitrho_scale = min(
            max(self.logitrho_scale * math.exp(gain * (win["rho"] / window - cfg.target_accept_scalar)), lo), hi
        )
        self.beta_scale = min(max(self.beta_scale * math.exp(gain * (win["beta"] / window - cfg.target_accept_block)), lo), hi)
        self.shift_scale = min(
            max(self.shift_scale * math.exp(gain * (win["shift"] / window - cfg.target_accept_block)), lo), 10.0
        )
        q = self.beta.size
        if q > 1 and iteration >= cfg.burn_in // 4 and len(self._beta_hist) >= 10 * q:
            cov = np.cov(np.array(self._beta_hist).T) + 1e-10 * np.eye(q)
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                chol = None
            if chol is not None:
                # rescale so the overall step size is carried by beta_scale
                if not self._beta_cov_adapted:
                    self.beta_scale = 2.38 / math.sqrt(q)
                    self.shift_scale = 2.38 / math.sqrt(q)
                    self._beta_cov_adapted = True
                self.beta_cov_chol = chol
        for k in ("eps",):
            self._acc[k] += win[k]
            win[k] = np.zeros_like(win[k])
        for k in ("beta", "shift", "nu", "rho"):
            self._acc[k] += win[k]
            win[k] = 0

    _beta_cov_adapted = False

    def flush_counts(self):
        for k in ("eps",):
            self._acc[k] += self._win[k]
            self._win[k] = np.zeros_like(self._win[k])
        for k in ("beta", "shift", "nu", "rho"):
            self._acc[k] += self._win[k]
            self._win[k] = 0

    def reset_counts(self):
        self.flush_counts()
        self._acc = {"eps": np.zeros(self.eps.size), "beta": 0, "shift": 0, "nu": 0, "rho": 0}


def run_chain(model, config=None, rng=None, init=None, progress=None):
    """Run one chain and return the retained draws.

    Parameters
    ----------
    model : TgmrfModel
    config : ChainConfig, optional
    rng : numpy.random.Generator, optional
        Defaults to ``default_rng(config.seed)``.
    init : State, optional
    progress : callable, optional
        Called as ``progress(iteration)`` every 1000 iterations.
    """
    config = config or ChainConfig()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    kern = MetropolisWithinGibbs(model, config, rng, init=init)
    S = config.n_retained
    n, q = model.n_sites, model.n_covariates
    out = {
        "iterations": np.empty(S, dtype=np.int64),
        "beta": np.empty((S, q)),
        "nu": np.empty(S),
        "rho": np.empty(S),
        "epsilon": np.empty((S, n)),
        "lp": np.empty(S),
        "pointwise_loglik": np.empty((S, n)),
    }
    s = 0
    win = config.adapt_window
    for it in range(config.n_iter):
        try:
            kern.sweep()
        except NonConvergentCholesky as exc:
            raise SamplerFailure(f"iteration {it}: {exc}", state=kern.state) from exc
        if it < config.burn_in:
            kern._beta_hist.append(kern.beta.copy())
            if (it + 1) % win == 0:
                kern.adapt(win, it)
            if it + 1 == config.burn_in:
                kern.reset_counts()
        elif (it - config.burn_in) % config.thin == 0:
            lp = kern.log_posterior()
            out["iterations"][s] = it
            out["beta"][s] = kern.beta
            out["nu"][s] = kern.nu
            out["rho"][s] = kern.rho
            out["epsilon"][s] = kern.eps
            out["lp"][s] = lp
            out["pointwise_loglik"][s] = kern.ll if model.use_likelihood else loglik_vector(
                model.likelihood, model.data.y, kern.mu
            )
            s += 1
        if progress is not None and (it + 1) % 1000 == 0:
            progress(it + 1)
    kern.flush_counts()
    n_post = config.n_iter - config.burn_in
    acc = {
        "eps": float(kern._acc["eps"].mean() / n_post),
        "beta": kern._acc["beta"] / n_post,
        "shift": kern._acc["shift"] / n_post,
        "nu": kern._acc["nu"] / n_post,
        "rho": kern._acc["rho"] / n_post,
    }
    return PosteriorChain(family=model.family, acceptance=acc, config=config, **out)


# --------------------------------------------------------------------------
# forward simulation and diagnostics


def simulate_prior_predictive(model, rng, beta=None, nu=None, rho=None):
    """Draw ``(state, y)`` from the joint prior; fixed values override draws."""
    pb, pn, pr = model.priors.sample(model.n_covariates, rng)
    beta = pb if beta is None else np.asarray(beta, dtype=float)
    nu = pn if nu is None else float(nu)
    rho = pr if rho is None else float(rho)
    st = car_structure(model.graph)
    prec_chol = st.factor(rho)
    sigma2 = st.sigma2(rho)
    w = prec_chol.solve_lt(rng.standard_normal(model.n_sites))
    eps = w / np.sqrt(sigma2)
    mu = _means(model, beta, nu, sigma2, eps)
    if model.likelihood is Likelihood.POISSON:
        y = rng.poisson(np.nan_to_num(mu, nan=0.0, posinf=1e12))
    else:
        y = (rng.random(mu.shape) < mu).astype(np.int64)
    return State(beta=beta, nu=nu, rho=rho, epsilon=eps), y


def split_rhat(x):
    """Split-chain potential scale reduction for a single trace."""
    x = np.asarray(x, dtype=float)
    m = x.size // 2
    if m < 2:
        return float("nan")
    halves = np.stack([x[:m], x[m : 2 * m]])
    W = halves.var(axis=1, ddof=1).mean()
    B = m * halves.mean(axis=1).var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var_plus = (m - 1) / m * W + B / m
    return float(math.sqrt(var_plus / W))


def batch_means_se(x, n_batches=50):
    """Monte-Carlo standard error of a trace mean by non-overlapping batches."""
    x = np.asarray(x, dtype=float)
    b = x.size // n_batches
    if b < 1:
        return float(x.std(ddof=1) / math.sqrt(x.size))
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))
