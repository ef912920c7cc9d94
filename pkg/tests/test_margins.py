import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate
from scipy import special as sc

from tgmrf import margins as mg
from tgmrf.errors import DomainError, MissingSigma2, NonFiniteLinearPredictor, NumericalUnderflow, SupportError
from tgmrf.margins import Kind, MarginalFamily, SiteMarginal

mp.mp.dps = 40

KINDS = list(Kind)


def random_marginal(kind, rng):
    eta = rng.uniform(-2, 2)
    nu = math.exp(rng.uniform(math.log(0.2), math.log(8)))
    s2 = rng.uniform(0.05, 1.5)
    a, b = mg.resolve_params(kind, eta, nu, s2)
    return SiteMarginal(kind, float(a), float(b))


def mp_cdf(m, z):
    """Independent high-precision CDF."""
    z = mp.mpf(z)
    a, b = mp.mpf(float(m.a)), mp.mpf(float(m.b))
    d = m.kind.dist
    if d == "lognormal":
        return mp.ncdf((mp.log(z) - a) / mp.sqrt(b))
    if d == "logitnormal":
        return mp.ncdf((mp.log(z / (1 - z)) - a) / mp.sqrt(b))
    if d == "gamma":
        return mp.gammainc(a, 0, z / b, regularized=True)
    return mp.betainc(a, b, 0, z, regularized=True)


def mp_logpdf(m, z):
    z = mp.mpf(z)
    a, b = mp.mpf(float(m.a)), mp.mpf(float(m.b))
    d = m.kind.dist
    if d == "gamma":
        return (a - 1) * mp.log(z) - z / b - mp.loggamma(a) - a * mp.log(b)
    if d == "beta":
        return (a - 1) * mp.log(z) + (b - 1) * mp.log(1 - z) - (mp.loggamma(a) + mp.loggamma(b) - mp.loggamma(a + b))
    raise ValueError(d)


def grid_gap(m, z):
    """Change in F across the doubles adjacent to ``z``.

    No double can invert F more finely than this, so round-trip checks are
    held to max(tolerance, gap).
    """
    z = np.asarray(z, dtype=float)
    hi = np.nextafter(z, np.inf)
    lo = np.nextafter(z, 0.0)
    top = np.nextafter(1.0, 0.0)
    if m.kind.unit_support:
        hi = np.minimum(hi, top)
    lo = np.maximum(lo, np.nextafter(0.0, 1.0))
    gap = np.abs(mg.cdf(m, hi) - mg.cdf(m, lo))
    # on the last double before a support edge the root may lie beyond it
    gap = np.where(z <= np.nextafter(0.0, 1.0), np.maximum(gap, mg.cdf(m, z)), gap)
    if m.kind.unit_support:
        gap = np.where(z >= top, np.maximum(gap, mg.sf(m, np.minimum(z, top))), gap)
    return gap


def support_integral(m, power=0):
    """Integral of z**power * f(z) over the support of ``m``."""
    kind = m.kind
    if kind.dist == "beta":
        # factor z^(a-1) (1-z)^(b-1) into quad's algebraic endpoint weight
        a, b = float(m.a), float(m.b)

        def g(z):
            z = min(max(z, 1e-300), 1 - 1e-16)
            return z**power * math.exp(mg.log_density(m, z) - (a - 1) * math.log(z) - (b - 1) * math.log1p(-z))

        return integrate.quad(g, 0, 1, weight="alg", wvar=(a - 1, b - 1), limit=400)[0]
    f = lambda z: z**power * math.exp(mg.log_density(m, z))
    if kind.unit_support:
        return integrate.quad(f, 0, 1, limit=400, epsabs=1e-12, epsrel=1e-10)[0]
    # split at 1 so both the spike near 0 and the tail are resolved
    return sum(integrate.quad(f, lo, hi, limit=400, epsabs=1e-12, epsrel=1e-10)[0] for lo, hi in [(0, 1), (1, np.inf)])


# ---- resolve ---------------------------------------------------------------


def test_resolve_examples():
    m = mg.resolve(MarginalFamily("gsc", [0.0], 2.0), [1.0])
    assert (m.a, m.b) == (0.5, 2.0)
    assert mg.mean(m) == 1.0
    m = mg.resolve(MarginalFamily("gsh", [0.0], 2.0), [1.0])
    assert (m.a, m.b) == (0.5, 2.0)
    assert mg.mean(m) == 1.0
    m = mg.resolve(MarginalFamily("beta-logit", [0.0], 2.0), [1.0])
    assert (m.a, m.b) == (1.0, 1.0)
    m = mg.resolve(MarginalFamily("ln", [0.5, 1.0], 2.0), [1.0, 0.5], sigma2=0.25)
    assert (m.a, m.b) == (1.0, 0.5)
    m = mg.resolve(MarginalFamily("ln2", [0.5, 1.0], 2.0), [1.0, 0.5])
    assert (m.a, m.b) == (1.0, 2.0)


def test_resolve_errors():
    with pytest.raises(MissingSigma2):
        mg.resolve(MarginalFamily("ln", [0.0], 1.0), [1.0])
    with pytest.raises(MissingSigma2):
        mg.resolve(MarginalFamily("logit", [0.0], 1.0), [1.0])
    with pytest.raises(NonFiniteLinearPredictor):
        mg.resolve(MarginalFamily("gsh", [1e308, 1e308], 1.0), [10.0, 10.0])
    with pytest.raises(NonFiniteLinearPredictor):
        mg.resolve(MarginalFamily("gsh", [800.0], 1.0), [1.0])
    with pytest.raises(ValueError):
        mg.resolve(MarginalFamily("gsh", [0.0, 1.0], 1.0), [1.0])
    with pytest.raises(ValueError):
        MarginalFamily("gsh", [0.0], 0.0)


def test_kind_tokens():
    assert Kind.parse("beta-logit") is Kind.BETA_LOGIT
    assert Kind.parse("BETA_LOGIT") is Kind.BETA_LOGIT
    assert Kind.parse(" GSH ") is Kind.GSH
    with pytest.raises(ValueError):
        Kind.parse("weibull")
    assert [k.needs_sigma2 for k in (Kind.LN, Kind.LN2, Kind.GSC, Kind.GSH, Kind.BETA_LOGIT)] == [
        True, False, False, False, False
    ]


def test_vector_resolution_matches_scalar():
    X = np.column_stack([np.ones(5), np.linspace(-1, 1, 5)])
    s2 = np.linspace(0.1, 0.5, 5)
    fam = MarginalFamily("ln", [1.0, 0.7], 2.0)
    m = mg.resolve(fam, X, sigma2=s2)
    for i in range(5):
        mi = mg.resolve(fam, X[i], sigma2=s2[i])
        assert m[i].a == mi.a and m[i].b == mi.b
    assert len(m) == 5


# ---- quantile / cdf / density ------------------------------------------------


def test_quantile_examples():
    assert mg.quantile(SiteMarginal(Kind.LN2, 0.0, 1.0), 0.5) == pytest.approx(1.0, abs=1e-15)
    assert mg.quantile(SiteMarginal(Kind.BETA_LOGIT, 1.0, 1.0), 0.3) == pytest.approx(0.3, abs=1e-14)
    m = SiteMarginal(Kind.GSH, 0.5, 2.0)
    v = mg.quantile(m, 0.5)
    dens = lambda z: math.exp(mg.log_density(m, z))
    # split at v/2 to keep the 1/sqrt(z) spike in its own panel
    F = integrate.quad(dens, 0, v / 2, epsabs=1e-13)[0] + integrate.quad(dens, v / 2, v, epsabs=1e-13)[0]
    assert F == pytest.approx(0.5, abs=1e-10)


def test_quantile_domain():
    m = SiteMarginal(Kind.GSH, 1.0, 1.0)
    for u in (0.0, 1.0, -0.1, 1.2, np.nan):
        with pytest.raises(DomainError):
            mg.quantile(m, u)


def test_log_density_examples():
    assert mg.log_density(SiteMarginal(Kind.BETA_LOGIT, 1.0, 1.0), 0.7) == 0.0
    assert mg.log_density(SiteMarginal(Kind.LN2, 0.0, 1.0), 1.0) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)
    m = SiteMarginal(Kind.GSC, 0.5, 2.0)
    assert mg.log_density(m, 2.0) == pytest.approx(float(mp_logpdf(m, 2.0)), abs=1e-14)


def test_cdf_examples():
    assert mg.cdf(SiteMarginal(Kind.BETA_LOGIT, 1.0, 1.0), 0.25) == pytest.approx(0.25, abs=1e-15)
    m = SiteMarginal(Kind.GSC, 0.5, 2.0)
    F = integrate.quad(lambda z: math.exp(mg.log_density(m, z)), 0, 0.5, epsabs=1e-13)[0]
    assert mg.cdf(m, 0.5) == pytest.approx(F, abs=1e-10)
    assert mg.cdf(m, 0.5) == pytest.approx(float(mp_cdf(m, 0.5)), abs=1e-14)


@pytest.mark.parametrize("kind", KINDS)
def test_support_errors(kind):
    m = random_marginal(kind, np.random.default_rng(0))
    bad = [0.0, -1.0, np.inf, np.nan] + ([1.0, 1.5] if kind.unit_support else [])
    for z in bad:
        for f in (mg.cdf, mg.sf, mg.log_density):
            with pytest.raises(SupportError):
                f(m, z)


@pytest.mark.parametrize("kind", KINDS)
def test_round_trip(kind):
    rng = np.random.default_rng(hash(kind.value) % 2**32)
    u = np.concatenate([[1e-6], np.arange(1, 100) / 100, [1 - 1e-6]])
    worst = 0.0
    for _ in range(100):
        m = random_marginal(kind, rng)
        z = mg.quantile(m, u)
        assert np.all(np.diff(z) >= 0)
        # strictly increasing wherever neighbouring roots are distinct doubles
        resolved = grid_gap(m, z) < 1e-8
        assert np.all(np.diff(z)[resolved[1:] & resolved[:-1]] > 0)
        err = np.abs(mg.cdf(m, z) - u)
        worst = max(worst, np.max(err[resolved]))
        assert np.all(err <= np.maximum(1e-8, grid_gap(m, z)))
    assert worst <= 1e-8


@pytest.mark.parametrize("kind", KINDS)
def test_quantile_against_mpmath(kind):
    rng = np.random.default_rng(7)
    for _ in range(5):
        m = random_marginal(kind, rng)
        for u in (1e-9, 0.02, 0.5, 0.97, 1 - 1e-9):
            z = float(mg.quantile(m, u))
            tol = max(1e-10, float(grid_gap(m, z)))
            assert abs(float(mp_cdf(m, z)) - u) <= tol


@pytest.mark.parametrize("kind", KINDS)
def test_normalisation(kind):
    rng = np.random.default_rng(99)
    for _ in range(20):
        m = random_marginal(kind, rng)
        total = support_integral(m)
        assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("kind", KINDS)
def test_analytic_mean(kind):
    rng = np.random.default_rng(5)
    for _ in range(5):
        m = random_marginal(kind, rng)
        q = support_integral(m, power=1)
        assert float(mg.mean(m)) == pytest.approx(q, rel=1e-7)


def test_gamma_means_identical():
    rng = np.random.default_rng(3)
    for _ in range(100):
        eta, nu = rng.uniform(-3, 3), rng.uniform(0.1, 10)
        gsc = SiteMarginal(Kind.GSC, *mg.resolve_params(Kind.GSC, eta, nu))
        gsh = SiteMarginal(Kind.GSH, *mg.resolve_params(Kind.GSH, eta, nu))
        assert mg.mean(gsc) == pytest.approx(math.exp(eta), rel=1e-15)
        assert mg.mean(gsh) == pytest.approx(math.exp(eta), rel=1e-15)


def test_gsh_mean_monotone_in_beta():
    x = np.array([1.0, 0.8, 2.0])
    base = np.array([0.2, -0.3, 0.5])
    m0 = mg.mean(mg.resolve(MarginalFamily("gsh", base, 2.0), x))
    for k in range(3):
        b = base.copy()
        b[k] += 0.1
        assert mg.mean(mg.resolve(MarginalFamily("gsh", b, 2.0), x)) > m0


# ---- normal-score kernels -------------------------------------------------------


@pytest.mark.parametrize("kind", [Kind.GSC, Kind.GSH, Kind.BETA_LOGIT])
def test_normal_score_tails_against_mpmath(kind):
    rng = np.random.default_rng(11)
    eps = np.array([-7.5, -5.0, -2.0, -0.3, 0.0, 0.3, 2.0, 5.0, 7.5])
    for _ in range(4):
        m = random_marginal(kind, rng)
        a = np.full(eps.size, float(m.a))
        b = np.full(eps.size, float(m.b))
        z = mg.from_normal_score(kind, eps, a, b)
        for e, zi in zip(eps, z):
            if zi <= 2 * np.finfo(float).tiny:
                continue
            target = mp.ncdf(e) if e <= 0 else mp.ncdf(-e)
            got = mp_cdf(m, zi) if e <= 0 else 1 - mp_cdf(m, zi)
            tol = max(1e-8, float(grid_gap(m, zi)) / float(target))
            assert abs(got / target - 1) < tol
        back = mg.normal_score(kind, z, a, b)
        tails = sc.ndtr(-np.abs(eps))
        ok = (z > 1e-300) & (grid_gap(m, z) < 1e-9 * tails)
        np.testing.assert_allclose(back[ok], eps[ok], atol=1e-7)


def test_lognormal_scores_exact():
    eps = np.linspace(-8, 8, 33)
    z = mg.from_normal_score(Kind.LN, eps, 0.3, 0.5)
    np.testing.assert_allclose(z, np.exp(0.3 + math.sqrt(0.5) * eps), rtol=1e-15)
    np.testing.assert_allclose(mg.normal_score(Kind.LN, z, 0.3, 0.5), eps, atol=1e-13)


def test_clamp_behaviour():
    m = SiteMarginal(Kind.GSH, 2.0, 1.0)
    # u below the clamp evaluates as the clamp
    assert mg.quantile(m, 1e-300) == mg.quantile(m, mg.U_CLAMP)
    z = mg.from_normal_score(Kind.GSH, np.array([-40.0, 40.0]), np.array([2.0, 2.0]), np.array([1.0, 1.0]))
    assert np.all(np.isfinite(z)) and np.all(z > 0)
    with pytest.raises(NumericalUnderflow):
        mg.normal_score(Kind.GSH, np.array([1e-40]), np.array([2.0]), np.array([1.0]), strict=True)


@pytest.mark.parametrize("a,b", [(5.0, 0.5), (2.0, 0.3), (40.0, 1.0)])
def test_beta_roots_near_one(a, b):
    # upper-tail roots are found as 1 - y from the reflected tail, so the
    # tail probability is accurate up to the spacing of doubles below one
    m = SiteMarginal(Kind.BETA_LOGIT, a, b)
    for e in (1.0, 3.0, 6.0):
        z = mg.from_normal_score(Kind.BETA_LOGIT, np.array([e]), np.array([a]), np.array([b]))[0]
        assert 0.5 < z < 1.0
        tail = float(mp.betainc(mp.mpf(a), mp.mpf(b), z, 1, regularized=True))
        target = float(mp.ncdf(-e))
        assert abs(tail / target - 1) <= max(1e-8, float(grid_gap(m, z)) / target)


def test_beta_unrepresentable_root_saturates():
    # Beta(5, 0.05) puts its 84% quantile at 1 - 2e-17, which rounds to one;
    # the kernel returns the largest double below one instead
    z = mg.from_normal_score(Kind.BETA_LOGIT, np.array([1.0]), np.array([5.0]), np.array([0.05]))[0]
    assert z == np.nextafter(1.0, 0.0)


def test_sf_complements_cdf():
    rng = np.random.default_rng(2)
    for kind in KINDS:
        m = random_marginal(kind, rng)
        z = mg.quantile(m, np.array([0.1, 0.5, 0.9]))
        np.testing.assert_allclose(mg.cdf(m, z) + mg.sf(m, z), 1.0, atol=1e-15)
