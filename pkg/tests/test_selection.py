import json

import numpy as np
import pytest
from scipy import stats
from scipy.special import gammaln

from tgmrf.errors import MismatchedData
from tgmrf.selection import (
    DEGENERACY_THRESHOLD,
    LpmlReport,
    compare_models,
    compute_lpml,
    evidence_category,
    format_comparison,
    read_report,
    write_report,
)


def poisson_gamma_log_marginal(y, a, b):
    """log p(y) for y ~ Poisson(lam), lam ~ Gamma(a, rate b)."""
    return gammaln(a + y) - gammaln(a) - gammaln(y + 1) + a * np.log(b / (b + 1)) - y * np.log(b + 1)


def conjugate_lpml(a=5.0, b=2.0, y=2, n_draws=50_000, seed=0):
    rng = np.random.default_rng(seed)
    lam = rng.gamma(a + y, 1.0 / (b + 1.0), size=n_draws)
    ll = stats.poisson.logpmf(y, lam)[:, None]
    return compute_lpml(ll).lpml, poisson_gamma_log_marginal(y, a, b)


def test_conjugate_single_site_matches_closed_form():
    est, exact = conjugate_lpml()
    assert est == pytest.approx(exact, abs=0.01)


def test_closed_form_oracle_is_a_pmf():
    ys = np.arange(200)
    assert np.exp(poisson_gamma_log_marginal(ys, 5.0, 2.0)).sum() == pytest.approx(1.0, abs=1e-12)


def test_lpml_is_sum_of_log_cpo():
    rng = np.random.default_rng(1)
    ll = rng.normal(-2.0, 0.3, size=(500, 7))
    rep = compute_lpml(ll)
    # harmonic mean of the likelihood per column
    cpo = 1.0 / np.mean(np.exp(-ll), axis=0)
    assert np.allclose(rep.cpo, cpo, rtol=1e-12)
    assert rep.lpml == pytest.approx(np.log(cpo).sum(), abs=1e-10)
    assert rep.n_sites == 7 and rep.n_draws == 500


def test_constant_likelihood_gives_that_value():
    ll = np.full((200, 3), -1.25)
    assert compute_lpml(ll).lpml == pytest.approx(-3.75, abs=1e-12)


def test_degenerate_site_is_flagged():
    ll = np.full((200, 3), -1.0)
    ll[17, 1] = -40.0  # one draw dominates the inverse-likelihood weight
    rep = compute_lpml(ll)
    assert rep.degenerate_sites == [1]
    assert np.isfinite(rep.lpml)


def test_threshold_is_a_share():
    assert 0.5 < DEGENERACY_THRESHOLD < 1.0


def test_input_checks():
    with pytest.raises(ValueError):
        compute_lpml(np.zeros((99, 2)))
    with pytest.raises(ValueError):
        compute_lpml(np.zeros(200))
    bad = np.zeros((200, 2))
    bad[0, 0] = -np.inf
    with pytest.raises(ValueError):
        compute_lpml(bad)
    assert compute_lpml(np.zeros((10, 2)), min_draws=10).lpml == 0.0


@pytest.mark.parametrize(
    "better, worse, diff, log_bf, category",
    [
        (-482.12, -491.15, 9.03, 18.06, "very strong"),
        (-99.31, -103.51, 4.20, 8.40, "strong"),
    ],
)
def test_comparison_examples(better, worse, diff, log_bf, category):
    reps = [
        LpmlReport(lpml=worse, cpo=np.ones(3), label="B"),
        LpmlReport(lpml=better, cpo=np.ones(3), label="A"),
    ]
    comp = compare_models(reps)
    assert [r.label for r in comp.ranking] == ["A", "B"]
    a, b, d, lbf, cat = comp.pairs[0]
    assert (a, b) == ("A", "B")
    assert d == pytest.approx(diff, abs=1e-9)
    assert lbf == pytest.approx(log_bf, abs=1e-9)
    assert cat == category


@pytest.mark.parametrize(
    "log_bf, category",
    [(0.0, "not worth more than a bare mention"), (1.99, "not worth more than a bare mention"), (2.0, "positive"),
     (5.9, "positive"), (6.0, "strong"), (9.99, "strong"), (10.0, "very strong"), (-12.0, "very strong")],
)
def test_evidence_scale(log_bf, category):
    assert evidence_category(log_bf) == category


def test_ties_keep_input_order():
    reps = [LpmlReport(lpml=-5.0, cpo=np.ones(2), label=l) for l in ("x", "y", "z")]
    comp = compare_models(reps)
    assert [r.label for r in comp.ranking] == ["x", "y", "z"]
    assert comp.best.label == "x"
    assert len(comp.pairs) == 3


def test_mismatched_sites_and_single_report():
    a = LpmlReport(lpml=-1.0, cpo=np.ones(3), label="a")
    b = LpmlReport(lpml=-1.0, cpo=np.ones(4), label="b")
    with pytest.raises(MismatchedData):
        compare_models([a, b])
    with pytest.raises(ValueError):
        compare_models([a])


def test_report_json_roundtrip(tmp_path):
    ll = np.random.default_rng(2).normal(-1, 0.2, size=(300, 4))
    ll[5, 2] = -60.0
    rep = compute_lpml(ll, label="gsh")
    path = tmp_path / "r.json"
    write_report(rep, path)
    back = read_report(path)
    assert back.label == "gsh" and back.n_draws == 300
    assert back.lpml == rep.lpml
    assert np.array_equal(back.cpo, rep.cpo)
    assert back.warnings == rep.warnings
    assert json.loads(path.read_text())["lpml"] == rep.lpml


def test_format_comparison_lists_every_pair():
    reps = [LpmlReport(lpml=v, cpo=np.ones(2), label=l) for l, v in (("ln", -10.0), ("gsh", -3.0), ("gsc", -6.0))]
    text = format_comparison(compare_models(reps))
    lines = text.splitlines()
    assert lines[1].split()[1] == "gsh"
    assert "very strong" in text and "strong" in text
    assert sum(1 for ln in lines if ln.startswith(("gsh", "gsc", "ln"))) == 3
