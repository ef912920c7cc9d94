"""Model comparison by the log pseudo-marginal likelihood (LPML).

The conditional predictive ordinate of site ``i`` is the harmonic mean of
its likelihood over posterior draws,

    log cpo_i = log S - logsumexp_s(-l_is),

and ``LPML = sum_i log cpo_i``.  Twice an LPML difference approximates a
log Bayes factor, which is labelled on the Kass-Raftery scale.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import MismatchedData

__all__ = [
    "DEGENERACY_THRESHOLD",
    "LpmlReport",
    "Comparison",
    "compute_lpml",
    "compare_models",
    "evidence_category",
    "format_comparison",
    "read_report",
    "write_report",
]

# a site is flagged when one draw carries more than this share of the
# normalised inverse-likelihood weight
DEGENERACY_THRESHOLD = 0.99

_MIN_DRAWS = 100


@dataclass(frozen=True)
class LpmlReport:
    lpml: float
    cpo: np.ndarray
    warnings: tuple = ()
    label: str = ""
    n_draws: int = 0

    @property
    def n_sites(self):
        return self.cpo.size

    @property
    def degenerate_sites(self):
        out = []
        for w in self.warnings:
            if w.startswith("degenerate CPO weights at site "):
                out.append(int(w.rsplit(" ", 1)[1]))
        return out

    def to_json(self):
        return {
            "label": self.label,
            "lpml": self.lpml,
            "cpo": [float(c) for c in self.cpo],
            "warnings": list(self.warnings),
            "n_draws": self.n_draws,
        }


def compute_lpml(chain, label=None, min_draws=_MIN_DRAWS):
    """LPML from a chain (or a raw ``(draws, sites)`` log-likelihood matrix).

    Parameters
    ----------
    chain : PosteriorChain or array_like
    label : str, optional
        Defaults to the chain's family name.
    min_draws : int
        Fewer retained draws raise ``ValueError``.
    """
    if hasattr(chain, "pointwise_loglik"):
        ll = np.asarray(chain.pointwise_loglik, dtype=float)
        if label is None:
            label = getattr(chain.family, "value", str(chain.family))
    else:
        ll = np.asarray(chain, dtype=float)
    if ll.ndim != 2:
        raise ValueError("pointwise log-likelihood must be (draws, sites)")
    S = ll.shape[0]
    if S < min_draws:
        raise ValueError(f"need at least {min_draws} retained draws, got {S}")
    if not np.all(np.isfinite(ll)):
        raise ValueError("pointwise log-likelihood contains non-finite values")
    neg = -ll
    lse = logsumexp(neg, axis=0)
    log_cpo = np.log(S) - lse
    # largest normalised weight exp(-l_is) / sum_s exp(-l_is) per site
    max_w = np.exp(neg.max(axis=0) - lse)
    warnings = tuple(
        f"degenerate CPO weights at site {i}" for i in np.flatnonzero(max_w > DEGENERACY_THRESHOLD)
    )
    cpo = np.exp(log_cpo)
    return LpmlReport(lpml=float(np.sum(log_cpo)), cpo=cpo, warnings=warnings, label=label or "", n_draws=S)


def evidence_category(log_bf):
    """Kass-Raftery label for a log Bayes factor (2 x LPML difference)."""
    x = abs(float(log_bf))
    if x >= 10:
        return "very strong"
    if x >= 6:
        return "strong"
    if x >= 2:
        return "positive"
    return "not worth more than a bare mention"


@dataclass(frozen=True)
class Comparison:
    """Reports ranked by descending LPML plus pairwise approximate log BFs."""

    ranking: list
    pairs: list = field(default_factory=list)

    @property
    def best(self):
        return self.ranking[0]


def compare_models(reports):
    """Rank reports by LPML; ties keep input order.

    Each pair entry is ``(better, worse, lpml_diff, log_bf, category)`` with
    ``better`` ranked above ``worse``.
    """
    reports = list(reports)
    if len(reports) < 2:
        raise ValueError("need at least two reports to compare")
    n = reports[0].n_sites
    for r in reports[1:]:
        if r.n_sites != n:
            raise MismatchedData(f"reports cover {n} and {r.n_sites} sites")
    order = sorted(range(len(reports)), key=lambda k: (-reports[k].lpml, k))
    ranking = [reports[k] for k in order]
    pairs = []
    for i in range(len(ranking)):
        for j in range(i + 1, len(ranking)):
            d = ranking[i].lpml - ranking[j].lpml
            pairs.append((ranking[i].label, ranking[j].label, d, 2.0 * d, evidence_category(2.0 * d)))
    return Comparison(ranking=ranking, pairs=pairs)


def format_comparison(comp):
    """Plain-text ranking and pairwise table."""
    width = max(8, *(len(r.label) for r in comp.ranking))
    lines = [f"{'rank':>4}  {'model':<{width}}  {'LPML':>12}  warnings"]
    for k, r in enumerate(comp.ranking, 1):
        lines.append(f"{k:>4}  {r.label:<{width}}  {r.lpml:>12.2f}  {len(r.warnings)}")
    lines.append("")
    lines.append(f"{'better':<{width}}  {'worse':<{width}}  {'dLPML':>8}  {'logBF':>8}  evidence")
    for a, b, d, lbf, cat in comp.pairs:
        lines.append(f"{a:<{width}}  {b:<{width}}  {d:>8.2f}  {lbf:>8.2f}  {cat}")
    return "\n".join(lines)


def write_report(report, path):
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2)


def read_report(path):
    with open(path) as fh:
        d = json.load(fh)
    return LpmlReport(
        lpml=float(d["lpml"]),
        cpo=np.asarray(d["cpo"], dtype=float),
        warnings=tuple(d.get("warnings", ())),
        label=d.get("label", ""),
        n_draws=int(d.get("n_draws", 0)),
    )
