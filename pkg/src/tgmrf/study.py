"""Simulation studies: generate under true models, fit candidates, compare.

Every (true model, replicate) pair gets its own random stream derived from
``(seed, true-model index, replicate)``, and each candidate fit another one
below it, so results do not depend on execution order or on how work is
spread over processes.  Finished fits can be cached on disk as JSON; a
rerun of the same design picks them up instead of refitting.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import margins as mg
from .errors import TgmrfError
from .glmm import Dataset, Likelihood
from .lattice import build_lfdp_lattice, load_graph
from .mcmc import ChainConfig, Priors, TgmrfModel, run_chain, simulate_prior_predictive
from .selection import compute_lpml

__all__ = [
    "TrueModel",
    "StudyDesign",
    "FitRecord",
    "StudyResult",
    "run_study",
    "simulate_replicate",
    "lpml_difference_summary",
    "poisson_design",
    "bernoulli_design",
    "read_design",
    "write_outputs",
    "REDUCED_CHAIN",
    "PAPER_CHAIN",
]

REDUCED_CHAIN = ChainConfig(n_iter=10_000, burn_in=3_000, thin=5)
PAPER_CHAIN = ChainConfig(n_iter=20_000, burn_in=5_000, thin=5)

# bump when sampler changes alter fit results, so stale caches are ignored
CACHE_FORMAT = 1


@dataclass(frozen=True)
class TrueModel:
    name: str
    family: mg.Kind
    beta: tuple
    nu: float
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "family", mg.Kind.parse(self.family))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if not self.nu > 0 or not 0 <= self.rho < 1:
            raise ValueError(f"{self.name}: need nu > 0 and 0 <= rho < 1")


@dataclass(frozen=True, eq=False)
class StudyDesign:
    """Everything that determines a study's results.

    ``covariates`` counts the standard-normal columns next to the intercept.
    With ``redraw_covariates`` they are drawn afresh for every replicate,
    otherwise once per study.
    """

    graph: object
    likelihood: Likelihood
    true_models: tuple
    candidates: tuple
    n_replicates: int = 25
    chain: ChainConfig = REDUCED_CHAIN
    priors: Priors = Priors()
    covariates: int = 1
    redraw_covariates: bool = True
    seed: int = 0
    graph_ref: str = "lfdp"

    def __post_init__(self):
        object.__setattr__(self, "likelihood", Likelihood.parse(self.likelihood))
        object.__setattr__(self, "true_models", tuple(self.true_models))
        object.__setattr__(self, "candidates", tuple(mg.Kind.parse(c) for c in self.candidates))
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if not self.true_models or not self.candidates:
            raise ValueError("need at least one true model and one candidate")
        q = self.covariates + 1
        for tm in self.true_models:
            if len(tm.beta) != q:
                raise ValueError(f"{tm.name}: beta has {len(tm.beta)} entries, expected {q}")
            unit = tm.family.unit_support
            if unit != (self.likelihood is Likelihood.BERNOULLI):
                raise ValueError(f"{tm.name}: family {tm.family.value} does not suit {self.likelihood.value}")

    def key(self):
        """Digest of every setting that affects a fit, for result caching."""
        payload = {
            "graph": [self.graph_ref, self.graph.n_sites, len(self.graph.edges())],
            "likelihood": self.likelihood.value,
            "chain": asdict(self.chain),
            "priors": asdict(self.priors),
            "covariates": self.covariates,
            "redraw": self.redraw_covariates,
            "seed": self.seed,
            "true_models": [[t.name, t.family.value, list(t.beta), t.nu, t.rho] for t in self.true_models],
            "candidates": [c.value for c in self.candidates],
            "format": CACHE_FORMAT,
        }
        return hashlib.sha1(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class FitRecord:
    true_model: str
    replicate: int
    family: str
    means: dict = field(default_factory=dict)
    lpml: float = float("nan")
    n_warnings: int = 0
    acceptance: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


# --------------------------------------------------------------------------
# random streams and data generation


def _seed_seq(design, t_index, replicate, fit=None):
    words = [design.seed, t_index, replicate]
    if fit is not None:
        words.append(fit + 1)
    return np.random.SeedSequence(words)


def _covariates(design, rng):
    n = design.graph.n_sites
    if not design.redraw_covariates:
        # one fixed design matrix per study
        rng = np.random.default_rng(np.random.SeedSequence([design.seed, 2**31 - 1]))
    Z = rng.standard_normal((n, design.covariates))
    return np.column_stack([np.ones(n), Z])


def simulate_replicate(design, t_index, replicate):
    """Dataset for one replicate of one true model (deterministic)."""
    tm = design.true_models[t_index]
    rng = np.random.default_rng(_seed_seq(design, t_index, replicate))
    X = _covariates(design, rng)
    placeholder = Dataset(np.zeros(design.graph.n_sites, dtype=int), X, design.likelihood, design.graph_ref)
    model = TgmrfModel(design.graph, tm.family, placeholder, design.priors)
    _, y = simulate_prior_predictive(model, rng, beta=tm.beta, nu=tm.nu, rho=tm.rho)
    return Dataset(y, X, design.likelihood, design.graph_ref)


def _fit_one(design, t_index, replicate, c_index, data):
    tm = design.true_models[t_index]
    fam = design.candidates[c_index]
    rec = FitRecord(true_model=tm.name, replicate=replicate, family=fam.value)
    try:
        model = TgmrfModel(design.graph, fam, data, design.priors)
        rng = np.random.default_rng(_seed_seq(design, t_index, replicate, c_index))
        chain = run_chain(model, design.chain, rng=rng)
        rep = compute_lpml(chain)
        rec.means = {k: float(v.mean()) for k, v in chain.parameters().items()}
        rec.lpml = rep.lpml
        rec.n_warnings = len(rep.warnings)
        rec.acceptance = {k: float(v) for k, v in chain.acceptance.items()}
    except (TgmrfError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def _cache_path(cache_dir, design, tm, replicate, fam):
    return Path(cache_dir) / design.key() / f"{tm.name}_r{replicate:03d}_{fam.value}.json"


def _replicate_task(args):
    design, t_index, replicate, cache_dir = args
    tm = design.true_models[t_index]
    out, todo = [], []
    for c, fam in enumerate(design.candidates):
        path = _cache_path(cache_dir, design, tm, replicate, fam) if cache_dir else None
        if path is not None and path.exists():
            out.append(FitRecord(**json.loads(path.read_text())))
        else:
            out.append(None)
            todo.append(c)
    if todo:
        data = simulate_replicate(design, t_index, replicate)
        for c in todo:
            rec = _fit_one(design, t_index, replicate, c, data)
            out[c] = rec
            if cache_dir:
                path = _cache_path(cache_dir, design, tm, replicate, design.candidates[c])
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp")
                tmp.write_text(json.dumps(asdict(rec)))
                tmp.replace(path)
    return out


# --------------------------------------------------------------------------
# results


@dataclass
class StudyResult:
    design: StudyDesign
    records: list

    @property
    def failures(self):
        return [r for r in self.records if not r.ok]

    def _by_replicate(self, true_name):
        reps = {}
        for r in self.records:
            if r.true_model == true_name:
                reps.setdefault(r.replicate, {})[r.family] = r
        return reps

    def correct_family(self, tm):
        """Candidate matching the generating family, if any."""
        return tm.family.value if tm.family in self.design.candidates else None

    def selection_table(self):
        """``{true name: {family: count}}`` of LPML winners.

        Replicates with any failed fit are left out, so each row sums to the
        number of replicates without failures.
        """
        table = {}
        for tm in self.design.true_models:
            row = {c.value: 0 for c in self.design.candidates}
            for fits in self._by_replicate(tm.name).values():
                if len(fits) != len(self.design.candidates) or not all(f.ok for f in fits.values()):
                    continue
                best = max(self.design.candidates, key=lambda c: (fits[c.value].lpml, -self.design.candidates.index(c)))
                row[best.value] += 1
            table[tm.name] = row
        return table

    def summary_rows(self):
        """Across-replicate mean and SD of posterior means and of LPML."""
        rows = []
        for tm in self.design.true_models:
            truth = {f"beta{k}": b for k, b in enumerate(tm.beta)}
            truth.update(nu=tm.nu, rho=tm.rho)
            for c in self.design.candidates:
                recs = [r for r in self.records if r.true_model == tm.name and r.family == c.value and r.ok]
                for p in list(truth) + ["lpml"]:
                    vals = np.array([r.lpml if p == "lpml" else r.means[p] for r in recs])
                    rows.append(
                        {
                            "true_model": tm.name,
                            "fitted": c.value,
                            "parameter": p,
                            "truth": truth.get(p, float("nan")),
                            "mean": float(vals.mean()) if vals.size else float("nan"),
                            "sd": float(vals.std(ddof=1)) if vals.size > 1 else float("nan"),
                            "n": int(vals.size),
                        }
                    )
        return rows

    def lpml_differences(self):
        """Per-replicate ``LPML(correct) - LPML(other)`` records."""
        out = []
        for tm in self.design.true_models:
            correct = self.correct_family(tm)
            if correct is None:
                continue
            for rep, fits in sorted(self._by_replicate(tm.name).items()):
                ref = fits.get(correct)
                if ref is None or not ref.ok:
                    continue
                for fam, rec in fits.items():
                    if fam == correct or not rec.ok:
                        continue
                    out.append(
                        {"true_model": tm.name, "correct": correct, "other": fam, "replicate": rep, "diff": ref.lpml - rec.lpml}
                    )
        return out


def run_study(design, cache_dir=None, workers=1, progress=None):
    """Run every (true model, replicate) and collect the fit records.

    Parameters
    ----------
    design : StudyDesign
    cache_dir : path, optional
        Directory for per-fit JSON records; existing records are reused.
    workers : int
        Processes used for replicates; results do not depend on it.
    progress : callable, optional
        Called with each finished list of replicate records.
    """
    tasks = [
        (design, t, r, cache_dir) for t in range(len(design.true_models)) for r in range(design.n_replicates)
    ]
    records = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for recs in ex.map(_replicate_task, tasks):
                records.extend(recs)
                if progress:
                    progress(recs)
    else:
        for task in tasks:
            recs = _replicate_task(task)
            records.extend(recs)
            if progress:
                progress(recs)
    bad = [r for r in records if not r.ok]
    if bad:
        warnings.warn(
            f"{len(bad)} fit(s) failed and were excluded: "
            + "; ".join(f"{r.true_model}/r{r.replicate}/{r.family}: {r.error}" for r in bad[:5]),
            RuntimeWarning,
            stacklevel=2,
        )
    return StudyResult(design=design, records=records)


def lpml_difference_summary(result):
    """Five-number summary of ``LPML(correct) - LPML(other)`` per pair."""
    groups = {}
    for d in result.lpml_differences():
        groups.setdefault((d["true_model"], d["correct"], d["other"]), []).append(d["diff"])
    out = {}
    for key, vals in groups.items():
        q = np.quantile(np.array(vals), [0.0, 0.25, 0.5, 0.75, 1.0])
        out[key] = dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)), n=len(vals))
    return out


# --------------------------------------------------------------------------
# standard designs


def poisson_design(n_replicates=25, chain=REDUCED_CHAIN, seed=2024, graph=None, priors=Priors()):
    """Four Poisson generators fitted with LN, GSC and GSH."""
    beta = (1.0, 0.7)
    truths = (
        TrueModel("LN1", "ln", beta, 2.0, 0.8),
        TrueModel("LN2", "ln", beta, 6.5, 0.8),
        TrueModel("GSC", "gsc", beta, 2.0, 0.8),
        TrueModel("GSH", "gsh", beta, 2.0, 0.8),
    )
    return StudyDesign(
        graph=graph or build_lfdp_lattice(),
        likelihood="poisson",
        true_models=truths,
        candidates=("ln", "gsc", "gsh"),
        n_replicates=n_replicates,
        chain=chain,
        priors=priors,
        seed=seed,
    )


def bernoulli_design(n_replicates=25, chain=REDUCED_CHAIN, seed=2025, graph=None, priors=Priors()):
    """Two logit generators and one beta-logit, fitted with logit and beta-logit."""
    beta = (1.0, 0.7)
    truths = (
        TrueModel("logit1", "logit", beta, 2.0, 0.8),
        TrueModel("logit2", "logit", beta, 1.0, 0.8),
        TrueModel("beta-logit", "beta-logit", beta, 2.0, 0.8),
    )
    return StudyDesign(
        graph=graph or build_lfdp_lattice(),
        likelihood="bernoulli",
        true_models=truths,
        candidates=("logit", "beta-logit"),
        n_replicates=n_replicates,
        chain=chain,
        priors=priors,
        seed=seed,
    )


# --------------------------------------------------------------------------
# config files and outputs


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def read_design(path, paper_scale=False, seed=None):
    """Build a design from an INI file.

    Sections: ``[study]`` (graph, likelihood, candidates, n_replicates,
    covariates, redraw_covariates, seed), optional ``[chain]`` and
    ``[priors]``, and one ``[true <name>]`` section per generator with
    family, beta, nu and rho.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not cp.read(path):
        raise FileNotFoundError(path)
    st = cp["study"]
    base = PAPER_CHAIN if paper_scale else REDUCED_CHAIN
    chain_kw = {}
    if cp.has_section("chain"):
        for k, v in cp["chain"].items():
            chain_kw[k] = float(v) if k.startswith("target") else int(v)
    chain = ChainConfig(**{**asdict(base), **chain_kw})
    priors = Priors(**{k: float(v) for k, v in cp["priors"].items()}) if cp.has_section("priors") else Priors()
    truths = []
    for sec in cp.sections():
        if sec.startswith("true "):
            s = cp[sec]
            truths.append(TrueModel(sec[5:].strip(), s["family"], _floats(s["beta"]), float(s["nu"]), float(s["rho"])))
    graph_ref = st.get("graph", "lfdp")
    n_rep = st.getint("n_replicates", 100 if paper_scale else 25)
    if paper_scale:
        n_rep = max(n_rep, 100)
    return StudyDesign(
        graph=load_graph(graph_ref),
        likelihood=st.get("likelihood", "poisson"),
        true_models=tuple(truths),
        candidates=tuple(c.strip() for c in st["candidates"].split(",")),
        n_replicates=n_rep,
        chain=chain,
        priors=priors,
        covariates=st.getint("covariates", 1),
        redraw_covariates=st.getboolean("redraw_covariates", True),
        seed=st.getint("seed", 0) if seed is None else int(seed),
        graph_ref=graph_ref,
    )


def write_outputs(result, out_dir):
    """Write summary.csv, selection.csv and lpml_diffs.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = result.summary_rows()
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["true_model", "fitted", "parameter", "truth", "mean", "sd", "n"])
        w.writeheader()
        w.writerows(rows)
    cands = [c.value for c in result.design.candidates]
    with open(out / "selection.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true_model"] + cands + ["failures"])
        n_fail = {}
        for r in result.failures:
            n_fail.setdefault(r.true_model, set()).add(r.replicate)
        for name, row in result.selection_table().items():
            w.writerow([name] + [row[c] for c in cands] + [len(n_fail.get(name, ()))])
    with open(out / "lpml_diffs.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["true_model", "correct", "other", "replicate", "diff"])
        w.writeheader()
        w.writerows(result.lpml_differences())
    summ = lpml_difference_summary(result)
    with open(out / "lpml_diff_quantiles.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true_model", "correct", "other", "n", "min", "q1", "median", "q3", "max"])
        for (t, c, o), q in summ.items():
            w.writerow([t, c, o, q["n"], q["min"], q["q1"], q["median"], q["q3"], q["max"]])
    return out

