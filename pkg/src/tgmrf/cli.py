"""Command-line entry point: ``tgmrf simulate | fit | compare | study``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import margins as mg
from .glmm import Dataset, Likelihood, read_dataset, write_dataset
from .lattice import load_graph
from .mcmc import ChainConfig, TgmrfModel, run_chain, simulate_prior_predictive
from .selection import compare_models, compute_lpml, format_comparison, read_report, write_report
from .study import (
    PAPER_CHAIN,
    REDUCED_CHAIN,
    bernoulli_design,
    lpml_difference_summary,
    poisson_design,
    read_design,
    run_study,
    write_outputs,
)

FAMILIES = [k.value for k in mg.Kind]


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _add_chain_flags(p, defaults):
    p.add_argument("--iters", type=int, default=None, help=f"iterations (default {defaults.n_iter})")
    p.add_argument("--burnin", type=int, default=None, help=f"burn-in iterations (default {defaults.burn_in})")
    p.add_argument("--thin", type=int, default=None, help=f"thinning interval (default {defaults.thin})")


def _chain_config(args, base, seed=None):
    kw = {}
    if args.iters is not None:
        kw["n_iter"] = args.iters
    if args.burnin is not None:
        kw["burn_in"] = args.burnin
    elif args.iters is not None and args.iters <= base.burn_in:
        kw["burn_in"] = args.iters // 4
    if args.thin is not None:
        kw["thin"] = args.thin
    if seed is not None:
        kw["seed"] = seed
    return replace(base, **kw)


def cmd_simulate(args):
    graph = load_graph(args.graph)
    rng = np.random.default_rng(args.seed)
    n = graph.n_sites
    X = np.column_stack([np.ones(n), rng.standard_normal((n, args.covariates))])
    beta = _floats(args.beta)
    if len(beta) != X.shape[1]:
        raise SystemExit(f"--beta needs {X.shape[1]} values (intercept + {args.covariates} covariates)")
    placeholder = Dataset(np.zeros(n, dtype=int), X, args.likelihood, args.graph)
    model = TgmrfModel(graph, args.family, placeholder)
    state, y = simulate_prior_predictive(model, rng, beta=beta, nu=args.nu, rho=args.rho)
    data = Dataset(y, X, args.likelihood, args.graph)
    write_dataset(data, args.out)
    if args.latent_out:
        np.savetxt(args.latent_out, state.epsilon, header="eps", comments="")
    print(f"wrote {n} sites to {args.out} (mean response {y.mean():.3f})")
    return 0


def cmd_fit(args):
    graph = load_graph(args.graph)
    data = read_dataset(args.data, args.likelihood, args.graph)
    model = TgmrfModel(graph, args.family, data)
    cfg = _chain_config(args, ChainConfig(), seed=args.seed)
    chain = run_chain(model, cfg)
    out = Path(args.out)
    chain.write_csv(out)
    if args.save_latent:
        chain.write_latent_csv(args.save_latent)
    report = compute_lpml(chain, label=args.label or model.family.value)
    lpml_path = Path(args.lpml) if args.lpml else out.with_suffix(".lpml.json")
    write_report(report, lpml_path)
    print(f"{'param':>8} {'mean':>10} {'sd':>10} {'rhat':>7}")
    for k, v in chain.summary().items():
        print(f"{k:>8} {v['mean']:>10.4f} {v['sd']:>10.4f} {v['rhat']:>7.3f}")
    acc = ", ".join(f"{k} {v:.2f}" for k, v in chain.acceptance.items())
    print(f"acceptance: {acc}")
    print(f"LPML {report.lpml:.3f} ({len(report.warnings)} warnings) -> {lpml_path}")
    return 0


def cmd_compare(args):
    reports = []
    for path in args.reports:
        r = read_report(path)
        if not r.label:
            r = replace(r, label=Path(path).stem)
        reports.append(r)
    comp = compare_models(reports)
    print(format_comparison(comp))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(
                {
                    "ranking": [{"label": r.label, "lpml": r.lpml} for r in comp.ranking],
                    "pairs": [
                        {"better": a, "worse": b, "lpml_diff": d, "log_bf": lbf, "category": c}
                        for a, b, d, lbf, c in comp.pairs
                    ],
                },
                fh,
                indent=2,
            )
    return 0


def cmd_study(args):
    base = PAPER_CHAIN if args.paper_scale else REDUCED_CHAIN
    if args.config:
        design = read_design(args.config, paper_scale=args.paper_scale, seed=args.seed)
    else:
        make = poisson_design if args.design == "poisson" else bernoulli_design
        kw = {} if args.seed is None else {"seed": args.seed}
        design = make(n_replicates=100 if args.paper_scale else 25, chain=base, graph=load_graph(args.graph), **kw)
    chain = _chain_config(args, design.chain)
    design = replace(design, chain=chain)
    if args.replicates is not None:
        design = replace(design, n_replicates=args.replicates)
    total = len(design.true_models) * design.n_replicates
    done = [0]

    def progress(recs):
        done[0] += 1
        r = recs[0]
        lp = " ".join(f"{x.family}={x.lpml:.1f}" if x.ok else f"{x.family}=FAILED" for x in recs)
        print(f"[{done[0]}/{total}] {r.true_model} r{r.replicate}: {lp}", flush=True)

    result = run_study(design, cache_dir=args.cache, workers=args.workers, progress=progress)
    out = write_outputs(result, args.out)
    print("\nselection frequencies")
    for name, row in result.selection_table().items():
        print(f"  {name:>12}: " + "  ".join(f"{k} {v}" for k, v in row.items()))
    print("\nLPML(correct) - LPML(other)")
    for (t, c, o), q in lpml_difference_summary(result).items():
        print(f"  {t:>12} {c}-{o}: q1 {q['q1']:.2f}  median {q['median']:.2f}  q3 {q['q3']:.2f}")
    print(f"\noutputs in {out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="tgmrf", description="Transformed Gaussian Markov random field models")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a dataset CSV from a true model")
    p.add_argument("--graph", default="lfdp", help="graph file or 'lfdp'")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--likelihood", default="poisson", choices=[x.value for x in Likelihood])
    p.add_argument("--beta", default="1.0,0.7", help="comma-separated coefficients, intercept first")
    p.add_argument("--nu", type=float, default=2.0)
    p.add_argument("--rho", type=float, default=0.8)
    p.add_argument("--covariates", type=int, default=1, help="standard-normal covariates besides the intercept")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset CSV to write")
    p.add_argument("--latent-out", help="optionally write the latent scores here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one family to one dataset")
    p.add_argument("--graph", default="lfdp")
    p.add_argument("--data", required=True, help="dataset CSV (site,y,x1,...)")
    p.add_argument("--likelihood", default="poisson", choices=[x.value for x in Likelihood])
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--seed", type=int, default=0)
    _add_chain_flags(p, ChainConfig())
    p.add_argument("--out", required=True, help="chain CSV to write")
    p.add_argument("--lpml", help="LPML JSON path (default <out>.lpml.json)")
    p.add_argument("--save-latent", help="write latent draws to this CSV")
    p.add_argument("--label", help="model label stored in the LPML report")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="rank models from LPML JSON reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--json", help="also write the ranking as JSON")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("study", help="run a simulation study")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="INI study configuration")
    src.add_argument("--design", choices=["poisson", "bernoulli"], default="poisson", help="built-in design")
    p.add_argument("--graph", default="lfdp", help="graph for built-in designs")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--replicates", type=int, default=None)
    _add_chain_flags(p, REDUCED_CHAIN)
    p.add_argument("--paper-scale", action="store_true", help="100 replicates x 20000 iterations")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--cache", help="directory for per-fit cache records")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_study)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
