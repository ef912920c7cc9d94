"""
Simulation-study tables from cached fits
========================================

``tgmrf study`` writes one JSON record per fit into a cache directory.
This script rebuilds the reduced-scale Poisson and Bernoulli studies from
that cache (fitting anything missing, which takes hours on one core) and
prints the parameter summaries, selection frequencies and quartiles of the
LPML differences between the correct and the misspecified models.

Run with ``python demos/04_study_tables.py [cache_dir]``.
"""
import sys

from tgmrf.study import bernoulli_design, lpml_difference_summary, poisson_design, run_study

cache = sys.argv[1] if len(sys.argv) > 1 else "results/cache"

for design in (poisson_design(), bernoulli_design()):
    res = run_study(design, cache_dir=cache)
    print(f"\n== {design.likelihood.value} study, {design.n_replicates} replicates ==")
    print(f"{'true':>10} {'fitted':>10} {'param':>6} {'truth':>6} {'mean':>8} {'sd':>7}")
    for r in res.summary_rows():
        if r["parameter"] in ("beta1", "nu", "rho"):
            print(
                f"{r['true_model']:>10} {r['fitted']:>10} {r['parameter']:>6} {r['truth']:>6.2f} "
                f"{r['mean']:>8.3f} {r['sd']:>7.3f}"
            )
    print("\nselection frequencies")
    for name, row in res.selection_table().items():
        print(f"  {name:>10}: " + "  ".join(f"{k} {v}" for k, v in row.items()))
    print("\nLPML(correct) - LPML(other): q1 / median / q3")
    for (t, c, o), q in lpml_difference_summary(res).items():
        print(f"  {t:>10} {c} - {o}: {q['q1']:.2f} / {q['median']:.2f} / {q['q3']:.2f}")
