"""
Coefficient stability and downturn underestimation
==================================================

Refit the champion model on cross-validation splits and by default year,
then look at which model under-predicts least when prices fall in 2008.
"""
from collections import Counter

from crelgd.lgd import GeneratorConfig, design_from_records, generate_synthetic_portfolio, observed_lgd, \
    synthetic_mev_panel
from crelgd.tobit import fit_tobit
from crelgd.validation import (downturn_underestimation_rank, k_fold_plan, leave_one_group_plan,
                               quarterly_mean_fit, run_stability_cv)

panel = synthetic_mev_panel(seed=4, stress_quarter="2008Q2")
config = GeneratorConfig(n_loans=4000, intercept=0.1, noise_sigma=0.25,
                         sensitivities={"CPI.LDIFF6M": 2.40, "HPI.LDIFF6M": -2.23})
loans = generate_synthetic_portfolio(config, panel, seed=4)
y = observed_lgd(loans)
X = design_from_records(loans, ["CPI.LDIFF6M", "HPI.LDIFF6M"])
champion = fit_tobit(X, y, name="champion")

# Ten random folds: a refit moving more than one standard error is flagged.
report = run_stability_cv(X, y, k_fold_plan(len(y), 10, seed=4), full_fit=champion)
for name in X.column_names:
    refits = report.refits(name)
    print(f"{name:>12}: full {champion.coefficient(name):+.3f}, folds {min(refits):+.3f} .. {max(refits):+.3f}")
print("flags:", report.flags or "none")

# Leaving out one default year at a time is a harsher test; the bar is two standard errors.
years = [r.default_month.year for r in loans]
by_year = run_stability_cv(X, y, leave_one_group_plan(years, "default_year"), full_fit=champion)
print("\ndefaults per year:", dict(sorted(Counter(years).items())))
print("leave-one-year flags:", by_year.flags or "none", "| degenerate:", by_year.to_dict()["degenerate_folds"])

# Quarterly fit around the stress.
hpi_only = fit_tobit(design_from_records(loans, ["HPI.LDIFF6M"]), y, name="hpi_only")
print("\nquarter    n  actual  champion  hpi_only")
for a, b in zip(quarterly_mean_fit(loans, champion), quarterly_mean_fit(loans, hpi_only)):
    if "2007Q3" <= a.quarter <= "2009Q2":
        print(f"{a.quarter} {a.n:4d}  {a.actual:.3f}    {a.predicted:.3f}     {b.predicted:.3f}")

for name, gap in downturn_underestimation_rank([champion, hpi_only], loans, "2008Q2"):
    print(f"2008Q2 underestimation {name:>9}: {gap:+.4f}")
