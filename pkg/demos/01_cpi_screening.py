"""
Screening CPI inflation as a driver
===================================

Load the monthly CPI index, look at how its growth transforms relate to each
other, check how persistent inflation is, and run a unit-root test on it.
"""
from pathlib import Path

import numpy as np

from crelgd.screen import BucketSpec, adf_test, screen, screen_bucketed, transform_correlation_matrix
from crelgd.series import TransformSpec, apply_transform, read_series_csv, window

DATA = Path(__file__).resolve().parents[1] / "data" / "public"
cpi = read_series_csv(DATA / "CPIAUCSL.csv")
print(f"{cpi.name}: {cpi.start} .. {cpi.end}, {len(cpi)} months")

# Ratio and log differences over the same horizon are nearly interchangeable.
labels = ["RDIFF12M", "LDIFF12M", "RDIFF6M", "LDIFF6M", "RDIFF3M", "LDIFF3M"]
m = transform_correlation_matrix(cpi, [TransformSpec.parse(s) for s in labels], ("1951-01", "2022-12"))
print("\n" + " " * 10 + "".join(f"{s:>10}" for s in labels))
for label, row in zip(labels, m):
    print(f"{label:>10}" + "".join(f"{v:10.4f}" for v in row))

# Year-over-year inflation today against its own value a year later.
yoy = TransformSpec.parse("RDIFF12M")
for lead in (0, 3, 6, 12, 24):
    rep = screen(cpi, cpi, yoy, yoy, lead, ("1952-01", "2022-12"))
    print(f"lead {lead:>2} months: r = {rep.pearson_r:.4f} on {rep.n_pairs} pairs")

# Split by inflation level: the relationship is weaker inside each regime.
for label, n, rep in screen_bucketed(cpi, cpi, yoy, yoy, 12, ("1952-01", "2022-12"), BucketSpec((0.02, 0.04))):
    r = "undefined" if rep.pearson_r is None else f"{rep.pearson_r:.4f}"
    print(f"bucket {label:>12}: n = {n:4d}, r = {r}")

# A small p-value rejects a unit root.
infl = window(apply_transform(cpi, yoy), "1952-01", "2022-12")
res = adf_test(infl)
print(f"\nADF on CPI YoY: stat {res.test_statistic:.3f}, p {res.p_value:.4f}, lags {res.lags_used}, "
      f"5% critical {res.critical_values['5%']:.3f}")
print("mean inflation", np.round(np.mean(infl.values), 4))
