"""Normality and correlation analysis of a design-of-experiments table.

Run from the repository root:  python demos/04_doe_stats.py

Each response column is first checked with Shapiro-Wilk.  Normal responses
get a Pearson test against the design factor, others a Spearman rank test.
"""

import numpy as np
from scipy import stats

from gaitsea.doestats import correlation_report, demo_table, shapiro_wilk

table = demo_table()
print(table.to_csv())

report = correlation_report([table])
print(report.to_text())

# our Shapiro-Wilk against scipy's on the same columns
for name, col in (("stiffness", table.rows[:, 1]), ("max VMS", table.rows[:, 2])):
    ours, ref = shapiro_wilk(col), stats.shapiro(col)
    print(f"{name:>9}: W {ours.statistic:.6f} (scipy {ref.statistic:.6f}), "
          f"p {ours.p_value:.4g} (scipy {ref.pvalue:.4g})")

# a heavy tail flips the branch
x = np.arange(1.0, 11.0)
tail = np.r_[np.linspace(1, 2, 9), 50.0]
print(f"\nheavy-tailed column: Shapiro-Wilk p = {shapiro_wilk(tail).p_value:.2e}, so ranks are used")
