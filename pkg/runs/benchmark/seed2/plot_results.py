"""Boxplots of regret and accuracy per scenario and method.

Usage: python plot_results.py [results.csv] [out.png]
"""
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

src = sys.argv[1] if len(sys.argv) > 1 else "results.csv"
dst = sys.argv[2] if len(sys.argv) > 2 else "results.png"
df = pd.read_csv(src)
df = df[df.status == "ok"]
scenarios = list(dict.fromkeys(df.scenario))
methods = list(dict.fromkeys(df.method))
fig, axes = plt.subplots(2, len(scenarios), figsize=(3.2 * len(scenarios), 7), squeeze=False)
for j, sc in enumerate(scenarios):
    sub = df[df.scenario == sc]
    for i, col in enumerate(["regret", "accuracy"]):
        ax = axes[i, j]
        ax.boxplot([sub[sub.method == m][col].dropna() for m in methods], showfliers=False)
        ax.set_xticks(range(1, len(methods) + 1))
        ax.set_xticklabels(methods, rotation=90, fontsize=7)
        ax.set_title(sc if i == 0 else "", fontsize=8)
        if j == 0:
            ax.set_ylabel(col)
fig.tight_layout()
fig.savefig(dst, dpi=150)
