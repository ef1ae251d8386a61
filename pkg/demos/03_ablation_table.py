"""Measure every shipped variant (ghost / attention / coordinate attention /
weighted fusion, and their combinations) against the published reference table.

Seven of the ten rows reproduce exactly; the three weighted-fusion rows differ
only by their learnable fusion scalars (+5), and the two internally
inconsistent published rows are flagged rather than hidden.
"""

from litedet import analysis

rows = analysis.ablation_rows(nc=1, input_size=640, seed=0)
print(analysis.format_ablation(rows))

print("\nexact matches:",
      ", ".join(r.label for r in rows if r.param_delta == 0))
print("per-config files:",
      ", ".join(f"{r.label}={r.config_name}.json" for r in rows[:3]), "...")
