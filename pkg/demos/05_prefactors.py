"""Prefactor functions of the excitation number.

Run with ``python3 demos/05_prefactors.py``.
"""

# %%
from threebody_gp import prefactors

# Each prefactor is bounded by a constant C over 0 <= n <= N, and the shifted
# ratios change slowly with N.
for row in prefactors.theta_bound_report([50, 100, 200]):
    print(f"{row.kind.ascii:>12}  N = {row.N:4d}  C = {row.c:.4f}")
