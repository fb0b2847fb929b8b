"""Exact dynamics of a few bosons on a ring against the lattice mean field.

Run with ``python3 demos/04_fewbody_dynamics.py``.
"""

# %%
from threebody_gp import cli, fewbody

# A product state of N copies of one orbital is evolved exactly with the
# three-body Hamiltonian.  Depletion measures how far the one-body density
# matrix drifts from the orbital evolved by the lattice NLS equation.
comp = fewbody.mean_field_comparison(12, [3, 4, 5, 6], 2.0, t_end=1.0)
for rec in comp.records:
    print(f"N = {rec.n}: max depletion {rec.max_depletion:.3e}")
print("slope in log N:", comp.slope())

# %%
# For a near-uniform orbital the exact quintic term carries (N-1)(N-2)/N^2
# and the depletion is not monotone at small N.  A localised orbital shows
# the expected decay.
orbital = cli.fewbody_orbital(dict(cli.SCHEMAS["fewbody"], orbital="gaussian"))
local = fewbody.mean_field_comparison(12, [3, 4, 5, 6], 2.0, orbital, t_end=1.0)
print("localised orbital slope:", local.slope())
