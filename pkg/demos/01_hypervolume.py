"""Zero-energy three-body scattering and the hypervolume.

Run with ``python3 demos/01_hypervolume.py``.
"""

# %%
# A repulsive step of height v0 on hyperradius r < 1.  The radial problem is
# solved by finite differences, and the hypervolume is computed two ways: as an
# integral of v g over the interaction region, and from the A / r^4 tail.
import numpy as np

from threebody_gp.scattering import (field_norms, hypervolume, mmatrix_constants, solve_scattering,
                                     step_potential, truncate)

consts = mmatrix_constants()
print(f"det M = {consts.det_m:.6f}, |S^5| = {consts.sphere_area_5:.6f}")

for v0 in (1.0, 10.0, 100.0, 1e4):
    b_int, b_tail, A, disc = hypervolume(solve_scattering(step_potential(v0)))
    print(f"v0 = {v0:>8g}: b = {b_int:10.5f}  tail A = {A:.5f}  two-route mismatch {disc:.1e}")

# %%
# As v0 grows the tail coefficient approaches 1 from below.  A finite step
# still lets the solution leak into the core, so A stays a few percent short.
print("hard-core reference 3 sqrt(3) pi^3 =", 3 * np.sqrt(3) * np.pi ** 3)

# %%
# Scaling the truncated correlation field to N particles on a box of side 1
# and cutting it off at distance lam gives omega_N.  Its L1 norm falls like
# N^-2 and grows like lam^2.
sol = solve_scattering(step_potential(10.0))
ns = np.array([1250.0, 2500.0, 5000.0, 10000.0])
l1 = [field_norms(truncate(sol, 0.5, n)).omega_L1 for n in ns]
print("omega_L1 exponent in N:", np.polyfit(np.log(ns), np.log(l1), 1)[0])
