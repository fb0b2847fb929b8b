"""Counting points and triples in boxes.

Run with ``python3 demos/03_box_counting.py``.
"""

# %%
import numpy as np

from threebody_gp import boxes

rng = np.random.default_rng(3)
cfg = boxes.Configuration(rng.uniform(-1, 1, (200, 3)))

# %%
# Re-grouping pairs by box is exact: the residual is an integer and is zero.
print("recombination residual:", boxes.recombination_identity(cfg, 0.7))

# %%
# Ordered triples that share a box of side ell2 <= ell1 / sqrt(6) all lie
# within hyperdistance ell1, so the box-local count is a lower bound.
ell1 = 1.0
lhs, rhs, margin = boxes.three_body_box_inequality(cfg, ell1, ell1 / np.sqrt(6))
print(f"box-local triples {rhs} <= triples within ell1 {lhs} (margin {margin})")

# %%
# Calibrate constants on random configurations, then search for violations.
consts = boxes.calibrate_constants(2000, ((2.0, 3.0),), (1, 2))
pair = consts["pairs"][0]
res = boxes.adversarial_search(5000, 2.0, 3.0, pair["C_beta"], seeds=(5, 6),
                               c_alpha_beta=pair["C_alpha_beta"], c_intermediate=pair["C_intermediate"])
print("violations in", res.configs, "configs:", res.violations)
