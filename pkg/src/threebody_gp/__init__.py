"""Numerical laboratory for the three-body Gross-Pitaevskii problem.

Subpackages and modules:

* :mod:`threebody_gp.scattering` -- hyperradial zero-energy scattering, the
  hypervolume, truncated correlation fields and their norms;
* :mod:`threebody_gp.gpe` -- split-step solver for the quintic GP equation;
* :mod:`threebody_gp.boxes` -- box-localisation counting on point configurations;
* :mod:`threebody_gp.fewbody` -- exact lattice boson dynamics;
* :mod:`threebody_gp.prefactors` -- excitation-number prefactor functions;
* :mod:`threebody_gp.cli` -- configuration-driven experiment runner.

Units: hbar = 2m = 1 throughout.
"""

__version__ = "0.1.0"
