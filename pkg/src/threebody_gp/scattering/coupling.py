"""Effective quintic coupling produced by the scaled three-body interaction.

For a profile ``phi`` on R^3 the quantity

    I_N(x) = N^2 int (V_N f_N)(x - y, x - z) |phi(y)|^2 |phi(z)|^2 dy dz

tends to ``b(V) |phi(x)|^4``.  Substituting ``u = N^{1/2} (x - y, x - z)`` and
``u = M w`` turns it into

    I_N(x) = det M int_0^R v(r) (1 - g(r)) r^5 int_{S^5} Phi_x(M r s / N^{1/2}) ds dr,

with ``Phi_x(a, c) = |phi(x - a)|^2 |phi(x - c)|^2``.  The radial integral is
done by Gauss-Legendre on the support of ``v`` and the angular mean by
scrambled Sobol directions paired with their antipodes, which cancels every
odd-order term of the Taylor expansion of ``Phi_x`` exactly.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.stats import qmc

from ..errors import IntegrationBudgetExceeded
from .geometry import mmatrix_constants
from .truncated import TruncatedScattering


def periodic_test_profile(a1=0.3, a2=0.2, period=1.0):
    """Smooth real profile on the periodic cell ``[0, period)^3``:
    ``1 + a1 sin(k x1) cos(k x2) + a2 cos(k x3)`` with ``k = 2 pi / period``."""
    k = 2.0 * np.pi / period

    def phi(x):
        x = np.asarray(x, dtype=float)
        return 1.0 + a1 * np.sin(k * x[..., 0]) * np.cos(k * x[..., 1]) + a2 * np.cos(k * x[..., 2])

    return phi


def constant_profile(value=1.0):
    return lambda x: np.full(np.asarray(x).shape[:-1], float(value))


@dataclass
class CouplingResult:
    deviation: float  # sup over the x-grid
    b: float  # the radial quadrature value of int V f
    evaluations: int
    x_argmax: np.ndarray


def sphere_directions(count, dim=6, seed=0):
    """``2 * count`` unit vectors: scrambled Sobol points mapped through the
    Gaussian quantile and normalised, followed by their antipodes."""
    m = int(np.ceil(np.log2(max(count, 2))))
    u = qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(m)[:count]
    z = special.ndtri(np.clip(u, 1e-15, 1 - 1e-15))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return np.concatenate([z, -z])


def radial_rule(ts: TruncatedScattering, order=24):
    """Nodes ``r_k`` and weights ``W_k`` with ``sum_k W_k F(r_k) ~
    det M |S^5| int v (1 - g) r^5 F(r) dr`` (unscaled variables)."""
    v = ts.base.potential
    edges = np.unique(np.concatenate([[0.0, v.support_radius],
                                      [b for b in v.breakpoints if 0 < b < v.support_radius]]))
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    r = (mid[:, None] + half[:, None] * x).ravel()
    wr = (half[:, None] * w).ravel()
    mc = mmatrix_constants()
    weight = mc.det_m * mc.sphere_area_5 * wr * v(r) * (1.0 - ts.base(r)) * r ** 5
    return r, weight


def cell_grid(points_per_axis=4, period=1.0):
    t = (np.arange(points_per_axis) + 0.5) * period / points_per_axis
    g = np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1)
    return g.reshape(-1, 3)


def effective_coupling_error(ts: TruncatedScattering, phi, n_particles=None, x_grid=None,
                             directions=512, radial_order=24, seed=0, budget=5e7):
    """Sup-norm deviation ``sup_x |I_N(x) - b(V) |phi(x)|^4|`` over ``x_grid``.

    ``n_particles`` defaults to the ``N`` of ``ts``.  Raises
    ``IntegrationBudgetExceeded`` when the number of integrand evaluations
    would exceed ``budget``.
    """
    n = ts.n if n_particles is None else float(n_particles)
    if x_grid is None:
        x_grid = cell_grid()
    x_grid = np.asarray(x_grid, dtype=float).reshape(-1, 3)
    if ts.base.potential.is_zero:
        return CouplingResult(0.0, 0.0, 0, x_grid[0])

    r, wr = radial_rule(ts, radial_order)
    s = sphere_directions(directions, seed=seed)
    evaluations = x_grid.shape[0] * r.size * s.shape[0]
    if evaluations > budget:
        raise IntegrationBudgetExceeded(f"{evaluations} evaluations exceed budget {budget:g}")

    b = float(np.sum(wr))
    ms = s @ mmatrix_constants().m.T  # (S, 6)
    shift = (r[:, None, None] / np.sqrt(n)) * ms[None, :, :]  # (R, S, 6)
    dev = np.empty(x_grid.shape[0])
    for i, x in enumerate(x_grid):
        p1 = np.abs(phi(x - shift[..., :3])) ** 2
        p2 = np.abs(phi(x - shift[..., 3:])) ** 2
        integral = float(np.sum(wr * np.mean(p1 * p2, axis=1)))
        dev[i] = abs(integral - b * np.abs(phi(x[None, :])[0]) ** 4)
    k = int(np.argmax(dev))
    return CouplingResult(float(dev[k]), b, int(evaluations), x_grid[k])
