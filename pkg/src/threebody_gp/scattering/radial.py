"""Zero-energy three-body scattering in the hyperradial reduction.

With ``omega(u) = g(|M^{-1} u|)`` the equation ``-2 Delta_M omega + V (omega - 1) = 0``
becomes the linear two-point problem

    g'' + (5/r) g' = (v(r)/2) (g - 1),   g'(0) = 0,   g ~ A r^{-4} at infinity.

Outside the support the decaying solution is exactly ``A r^{-4}``, so the
far-field condition is imposed as the Robin condition ``g' = -4 g / r`` at the
end of the grid.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate, linalg

from ..errors import InvalidGrid, NonConvergence, TailNotResolved
from .geometry import mmatrix_constants
from .potentials import HyperradialPotential

MIN_CORE_NODES = 200
TAIL_FRACTION = 0.2
TAIL_SPREAD_MAX = 1e-3


@dataclass(frozen=True)
class RadialGrid:
    nodes: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.nodes, dtype=float)
        if r.ndim != 1 or r.size < 3:
            raise InvalidGrid("grid needs at least three nodes")
        if np.any(np.diff(r) <= 0):
            raise InvalidGrid("grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", r)

    @property
    def r_max(self):
        return float(self.nodes[-1])

    @property
    def spacing(self):
        return float(self.nodes[1] - self.nodes[0])

    def is_uniform(self, rtol=1e-9):
        d = np.diff(self.nodes)
        return bool(np.all(np.abs(d - d[0]) <= rtol * d[0]))


def make_grid(support_radius, core_nodes=8000, r_max_factor=10.0):
    """Uniform grid from 0 to ``r_max_factor * R`` with ``core_nodes`` intervals in
    ``[0, R]`` (so ``R`` itself is a node).  ``R = 0`` uses a unit reference length."""
    ref = support_radius if support_radius > 0 else 1.0
    n_total = int(round(core_nodes * r_max_factor))
    return RadialGrid(np.linspace(0.0, ref * r_max_factor, n_total + 1))


@dataclass
class ScatteringSolution:
    grid: RadialGrid
    g: np.ndarray
    tail_coeff: float
    tail_spread: float
    residual: float
    potential: HyperradialPotential
    b_integral: float = np.nan
    b_tail: float = np.nan
    _spline: object = field(default=None, repr=False)

    def __post_init__(self):
        self._spline = interpolate.CubicSpline(self.grid.nodes, self.g, bc_type=((1, 0.0), "not-a-knot"))

    def __call__(self, r, nu=0):
        """``g`` (``nu = 0``) or its ``nu``-th radial derivative at ``r >= 0``."""
        r = np.asarray(r, dtype=float)
        rmax = self.grid.r_max
        A = self.tail_coeff
        inside = r <= rmax
        rr = np.where(inside, r, rmax)
        val = self._spline(rr, nu)
        safe = np.where(inside, rmax, r)
        coef = (1.0, -4.0, 20.0, -120.0)[nu]
        tail = A * coef * safe ** (-4 - nu)
        return np.where(inside, val, tail)


def _tridiagonal_system(grid, v):
    r = grid.nodes
    h = grid.spacing
    n = r.size
    vv = np.empty(n)
    vv[0] = float(v(np.array([0.0]))[0])
    vv[1:] = v.cell_average(r[1:], h)
    half_v = 0.5 * vv

    lower = np.zeros(n)   # coefficient of g_{i-1}
    diag = np.zeros(n)
    upper = np.zeros(n)   # coefficient of g_{i+1}
    rhs = -half_v.copy()

    # r = 0: the limit of (5/r) g' is 5 g''(0), ghost node g_{-1} = g_1
    diag[0] = -12.0 / h ** 2 - half_v[0]
    upper[0] = 12.0 / h ** 2

    ri = r[1:-1]
    lower[1:-1] = 1.0 / h ** 2 - 5.0 / (2.0 * h * ri)
    diag[1:-1] = -2.0 / h ** 2 - half_v[1:-1]
    upper[1:-1] = 1.0 / h ** 2 + 5.0 / (2.0 * h * ri)

    # r = r_max: ghost node from g' = -4 g / r
    rn = r[-1]
    lower[-1] = 2.0 / h ** 2
    diag[-1] = -(2.0 + 8.0 * h / rn) / h ** 2 - 20.0 / rn ** 2 - half_v[-1]
    return lower, diag, upper, rhs


def _apply(lower, diag, upper, g):
    out = diag * g
    out[1:] += lower[1:] * g[:-1]
    out[:-1] += upper[:-1] * g[1:]
    return out


def solve_scattering(v: HyperradialPotential, grid: RadialGrid = None, tol=1e-10):
    """Solve the radial zero-energy scattering problem by second-order finite
    differences and extract the far-field coefficient ``A``.

    Raises ``InvalidGrid`` if the grid is not uniform, does not reach
    ``10 R``, or puts fewer than 200 nodes inside ``[0, R]``, and
    ``NonConvergence`` if the relative residual of the discrete system
    exceeds ``tol``.
    """
    if grid is None:
        grid = make_grid(v.support_radius)
    r = grid.nodes
    if not grid.is_uniform():
        raise InvalidGrid("the finite-difference solver needs a uniform grid")
    if r[0] != 0.0:
        raise InvalidGrid("grid must start at r = 0")
    ref = v.support_radius if not v.is_zero else 0.0
    if ref > 0:
        if grid.r_max < 10.0 * ref * (1 - 1e-12):
            raise InvalidGrid(f"r_max = {grid.r_max:g} < 10 R_v = {10 * ref:g}")
        if np.count_nonzero(r <= ref * (1 + 1e-12)) < MIN_CORE_NODES:
            raise InvalidGrid(f"fewer than {MIN_CORE_NODES} nodes inside the support")

    if v.is_zero:
        g = np.zeros_like(r)
        return ScatteringSolution(grid=grid, g=g, tail_coeff=0.0, tail_spread=0.0,
                                  residual=0.0, potential=v)

    lower, diag, upper, rhs = _tridiagonal_system(grid, v)
    ab = np.zeros((3, r.size))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    g = linalg.solve_banded((1, 1), ab, rhs)

    res = _apply(lower, diag, upper, g) - rhs
    scale = _apply(np.abs(lower), np.abs(diag), np.abs(upper), np.abs(g)) + np.abs(rhs)
    residual = float(np.max(np.abs(res) / np.where(scale > 0, scale, 1.0)))
    if not np.isfinite(residual) or residual > tol:
        raise NonConvergence(f"relative residual {residual:.3e} exceeds tol {tol:.1e}")

    if g.min() < -1e-12 or g.max() > 1 + 1e-12:
        raise NonConvergence(f"solution left [0, 1]: min {g.min():.3e}, max {g.max():.3e}")
    g = np.clip(g, 0.0, 1.0)

    A, spread = _fit_tail(r, g)
    return ScatteringSolution(grid=grid, g=g, tail_coeff=A, tail_spread=spread,
                              residual=residual, potential=v)


def _fit_tail(r, g):
    start = int(np.floor((1.0 - TAIL_FRACTION) * (r.size - 1)))
    rt, gt = r[start:], g[start:]
    y = gt * rt ** 4
    A = float(np.mean(y))  # least-squares fit of a constant
    if A == 0.0:
        return 0.0, 0.0 if np.all(y == 0) else np.inf
    return A, float((y.max() - y.min()) / abs(A))


def hypervolume(sol: ScatteringSolution, v: HyperradialPotential = None, gauss_order=4):
    """Hypervolume by two routes.

    ``b_integral = det M |S^5| int v (1 - g) r^5 dr`` (change of variables
    ``u = M w`` in ``int V f``) and ``b_tail = 8 |S^5| det M A`` (divergence
    theorem applied to the radial equation).  Returns
    ``(b_integral, b_tail, A, rel_discrepancy)`` and stores the first two on
    ``sol``.
    """
    v = sol.potential if v is None else v
    if sol.tail_spread > TAIL_SPREAD_MAX:
        raise TailNotResolved(f"g r^4 spread {sol.tail_spread:.2e} on the outer grid")
    mc = mmatrix_constants()
    if v.is_zero:
        sol.b_integral = sol.b_tail = 0.0
        return 0.0, 0.0, 0.0, 0.0

    b_int = mc.det_m * mc.sphere_area_5 * _radial_moment(sol, v, gauss_order)
    b_tail = 8.0 * mc.sphere_area_5 * mc.det_m * sol.tail_coeff
    sol.b_integral, sol.b_tail = b_int, b_tail
    disc = abs(b_int - b_tail) / max(abs(b_int), np.finfo(float).tiny)
    return b_int, b_tail, sol.tail_coeff, disc


def _radial_moment(sol, v, order):
    """``int_0^R v (1 - g) r^5 dr`` with Gauss-Legendre on every grid cell."""
    r = sol.grid.nodes
    R = v.support_radius
    edges = r[r < R]
    edges = np.append(edges, R)
    # split cells at the profile's breakpoints so kinks sit on cell edges
    bps = [b for b in v.breakpoints if 0 < b < R]
    if bps:
        edges = np.unique(np.concatenate([edges, bps]))
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * x[None, :]
    # evaluate the profile strictly inside each cell (left limit at a jump)
    vals = v(pts) * (1.0 - sol(pts)) * pts ** 5
    return float(np.sum(half[:, None] * w[None, :] * vals))
