"""L^p norms, mixed slice norms and empirical pointwise constants of the
truncated scattering fields.

Volume integrals of hyperradial functions use ``int_{R^6} F(|M^{-1}x|) dx =
det M |S^5| int F(rho) rho^5 d rho``.  Gradients pick up the direction factor
``|M^{-1} s|`` whose moments over S^5 are computed once.

Slice norms follow ``||f||_{L^p L^inf} = sup_x ||f(x, .)||_{L^p(R^3)}``; for
hyperradial ``f`` the inner integral only depends on ``|x|`` and is a 2D
integral over ``|y|`` and the angle between ``x`` and ``y``.
"""

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import QuadratureFailure
from .geometry import (gradient_stretch_from_parts, hyperradius_from_parts,
                       mmatrix_constants, sphere_mean_stretch)
from .truncated import TruncatedScattering

NORM_COLUMNS = (
    "lam", "N",
    "omega_L1", "omega_L2", "grad_omega_L1", "grad_omega_L2",
    "omega_L1Linf", "omega_L32Linf", "omega_L2Linf", "grad_omega_L1Linf",
    "eps_L2", "grad_u_L2",
)


@dataclass
class NormReport:
    lam: float
    N: float
    omega_L1: float
    omega_L2: float
    grad_omega_L1: float
    grad_omega_L2: float
    omega_L1Linf: float
    omega_L32Linf: float
    omega_L2Linf: float
    grad_omega_L1Linf: float
    eps_L2: float
    grad_u_L2: float

    def as_row(self):
        d = asdict(self)
        return [d[c] for c in NORM_COLUMNS]


def _cell_edges(ts, a, b, panels=64):
    """Panel edges on ``[a, b]``: the knots of the scaled radial spline, the
    potential and cutoff breakpoints, and a uniform background subdivision."""
    knots = ts.base.grid.nodes / ts.sqrt_n
    core = ts.base.potential.support_radius / ts.sqrt_n
    special_pts = [core, 0.5 * ts.lam_h, ts.lam_h] + [p / ts.sqrt_n for p in ts.base.potential.breakpoints]
    edges = np.concatenate([knots, special_pts, np.linspace(a, b, panels + 1)])
    return np.unique(edges[(edges >= a) & (edges <= b)])


def _cellwise(fun, edges, rel=1e-8):
    """Composite Gauss-Legendre over ``edges``.  The integrand is smooth on every
    panel, so orders 8 and 12 must agree to ``rel``; otherwise
    ``QuadratureFailure`` is raised."""
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    vals = []
    for order in (8, 12):
        x, w = np.polynomial.legendre.leggauss(order)
        pts = mid[:, None] + half[:, None] * x
        vals.append(float(np.sum(half[:, None] * w * fun(pts))))
    low, high = vals
    if not np.isfinite(high):
        raise QuadratureFailure("non-finite quadrature result")
    if abs(high - low) > rel * max(abs(high), np.finfo(float).tiny):
        raise QuadratureFailure(f"panel quadrature orders disagree: {low!r} vs {high!r}")
    return high


def volume_norms(ts: TruncatedScattering):
    """``||omega||_{L^1}``, ``||omega||_{L^2}``, ``||grad omega||_{L^1}``,
    ``||grad omega||_{L^2}``, ``||eps||_{L^2}``, ``||grad u||_{L^2}``."""
    mc = mmatrix_constants()
    jac = mc.det_m * mc.sphere_area_5
    if ts.base.potential.is_zero:
        return dict(omega_L1=0.0, omega_L2=0.0, grad_omega_L1=0.0, grad_omega_L2=0.0,
                    eps_L2=0.0, grad_u_L2=0.0)
    lh = ts.lam_h
    ball, annulus = _cell_edges(ts, 0.0, lh), _cell_edges(ts, 0.5 * lh, lh)
    w = lambda r: ts.omega_radial(r)
    dw = lambda r: ts.omega_radial(r, 1)
    out = {}
    out["omega_L1"] = jac * _cellwise(lambda r: w(r) * r ** 5, ball)
    out["omega_L2"] = np.sqrt(jac * _cellwise(lambda r: w(r) ** 2 * r ** 5, ball))
    out["grad_omega_L1"] = jac * sphere_mean_stretch(1) * _cellwise(lambda r: np.abs(dw(r)) * r ** 5, ball)
    out["grad_omega_L2"] = np.sqrt(jac * sphere_mean_stretch(2) * _cellwise(lambda r: dw(r) ** 2 * r ** 5, ball))
    out["eps_L2"] = np.sqrt(jac * _cellwise(lambda r: ts.eps_radial(r) ** 2 * r ** 5, annulus))
    # U' = -Q / (2 rho^5) vanishes inside the annulus, and Q is constant outside
    inner = _cellwise(lambda r: ts.u_radial(r, 1) ** 2 * r ** 5, annulus)
    outer = ts.charge_moment ** 2 / (16.0 * lh ** 4)
    out["grad_u_L2"] = np.sqrt(jac * sphere_mean_stretch(2) * (inner + outer))
    return out


def _roots_for_radius(a, c, rho):
    """Positive ``s`` with ``hyperradius(a, s, c) = rho`` (up to two roots)."""
    disc = (a * c) ** 2 - 4.0 * (a * a - 0.75 * rho * rho)
    if disc <= 0:
        return []
    sq = np.sqrt(disc)
    return [s for s in (0.5 * (a * c - sq), 0.5 * (a * c + sq)) if s > 0]


def _slice_integral(ts, a, p, gradient=False, n_angle=48, order=16, grading=40):
    """``int_{R^3} |F(a_vec, y)|^p dy`` for ``|a_vec| = a``; ``F`` is ``omega``
    or ``|grad omega|``.

    Composite Gauss-Legendre in ``|y|`` on panels graded geometrically
    around the point of closest approach, with extra panel edges where the
    hyperradius crosses the potential support and the cutoff annulus.
    Gauss-Legendre in the cosine of the angle.
    """
    c_nodes, c_weights = np.polynomial.legendre.leggauss(n_angle)
    x, w = np.polynomial.legendre.leggauss(order)
    lh = ts.lam_h
    core = ts.base.potential.support_radius / ts.sqrt_n
    radii = [core, 0.5 * lh, lh] + [b / ts.sqrt_n for b in ts.base.potential.breakpoints]
    total = 0.0
    for ci, wi in zip(c_nodes, c_weights):
        s_hi = max(_roots_for_radius(a, ci, lh), default=0.0)
        if s_hi <= 0:
            continue
        s_star = max(0.5 * a * ci, 0.0)
        edges = {0.0, s_hi, s_star}
        for r in radii:
            edges.update(_roots_for_radius(a, ci, r))
        scale = core * 2.0 ** -np.arange(-8, grading - 8)
        edges.update((s_star + scale).tolist())
        edges.update((s_star - scale).tolist())
        e = np.array(sorted(t for t in edges if 0.0 <= t <= s_hi))
        lo, hi = e[:-1], e[1:]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        s = (mid[:, None] + half[:, None] * x).ravel()
        rho = hyperradius_from_parts(a, s, ci)
        if gradient:
            val = np.abs(ts.omega_radial(rho, 1)) * gradient_stretch_from_parts(a, s, ci)
        else:
            val = ts.omega_radial(rho)
        f = (np.abs(val) ** p * s * s).reshape(lo.size, order)
        total += wi * float(np.sum(half[:, None] * w * f))
    if not np.isfinite(total):
        raise QuadratureFailure("non-finite slice integral")
    return 2.0 * np.pi * total


def slice_norms(ts: TruncatedScattering, x_net=None):
    """Mixed norms ``sup_x ||f(x, .)||_{L^p}`` on a coarse net of ``|x|`` values."""
    if ts.base.potential.is_zero:
        return dict(omega_L1Linf=0.0, omega_L32Linf=0.0, omega_L2Linf=0.0, grad_omega_L1Linf=0.0)
    if x_net is None:
        core = ts.base.potential.support_radius / ts.sqrt_n
        x_net = np.concatenate([[0.0], core * np.array([0.25, 1.0, 4.0]), ts.lam * np.array([0.25, 0.5])])
    specs = {
        "omega_L1Linf": (1.0, False),
        "omega_L32Linf": (1.5, False),
        "omega_L2Linf": (2.0, False),
        "grad_omega_L1Linf": (1.0, True),
    }
    out = {}
    for key, (p, grad) in specs.items():
        best = max(_slice_integral(ts, float(a), p, grad) for a in x_net)
        out[key] = best ** (1.0 / p)
    return out


def field_norms(ts: TruncatedScattering, x_net=None):
    """Volume norms of ``omega_{lam,N}``, ``eps_lam`` and ``u_lam``."""
    vol = volume_norms(ts)
    sl = slice_norms(ts, x_net)
    return NormReport(lam=ts.lam, N=ts.n, **vol, **sl)


@dataclass
class PointwiseConstants:
    omega: float
    grad_omega: float
    eps: float
    u: float
    grad_u: float


def sample_points(rng, count, r_min, r_max, dim=6):
    """Directions uniform on the sphere, radii log-uniform on ``[r_min, r_max]``."""
    d = rng.standard_normal((count, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = np.exp(rng.uniform(np.log(r_min), np.log(r_max), count))
    return d * r[:, None]


def pointwise_bound_constants(ts: TruncatedScattering, sample_count=4096, seed=0):
    """Empirical constants ``C`` of the pointwise bounds, as suprema over sampled
    ``x`` in R^6 of

    * ``omega(x) (1 + |N^{1/2} x|^4)`` and ``|grad omega(x)| (1 + |N^{1/2} x|^5) / N^{1/2}``,
    * ``|eps(x)| lam^2 |x|^4`` on the annulus where the cutoff varies,
    * ``|u(x)| (lam^4 + |x|^4)`` and ``|grad u(x)| (lam^5 + |x|^5)``.
    """
    if sample_count < 1000:
        raise ValueError("sample_count must be >= 1000")
    rng = np.random.default_rng(seed)
    inner = min(ts.lam, ts.base.potential.support_radius / ts.sqrt_n or ts.lam)
    x = sample_points(rng, sample_count, 1e-3 * inner, 4.0 * ts.lam)
    # a dedicated batch inside the annulus so that eps is sampled densely
    xa = sample_points(rng, sample_count, 0.3 * ts.lam, ts.lam)
    x = np.concatenate([x, xa])
    r = np.linalg.norm(x, axis=1)
    sn = ts.sqrt_n
    lam = ts.lam
    om = ts.omega(x) * (1.0 + (sn * r) ** 4)
    gom = np.linalg.norm(ts.grad_omega(x), axis=1) * (1.0 + (sn * r) ** 5) / sn
    eps = np.abs(ts.eps(x)) * lam ** 2 * r ** 4
    u = np.abs(ts.u(x)) * (lam ** 4 + r ** 4)
    gu = np.linalg.norm(ts.grad_u(x), axis=1) * (lam ** 5 + r ** 5)
    return PointwiseConstants(omega=float(om.max()), grad_omega=float(gom.max()),
                              eps=float(eps.max()), u=float(u.max()), grad_u=float(gu.max()))
