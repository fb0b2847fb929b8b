"""Truncated scattering solution, its error field and compensating potential.

Everything is carried by radial profiles of the hyperradius ``rho = |M^{-1} x|``:

* ``omega_N(rho) = g(N^{1/2} rho)`` and the cutoff ``chi(rho) = chi_hat(rho / lam_h)``;
* ``eps(rho) = N^2 [4 g_N' chi' + 2 g_N (chi'' + 5 chi' / rho)]``, the radial form of
  ``4 N^2 M grad(omega_N) . M grad(chi) + 2 N^2 omega_N Delta_M chi``;
* ``U`` solves ``-2 (U'' + 5 U' / rho) = eps`` and decays at infinity.  By the
  shell theorem in six dimensions
  ``U(rho) = (1/8) [rho^{-4} int_0^rho eps s^5 ds + int_rho^inf eps s ds]``.

The cutoff radius in the hyperradius is ``lam_h = lam * sqrt(2/3)``, so the
cutoff vanishes wherever the Euclidean length ``|x| >= lam``.  It equals one
on the support of the scaled potential exactly when ``lam >= 2 R N^{-1/2}``,
with ``R = sqrt(3/2) R_v`` the Euclidean support radius.
"""

import numpy as np

from ..errors import LambdaTooSmall
from .geometry import M_NORM, mmatrix_constants
from .radial import ScatteringSolution

HYPER_PER_EUCLID = 1.0 / M_NORM  # sqrt(2/3)


def cutoff_profile(s, nu=0):
    """C^2 radial cutoff: 1 on ``[0, 1/2]``, 0 on ``[1, inf)``.

    On ``[1/2, 1]`` it is ``S(t) = 10 t^3 - 15 t^4 + 6 t^5`` with ``t = 2 (1 - s)``;
    ``S`` and its first two derivatives match the constant pieces at both ends.
    """
    s = np.asarray(s, dtype=float)
    t = np.clip(2.0 * (1.0 - s), 0.0, 1.0)
    inside = (s > 0.5) & (s < 1.0)
    if nu == 0:
        val = t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)
        return np.where(s <= 0.5, 1.0, np.where(inside, val, 0.0))
    if nu == 1:
        ds = -2.0 * 30.0 * t * t * (1.0 - t) ** 2
    elif nu == 2:
        ds = 4.0 * 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    else:
        raise ValueError("nu must be 0, 1 or 2")
    return np.where(inside, ds, 0.0)


class TruncatedScattering:
    """Evaluators for ``omega_{lam,N}``, ``f_{lam,N}``, ``eps_lam`` and ``u_lam`` on R^6.

    ``lam`` is the Euclidean truncation length, ``n_particles`` the scaling
    parameter ``N``.
    """

    def __init__(self, base: ScatteringSolution, lam, n_particles, panels=256, order=10):
        self.base = base
        self.lam = float(lam)
        self.n = float(n_particles)
        self.sqrt_n = np.sqrt(self.n)
        self.lam_h = self.lam * HYPER_PER_EUCLID
        self._mc = mmatrix_constants()
        self._setup_annulus(panels, order)

    # -- radial profiles -------------------------------------------------
    def g_n(self, rho, nu=0):
        rho = np.asarray(rho, dtype=float)
        return self.sqrt_n ** nu * self.base(self.sqrt_n * rho, nu)

    def chi(self, rho, nu=0):
        return cutoff_profile(np.asarray(rho, dtype=float) / self.lam_h, nu) / self.lam_h ** nu

    def omega_radial(self, rho, nu=0):
        if nu == 0:
            return self.chi(rho) * self.g_n(rho)
        if nu == 1:
            return self.chi(rho, 1) * self.g_n(rho) + self.chi(rho) * self.g_n(rho, 1)
        raise ValueError("nu must be 0 or 1")

    def eps_radial(self, rho):
        rho = np.asarray(rho, dtype=float)
        annulus = (rho > 0.5 * self.lam_h) & (rho < self.lam_h)
        r = np.where(annulus, rho, self.lam_h)
        c1, c2 = self.chi(r, 1), self.chi(r, 2)
        val = self.n ** 2 * (4.0 * self.g_n(r, 1) * c1 + 2.0 * self.g_n(r) * (c2 + 5.0 * c1 / r))
        return np.where(annulus, val, 0.0)

    def _setup_annulus(self, panels, order):
        x, w = np.polynomial.legendre.leggauss(order)
        self._gl = (x, w)
        self._edges = np.linspace(0.5 * self.lam_h, self.lam_h, panels + 1)
        q_pan = self._panel_integral(self._edges[:-1], self._edges[1:], 5)
        p_pan = self._panel_integral(self._edges[:-1], self._edges[1:], 1)
        self._q_cum = np.concatenate([[0.0], np.cumsum(q_pan)])
        self._p_cum = np.concatenate([[0.0], np.cumsum(p_pan)])
        self.charge_moment = float(self._q_cum[-1])  # int eps s^5 ds
        self._p_total = float(self._p_cum[-1])

    def _panel_integral(self, a, b, power):
        x, w = self._gl
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        pts = mid[..., None] + half[..., None] * x
        return half * np.sum(w * self.eps_radial(pts) * pts ** power, axis=-1)

    def _partial(self, rho, power, cum):
        """``int_{lam_h/2}^{rho} eps s^power ds`` for ``rho`` clipped to the annulus."""
        e = self._edges
        r = np.clip(rho, e[0], e[-1])
        k = np.clip(np.searchsorted(e, r, side="right") - 1, 0, e.size - 2)
        return cum[k] + self._panel_integral(e[k], r, power)

    def q_moment(self, rho):
        return self._partial(np.asarray(rho, dtype=float), 5, self._q_cum)

    def u_radial(self, rho, nu=0):
        """Radial compensator ``U`` (``nu = 0``) or ``U'`` (``nu = 1``)."""
        rho = np.asarray(rho, dtype=float)
        q = self.q_moment(rho)
        safe = np.where(rho > 0, rho, 1.0)
        if nu == 1:
            return np.where(rho > 0, -0.5 * q / safe ** 5, 0.0)
        p = self._p_total - self._partial(rho, 1, self._p_cum)
        return np.where(rho > 0, 0.125 * (q / safe ** 4 + p), 0.125 * self._p_total)

    # -- fields on R^6 ---------------------------------------------------
    def _rho(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x @ self._mc.m_inv.T, axis=-1)

    def _grad(self, x, radial_derivative):
        x = np.asarray(x, dtype=float)
        rho = self._rho(x)
        d = radial_derivative(rho)
        safe = np.where(rho > 0, rho, 1.0)
        direction = (x @ self._mc.m_inv_sq.T) / safe[..., None]
        return np.where((rho > 0)[..., None], d[..., None] * direction, 0.0)

    def omega(self, x):
        return self.omega_radial(self._rho(x))

    def omega_untruncated(self, x):
        return self.g_n(self._rho(x))

    def f(self, x):
        return 1.0 - self.omega(x)

    def grad_omega(self, x):
        return self._grad(x, lambda r: self.omega_radial(r, 1))

    def eps(self, x):
        return self.eps_radial(self._rho(x))

    def u(self, x):
        return self.u_radial(self._rho(x))

    def grad_u(self, x):
        return self._grad(x, lambda r: self.u_radial(r, 1))

    def cutoff_argument(self, x):
        return self._rho(x) / self.lam_h


def truncate(sol: ScatteringSolution, lam, n_particles, **kw):
    """Build ``omega_{lam,N}``, ``eps_lam`` and ``u_lam`` from a radial solution.

    Raises ``LambdaTooSmall`` unless ``lam >= 2 R N^{-1/2}`` (``R`` the Euclidean
    support radius of ``V``), the condition under which the cutoff equals one
    on the support of ``V_N``.
    """
    if n_particles < 1:
        raise ValueError("N must be >= 1")
    if lam <= 0:
        raise LambdaTooSmall("lambda must be positive")
    R = M_NORM * sol.potential.support_radius
    lam_min = 2.0 * R / np.sqrt(n_particles)
    if lam < lam_min * (1.0 - 1e-12):
        raise LambdaTooSmall(f"lambda = {lam:g} < 2 R N^(-1/2) = {lam_min:g}")
    return TruncatedScattering(sol, lam, n_particles, **kw)
