"""The block matrix relating relative coordinates of three particles to the
exchange-symmetric hyperradius.

For a pair of relative coordinates ``u = (x - y, x - z)`` in R^6, the
kinetic operator ``-Delta_x - Delta_y - Delta_z`` becomes ``-2 div(M^2 grad)``
with ``M^2 = (1/2) [[2, 1], [1, 2]] (x) I_3``.  After the substitution
``u = M w`` it is ``-2 Delta_w``, so a potential that only depends on
``|M^{-1} u|`` reduces the zero-energy problem to a radial ODE in six
dimensions.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class MMatrixConstants:
    m: np.ndarray  # 6x6
    m_inv: np.ndarray
    det_m: float
    sphere_area_5: float
    block: np.ndarray  # the 2x2 block coefficients

    @property
    def m_inv_sq(self):
        return self.m_inv @ self.m_inv


@lru_cache(maxsize=None)
def mmatrix_constants():
    """Return ``M``, its inverse, ``det M`` and ``|S^5|``."""
    a = (SQRT3 + 1.0) / (2.0 * np.sqrt(2.0))
    c = (SQRT3 - 1.0) / (2.0 * np.sqrt(2.0))
    block = np.array([[a, c], [c, a]])
    m = np.kron(block, np.eye(3))
    # block eigenvalues are sqrt(3/2) and sqrt(1/2)
    ib = np.array([[a, -c], [-c, a]]) / (a * a - c * c)
    m_inv = np.kron(ib, np.eye(3))
    det_m = (a * a - c * c) ** 3
    for arr in (block, m, m_inv):
        arr.setflags(write=False)
    return MMatrixConstants(m=m, m_inv=m_inv, det_m=float(det_m),
                            sphere_area_5=float(np.pi ** 3), block=block)


# Norm of M, i.e. the largest ratio |u| / |M^{-1} u|.
M_NORM = np.sqrt(1.5)
M_INV_NORM = np.sqrt(2.0)


def hyperradius(u):
    """``|M^{-1} u|`` for points ``u`` of shape (..., 6)."""
    u = np.asarray(u, dtype=float)
    minv = mmatrix_constants().m_inv
    return np.linalg.norm(u @ minv.T, axis=-1)


def hyperradius_from_parts(a, b, cos_angle):
    """Hyperradius of ``u = (a_vec, b_vec)`` from ``|a|``, ``|b|`` and the angle
    between them: ``(4/3)(|a|^2 + |b|^2 - a.b)``."""
    q = (4.0 / 3.0) * (a * a + b * b - a * b * cos_angle)
    return np.sqrt(np.maximum(q, 0.0))


def gradient_stretch_from_parts(a, b, cos_angle):
    """``|M^{-2} u| / |M^{-1} u|``: the factor turning a radial derivative into the
    Euclidean gradient norm in R^6."""
    num = (4.0 / 9.0) * (5.0 * (a * a + b * b) - 8.0 * a * b * cos_angle)
    den = (4.0 / 3.0) * (a * a + b * b - a * b * cos_angle)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sqrt(np.maximum(num, 0.0) / den)
    return np.where(den > 0, out, M_INV_NORM)


@lru_cache(maxsize=None)
def sphere_mean_stretch(p):
    """Mean of ``|M^{-1} s|^p`` over the unit sphere S^5.

    The squared length of the projection of a uniform point on S^5 onto a
    3-dimensional subspace is Beta(3/2, 3/2) distributed.
    """
    def integrand(t):
        dens = t ** 0.5 * (1.0 - t) ** 0.5 / special.beta(1.5, 1.5)
        return ((2.0 / 3.0) * t + 2.0 * (1.0 - t)) ** (p / 2.0) * dens

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13)
    return val
