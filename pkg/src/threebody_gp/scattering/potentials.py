"""Hyperradial three-body potentials ``V(u) = v(|M^{-1} u|)``.

Three built-in families are provided (step, smooth bump, piecewise-linear
table).  Profiles are vectorised callables of the hyperradius; energies are in
units with hbar = 2m = 1.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class HyperradialPotential:
    profile: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    core: Optional[tuple] = None  # (R0, C0) with v >= C0 on [0, R0]
    breakpoints: tuple = ()
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.is_zero:
            return np.zeros_like(r)
        out = np.asarray(self.profile(r), dtype=float)
        return np.where(r > self.support_radius, 0.0, out)

    @property
    def is_zero(self):
        return self.support_radius <= 0.0

    def scaled(self, n):
        """The Gross-Pitaevskii rescaling ``N v(N^{1/2} r)``, support ``R / N^{1/2}``."""
        s = np.sqrt(n)
        base = self.profile
        return HyperradialPotential(
            profile=lambda r: n * base(s * np.asarray(r, dtype=float)),
            support_radius=self.support_radius / s,
            core=None if self.core is None else (self.core[0] / s, n * self.core[1]),
            breakpoints=tuple(b / s for b in self.breakpoints),
            name=f"{self.name}[N={n:g}]",
            params=dict(self.params, n_scale=n),
        )

    def cell_average(self, r, h, order=8):
        """Average of ``v`` over ``[r - h/2, r + h/2]`` (clipped at 0)."""
        x, w = np.polynomial.legendre.leggauss(order)
        r = np.asarray(r, dtype=float)
        lo = np.maximum(r - 0.5 * h, 0.0)
        hi = r + 0.5 * h
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        pts = mid[:, None] + half[:, None] * x[None, :]
        return (self(pts) * w[None, :]).sum(axis=1) / 2.0


def zero_potential():
    return HyperradialPotential(profile=lambda r: np.zeros_like(r), support_radius=0.0,
                                name="zero")


def step_potential(strength, radius=1.0):
    """``v0 * 1(r <= R)``."""
    if strength < 0 or radius < 0:
        raise ValueError("step potential needs strength >= 0 and radius >= 0")
    if strength == 0 or radius == 0:
        return zero_potential()
    return HyperradialPotential(
        profile=lambda r: np.where(np.asarray(r) <= radius, float(strength), 0.0),
        support_radius=float(radius),
        core=(float(radius), float(strength)),
        breakpoints=(float(radius),),
        name="step",
        params={"strength": float(strength), "radius": float(radius)},
    )


def bump_potential(strength, radius=1.0):
    """``v0 (1 - (r/R)^2)^3`` on ``r < R``: C^2 at the edge of the support."""
    if strength < 0 or radius < 0:
        raise ValueError("bump potential needs strength >= 0 and radius >= 0")
    if strength == 0 or radius == 0:
        return zero_potential()

    def prof(r):
        t = 1.0 - (np.asarray(r, dtype=float) / radius) ** 2
        return strength * np.clip(t, 0.0, None) ** 3

    return HyperradialPotential(
        profile=prof,
        support_radius=float(radius),
        core=(0.5 * radius, strength * 0.75 ** 3),
        name="bump",
        params={"strength": float(strength), "radius": float(radius)},
    )


def table_potential(radii: Sequence[float], values: Sequence[float]):
    """Piecewise-linear profile through ``(radii[i], values[i])``; zero beyond the
    last node.  ``radii`` must start at 0 and be strictly increasing."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if radii.ndim != 1 or radii.shape != values.shape or radii.size < 2:
        raise ValueError("table needs matching 1D radii/values with >= 2 nodes")
    if radii[0] != 0.0 or np.any(np.diff(radii) <= 0):
        raise ValueError("table radii must start at 0 and increase strictly")
    if np.any(values < 0):
        raise ValueError("potential values must be nonnegative")
    if not np.any(values > 0):
        return zero_potential()
    return HyperradialPotential(
        profile=lambda r: np.interp(r, radii, values, right=0.0),
        support_radius=float(radii[-1]),
        core=(float(radii[1]), float(min(values[0], values[1]))) if min(values[:2]) > 0 else None,
        breakpoints=tuple(float(r) for r in radii[1:]),
        name="table",
        params={"radii": radii.tolist(), "values": values.tolist()},
    )


def potential_from_config(cfg):
    """Build a potential from a config mapping with key ``potential`` in
    {``zero``, ``step``, ``bump``, ``table``}."""
    kind = cfg.get("potential", "step")
    if kind == "zero":
        return zero_potential()
    if kind == "step":
        return step_potential(float(cfg.get("strength", 1.0)), float(cfg.get("radius", 1.0)))
    if kind == "bump":
        return bump_potential(float(cfg.get("strength", 1.0)), float(cfg.get("radius", 1.0)))
    if kind == "table":
        try:
            return table_potential(cfg["table_radii"], cfg["table_values"])
        except KeyError as exc:
            raise ConfigError(f"table potential needs {exc.args[0]!r}") from None
    raise ConfigError(f"unknown potential family {kind!r}")
