"""Quintic Gross-Pitaevskii equation on periodic grids.

    i d_t phi = (-Delta + (b/2) |phi|^4 - mu_t) phi

is integrated by Strang splitting: a half kinetic step in Fourier space, the
exact pointwise nonlinear phase, and another half kinetic step.  Both
substeps are unitary, so the discrete mass is conserved to rounding.

The gauge ``mu_t`` is either zero or ``(b/3) int |phi|^6 / int |phi|^2``.  For
unit mass this is ``(b/3) int |phi|^6`` and it is the choice for which
``<phi, i d_t phi>`` equals the energy ``int |grad phi|^2 + (b/6) int |phi|^6``;
dividing by the mass keeps that identity for any mass.  Because the
nonlinear substep leaves ``|phi|`` unchanged, ``mu`` evaluated on the field
entering the substep is exact for the whole substep.

The module also carries a lattice variant (kinetic symbol ``2 - 2 cos k`` on a
unit-spacing ring) used as the mean-field reference for the few-body
simulator, an imaginary-time ground-state solver, and a binary snapshot
format.
"""

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy import fft as sfft

from .errors import ConfigError, MismatchedRuns, NoConvergence, StepTooLarge

GAUGES = ("none", "paper")
SNAPSHOT_MAGIC = b"TBGP"
SNAPSHOT_HEADER = struct.Struct("<4sHHd")  # magic, dim, n, L: 16 bytes
TRAJECTORY_COLUMNS = ("t", "mass", "kinetic", "potential", "total", "mu")


def _fftn(a):
    return sfft.fftn(a, workers=-1)


def _ifftn(a):
    return sfft.ifftn(a, workers=-1)


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid ``[0, L)^dim`` with ``n`` points per axis."""

    dim: int
    extent: float
    points: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2 or 3")
        n = int(self.points)
        if n < 8 or n & (n - 1):
            raise ValueError("points per axis must be a power of two and >= 8")
        if not self.extent > 0:
            raise ValueError("extent must be positive")

    @property
    def shape(self):
        return (self.points,) * self.dim

    @property
    def spacing(self):
        return self.extent / self.points

    @property
    def cell_volume(self):
        return self.spacing ** self.dim

    @property
    def volume(self):
        return self.extent ** self.dim

    def axis(self):
        return np.arange(self.points) * self.spacing

    def mesh(self):
        """Coordinate arrays, one per axis, each of shape ``self.shape``."""
        return np.meshgrid(*([self.axis()] * self.dim), indexing="ij")

    def wavenumbers(self):
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)

    def k_squared(self):
        k = self.wavenumbers()
        ks = np.meshgrid(*([k] * self.dim), indexing="ij")
        return sum(kk * kk for kk in ks)


@dataclass
class WaveField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values have shape {self.values.shape}, grid needs {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("wave field has non-finite values")

    def mass(self):
        return float(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2))

    def copy(self):
        return WaveField(self.grid, self.values.copy())


@dataclass(frozen=True)
class GpeParams:
    coupling: float
    gauge: str = "none"
    dt: float = 1e-3
    t_end: float = 1.0
    checkpoint_stride: int = 100

    def __post_init__(self):
        if self.coupling < 0:
            raise ValueError("coupling b must be nonnegative")
        if self.gauge not in GAUGES:
            raise ValueError(f"gauge must be one of {GAUGES}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.checkpoint_stride < 1:
            raise ValueError("checkpoint_stride must be >= 1")

    @property
    def steps(self):
        return int(round(self.t_end / self.dt))


@dataclass
class EnergyReport:
    kinetic: float
    potential: float
    total: float
    mass: float


def _sum_abs_pow(values, p):
    return float(np.sum(np.abs(values) ** p))


def kinetic_energy(field: WaveField):
    """``int |grad phi|^2`` by spectral differentiation (Parseval)."""
    g = field.grid
    fhat = _fftn(field.values)
    return float(g.cell_volume * np.sum(g.k_squared() * np.abs(fhat) ** 2) / fhat.size)


def energy(field: WaveField, b):
    """Kinetic, interaction ``(b/6) int |phi|^6``, total and mass of ``field``."""
    kin = kinetic_energy(field)
    pot = b / 6.0 * field.grid.cell_volume * _sum_abs_pow(field.values, 6)
    return EnergyReport(kinetic=kin, potential=pot, total=kin + pot, mass=field.mass())


def gauge_mu(values, b, cell_volume, gauge):
    if gauge == "none" or b == 0:
        return 0.0
    density = np.abs(values) ** 2
    mass = float(np.sum(density))
    if mass == 0:
        return 0.0
    return b / 3.0 * float(np.sum(density ** 3)) / mass


@dataclass
class Trajectory:
    """Checkpointed solution of the GPE.

    ``mu_steps[k]`` is the gauge used in step ``k`` (time ``(k + 1/2) dt``);
    ``before``/``after`` hold the fields one step before and after each
    checkpoint (``None`` where unavailable) for centred time differences.
    """

    params: GpeParams
    times: np.ndarray
    snapshots: List[WaveField]
    mu: np.ndarray
    mu_steps: np.ndarray
    before: List[Optional[WaveField]] = field(default_factory=list)
    after: List[Optional[WaveField]] = field(default_factory=list)

    def energies(self):
        return [energy(s, self.params.coupling) for s in self.snapshots]


class _SplitStep:
    """Strang splitting ``K(dt/2) N(dt) K(dt/2)`` for a given kinetic symbol."""

    def __init__(self, symbol, b, dt, gauge, cell_volume):
        self.half_kinetic = np.exp(-0.5j * dt * symbol)
        self.b, self.dt, self.gauge, self.cell_volume = b, dt, gauge, cell_volume

    def __call__(self, psi):
        psi = _ifftn(self.half_kinetic * _fftn(psi))
        mu = gauge_mu(psi, self.b, self.cell_volume, self.gauge)
        phase = self.dt * (0.5 * self.b * np.abs(psi) ** 4 - mu)
        if np.max(np.abs(phase)) > np.pi:
            raise StepTooLarge(f"nonlinear phase {np.max(np.abs(phase)):.3g} rad per step exceeds pi")
        psi = psi * np.exp(-1j * phase)
        psi = _ifftn(self.half_kinetic * _fftn(psi))
        return psi, mu


def evolve(field: WaveField, params: GpeParams, neighbours=True):
    """Integrate the quintic GPE from ``t = 0`` to ``params.t_end``.

    Snapshots are taken every ``checkpoint_stride`` steps and at the final
    time.  With ``neighbours`` the fields one step before and after every
    checkpoint are kept as well; this costs one extra step past ``t_end``.
    Raises ``StepTooLarge`` if the nonlinear phase of one step exceeds pi.
    """
    g = field.grid
    stepper = _SplitStep(g.k_squared(), params.coupling, params.dt, params.gauge, g.cell_volume)
    n_steps = params.steps
    marks = set(range(0, n_steps + 1, params.checkpoint_stride)) | {n_steps}
    psi = field.values.copy()
    times, snaps, mus, mu_steps = [], [], [], []
    before, after = [], []
    prev = None
    pending_after = []
    for k in range(n_steps + (1 if neighbours else 0) + 1):
        for idx in pending_after:
            after[idx] = WaveField(g, psi.copy())
        pending_after = []
        if k in marks:
            times.append(k * params.dt)
            snaps.append(WaveField(g, psi.copy()))
            mus.append(gauge_mu(psi, params.coupling, g.cell_volume, params.gauge))
            if neighbours:
                before.append(None if prev is None else WaveField(g, prev))
                after.append(None)
                pending_after.append(len(after) - 1)
        if k >= n_steps + (1 if neighbours else 0):
            break
        prev = psi.copy() if neighbours else None
        psi, mu = stepper(psi)
        if k < n_steps:
            mu_steps.append(mu)
    return Trajectory(params=params, times=np.array(times), snapshots=snaps, mu=np.array(mus),
                      mu_steps=np.array(mu_steps), before=before, after=after)


def accumulated_phase(traj: Trajectory):
    """``Phi(t) = int_0^t mu_s ds`` at every checkpoint by the trapezoid rule on
    the per-step gauge values, sampled at the step midpoints and held constant
    over the first and last half step."""
    dt = traj.params.dt
    mu = traj.mu_steps
    if mu.size == 0:
        return np.zeros_like(traj.times)
    # cumulative trapezoid on nodes (k + 1/2) dt, plus the two end half-steps
    trap = np.concatenate([[0.0], np.cumsum(0.5 * dt * (mu[1:] + mu[:-1]))])
    out = []
    for t in traj.times:
        n = int(round(t / dt))
        if n == 0:
            out.append(0.0)
        else:
            out.append(0.5 * dt * mu[0] + trap[n - 1] + 0.5 * dt * mu[n - 1])
    return np.array(out)


@dataclass
class GaugeCheck:
    deviation: float  # max_t ||phi_gauged - e^{i Phi} phi_ungauged||_inf
    energy_mismatch: np.ndarray  # |<phi, i d_t phi> - E| at interior checkpoints
    phase: np.ndarray


def gauge_phase_check(traj_gauged: Trajectory, traj_ungauged: Trajectory):
    """Compare a gauged and an ungauged run after global phase alignment, and
    test the energy compatibility of the gauged run with centred differences."""
    pg, pu = traj_gauged.params, traj_ungauged.params
    if (pg.dt != pu.dt or pg.coupling != pu.coupling or len(traj_gauged.times) != len(traj_ungauged.times)
            or not np.allclose(traj_gauged.times, traj_ungauged.times)
            or not np.array_equal(traj_gauged.snapshots[0].values, traj_ungauged.snapshots[0].values)):
        raise MismatchedRuns("trajectories differ in initial datum, dt, coupling or checkpoints")
    phase = accumulated_phase(traj_gauged)
    dev = 0.0
    for ph, a, b in zip(phase, traj_gauged.snapshots, traj_ungauged.snapshots):
        dev = max(dev, float(np.max(np.abs(a.values - np.exp(1j * ph) * b.values))))
    mism = []
    for snap, lo, hi in zip(traj_gauged.snapshots, traj_gauged.before, traj_gauged.after):
        if lo is None or hi is None:
            continue
        dphi = (hi.values - lo.values) / (2.0 * pg.dt)
        lhs = float(np.real(snap.grid.cell_volume * np.sum(np.conj(snap.values) * 1j * dphi)))
        mism.append(abs(lhs - energy(snap, pg.coupling).total))
    return GaugeCheck(deviation=dev, energy_mismatch=np.array(mism), phase=phase)


# -- lattice variant ------------------------------------------------------

def lattice_symbol(sites):
    """Symbol ``2 - 2 cos k`` of the unit-spacing periodic discrete Laplacian."""
    k = 2.0 * np.pi * np.fft.fftfreq(sites)
    return 2.0 - 2.0 * np.cos(k)


def lattice_nls_evolve(phi0, g3, times, dt=1e-3):
    """Evolve ``i d_t phi = -Delta_disc phi + (g3/2) |phi|^4 phi`` on a ring of
    ``len(phi0)`` sites (no gauge) and return ``phi`` at each of ``times``."""
    phi = np.asarray(phi0, dtype=complex).copy()
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("times must be nondecreasing and nonnegative")
    out = np.empty((times.size, phi.size), dtype=complex)
    t = 0.0
    for i, target in enumerate(times):
        span = target - t
        n = int(np.ceil(span / dt - 1e-9)) if span > 0 else 0
        if n:
            stepper = _SplitStep(lattice_symbol(phi.size), g3, span / n, "none", 1.0)
            for _ in range(n):
                phi, _ = stepper(phi)
        t = target
        out[i] = phi
    return out


# -- initial data ---------------------------------------------------------

def plane_wave(grid: GridSpec, amplitude, mode):
    """``rho exp(i k.x)`` with ``k = 2 pi mode / L`` (``mode`` an integer vector)."""
    mode = np.broadcast_to(np.asarray(mode, dtype=float), (grid.dim,))
    k = 2.0 * np.pi * mode / grid.extent
    phase = sum(kk * xx for kk, xx in zip(k, grid.mesh()))
    return WaveField(grid, amplitude * np.exp(1j * phase))


def plane_wave_exact(grid: GridSpec, amplitude, mode, b, t, mu=0.0):
    """Exact plane-wave solution ``rho exp(i (k.x - (|k|^2 + (b/2) rho^4 - mu) t))``."""
    mode = np.broadcast_to(np.asarray(mode, dtype=float), (grid.dim,))
    k = 2.0 * np.pi * mode / grid.extent
    w = float(np.dot(k, k)) + 0.5 * b * amplitude ** 4 - mu
    return plane_wave(grid, amplitude, mode).values * np.exp(-1j * w * t)


def gaussian(grid: GridSpec, sigma, center=None, mass=None):
    """Periodic-cell Gaussian ``exp(-|x - c|^2 / (2 sigma^2))`` (minimum-image
    distance), optionally rescaled to the given mass."""
    if center is None:
        center = np.full(grid.dim, 0.5 * grid.extent)
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    r2 = 0.0
    for xx, c in zip(grid.mesh(), center):
        d = (xx - c + 0.5 * grid.extent) % grid.extent - 0.5 * grid.extent
        r2 = r2 + d * d
    f = WaveField(grid, np.exp(-r2 / (2.0 * sigma ** 2)))
    if mass is not None:
        f.values *= np.sqrt(mass / f.mass())
    return f


def free_gaussian_exact(x, sigma, t):
    """Free evolution of ``exp(-x^2/(2 sigma^2))`` under ``i d_t = -d_xx`` on R."""
    s = sigma ** 2 + 2j * t
    return np.sqrt(sigma ** 2 / s) * np.exp(-x ** 2 / (2.0 * s))


def smooth_random_field(grid: GridSpec, rng, modes=3, amplitude=1.0):
    """Random trigonometric polynomial with ``|mode_i| <= modes`` on every axis."""
    g = grid
    coef_shape = (2 * modes + 1,) * g.dim
    c = rng.standard_normal(coef_shape) + 1j * rng.standard_normal(coef_shape)
    c *= amplitude / np.sqrt(c.size)
    spec = np.zeros(g.shape, dtype=complex)
    idx = np.r_[0:modes + 1, -modes:0]
    spec[np.ix_(*([idx] * g.dim))] = c
    vals = _ifftn(spec) * spec.size
    return WaveField(g, vals)


def initial_field(grid: GridSpec, cfg):
    """Initial datum from a config mapping with ``initial`` in
    {``plane_wave``, ``gaussian``, ``file``}."""
    kind = cfg.get("initial", "gaussian")
    if kind == "plane_wave":
        return plane_wave(grid, float(cfg.get("rho", 1.0)), cfg.get("k", [1] * grid.dim))
    if kind == "gaussian":
        return gaussian(grid, float(cfg.get("sigma", 1.0)), cfg.get("center"), cfg.get("mass"))
    if kind == "file":
        if "path" not in cfg:
            raise ConfigError("file initial datum needs 'path'")
        f = read_snapshot(cfg["path"])
        if f.grid != grid:
            raise ConfigError(f"snapshot grid {f.grid} does not match configured grid {grid}")
        return f
    raise ConfigError(f"unknown initial datum {kind!r}")


# -- ground state ---------------------------------------------------------

def periodic_trap(grid: GridSpec, omega, center=None):
    """Smooth periodic confinement ``omega^2 (L/pi)^2 sum_i sin^2(pi (x_i - c_i)/L)``,
    harmonic ``omega^2 |x - c|^2`` near the centre."""
    if center is None:
        center = np.full(grid.dim, 0.5 * grid.extent)
    L = grid.extent
    return omega ** 2 * (L / np.pi) ** 2 * sum(np.sin(np.pi * (xx - c) / L) ** 2
                                              for xx, c in zip(grid.mesh(), center))


def trapped_energy(field: WaveField, b, trap=None):
    e = energy(field, b).total
    if trap is not None:
        e += field.grid.cell_volume * float(np.sum(trap * np.abs(field.values) ** 2))
    return e


def ground_state_imaginary_time(params: GpeParams, grid: GridSpec, mass=1.0, trap_omega=0.0,
                                dtau=1e-2, tol=1e-13, max_iter=200000, initial=None):
    """Normalized gradient flow for ``E[phi] + int V_trap |phi|^2`` at fixed mass.

    Imaginary-time Strang steps followed by renormalisation, until the
    sup-norm change per step drops below ``tol * dtau``.  ``trap_omega = 0``
    gives the torus problem.  Raises ``NoConvergence`` after ``max_iter``.
    """
    b = params.coupling
    trap = periodic_trap(grid, trap_omega) if trap_omega > 0 else np.zeros(grid.shape)
    half_kin = np.exp(-0.5 * dtau * grid.k_squared())
    if initial is None:
        sigma = grid.extent / 8.0 if trap_omega <= 0 else 1.0 / np.sqrt(trap_omega)
        psi = gaussian(grid, sigma, mass=mass).values
        if trap_omega <= 0:
            psi = psi + np.sqrt(mass / grid.volume)
    else:
        psi = np.asarray(initial.values, dtype=complex).copy()
    psi = np.abs(psi).astype(complex)  # real nonnegative start: the minimizer is real
    norm = lambda p: p * np.sqrt(mass / (grid.cell_volume * np.sum(np.abs(p) ** 2)))
    psi = norm(psi)
    for _ in range(max_iter):
        new = _ifftn(half_kin * _fftn(psi))
        new = new * np.exp(-dtau * (0.5 * b * np.abs(new) ** 4 + trap))
        new = _ifftn(half_kin * _fftn(new))
        new = norm(new.real.astype(complex))
        change = float(np.max(np.abs(new - psi)))
        psi = new
        if change < tol * dtau * max(1.0, float(np.max(np.abs(psi)))):
            return WaveField(grid, psi)
    raise NoConvergence(f"imaginary-time flow not converged after {max_iter} iterations")


def spectral_tail_ratio(field: WaveField, fraction=0.9):
    """Largest Fourier coefficient with some ``|k_i|`` beyond ``fraction`` of the
    Nyquist wavenumber, relative to the largest coefficient overall."""
    g = field.grid
    c = np.abs(_fftn(field.values))
    k = np.abs(g.wavenumbers())
    kmax = np.pi / g.spacing
    outer = np.zeros(g.shape, dtype=bool)
    for ax in range(g.dim):
        shape = [1] * g.dim
        shape[ax] = g.points
        outer |= (k >= fraction * kmax).reshape(shape)
    return float(c[outer].max() / c.max())


# -- I/O ------------------------------------------------------------------

def write_snapshot(path, field: WaveField):
    """Binary snapshot: 16-byte little-endian header (magic ``TBGP``, dim:u16,
    n:u16, L:f64) followed by ``n^dim`` complex128 values in C order."""
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, g.dim, g.points, g.extent))
        fh.write(np.ascontiguousarray(field.values, dtype="<c16").tobytes())


def read_snapshot(path):
    data = Path(path).read_bytes()
    if len(data) < SNAPSHOT_HEADER.size:
        raise ConfigError(f"{path}: truncated header")
    magic, dim, n, L = SNAPSHOT_HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise ConfigError(f"{path}: bad magic {magic!r}")
    grid = GridSpec(dim, L, n)
    body = np.frombuffer(data, dtype="<c16", offset=SNAPSHOT_HEADER.size)
    if body.size != n ** dim:
        raise ConfigError(f"{path}: expected {n ** dim} values, found {body.size}")
    return WaveField(grid, body.reshape(grid.shape).astype(complex))


def trajectory_rows(traj: Trajectory):
    rows = []
    for t, s, mu in zip(traj.times, traj.snapshots, traj.mu):
        e = energy(s, traj.params.coupling)
        rows.append([float(t), e.mass, e.kinetic, e.potential, e.total, float(mu)])
    return rows


def write_trajectory_csv(path, traj: Trajectory):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for row in trajectory_rows(traj):
            w.writerow([repr(v) for v in row])
