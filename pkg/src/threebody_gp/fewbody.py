"""Bosons on a periodic 1D lattice with an on-site three-body interaction.

    H = sum_i (2 n_i - a_{i+1}^* a_i - a_{i-1}^* a_i) + (g3 / N^2) sum_i n_i (n_i - 1)(n_i - 2) / 6

in the occupation-number basis.  The hopping part is the second quantisation
of the discrete Laplacian with symbol ``2 - 2 cos k``; the interaction is the
mean-field scaling of a three-body contact term, chosen so that the energy
per particle of a product state ``phi^{(x)N}`` tends to the discrete GP
functional ``<phi, -Delta phi> + (g3/6) sum |phi_i|^6``.

Time evolution uses a Lanczos approximation of ``exp(-i H tau)`` with full
reorthogonalisation and adaptive substeps.  The one-body density matrix is
stored as the kernel ``gamma[x, y] = <a_y^* a_x>`` so that a product state
gives ``gamma = N |phi><phi|``.
"""

import csv
import math
import struct
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy import linalg, sparse

from .errors import DimensionCap, KrylovBreakdown, ToleranceNotMet
from .gpe import lattice_nls_evolve

DEFAULT_DIMENSION_CAP = 200_000
GAMMA_MAGIC = b"GAMM"
GAMMA_HEADER = struct.Struct("<4sHHd")  # magic, L, N, t: 16 bytes
RUN_COLUMNS = ("t", "norm", "energy", "depletion")
SUMMARY_COLUMNS = ("N", "max_depletion")


@dataclass(frozen=True)
class LatticeSpec:
    sites: int

    def __post_init__(self):
        if self.sites < 2:
            raise ValueError("need at least two sites")

    def bonds(self):
        """Directed nearest-neighbour hops ``(i, j)`` on the ring, both ways."""
        i = np.arange(self.sites)
        return np.concatenate([np.stack([i, (i + 1) % self.sites], 1),
                               np.stack([i, (i - 1) % self.sites], 1)])

    def laplacian(self):
        """Dense ``-Delta`` (2 on the diagonal, -1 to each neighbour)."""
        h = 2.0 * np.eye(self.sites)
        for i, j in self.bonds():
            h[i, j] -= 1.0
        return h


def basis_dimension(sites, n):
    return math.comb(sites + n - 1, n)


@dataclass
class FockBasis:
    """All occupations ``(n_1, ..., n_L)`` with ``sum n_i = N`` in descending
    lexicographic order."""

    sites: int
    n: int
    occupations: np.ndarray  # (dim, L) int64
    _binom: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self):
        return self.occupations.shape[0]

    def unrank(self, i):
        return self.occupations[i]

    def rank(self, occ):
        """Index of each occupation row (vectorised combinatorial ranking)."""
        occ = np.atleast_2d(np.asarray(occ, dtype=np.int64))
        L = self.sites
        remaining = self.n - np.concatenate([np.zeros((occ.shape[0], 1), dtype=np.int64),
                                             np.cumsum(occ, axis=1)[:, :-1]], axis=1)
        r = np.zeros(occ.shape[0], dtype=np.int64)
        for i in range(L - 1):
            k = L - i - 2
            top = remaining[:, i] - occ[:, i] + k
            r += self._binom[top, k + 1]
        return r


def enumerate_basis(sites, n, cap=DEFAULT_DIMENSION_CAP):
    """Fock basis of ``n`` bosons on ``sites`` sites.  Raises ``DimensionCap``
    if ``C(L + N - 1, N)`` exceeds ``cap``."""
    if sites < 1 or n < 0:
        raise ValueError("need sites >= 1 and N >= 0")
    dim = basis_dimension(sites, n)
    if dim > cap:
        raise DimensionCap(f"dimension C({sites + n - 1}, {n}) = {dim} exceeds cap {cap}")
    occ = np.zeros((dim, sites), dtype=np.int64)
    row = 0

    def fill(prefix_row, site, remaining):
        nonlocal row
        if site == sites - 1:
            occ[row, :site] = prefix_row[:site]
            occ[row, site] = remaining
            row += 1
            return
        for v in range(remaining, -1, -1):
            prefix_row[site] = v
            fill(prefix_row, site + 1, remaining - v)

    fill(np.zeros(sites, dtype=np.int64), 0, n)
    top = n + sites
    binom = np.zeros((top + 1, sites + 1), dtype=np.int64)
    for a in range(top + 1):
        for b in range(sites + 1):
            binom[a, b] = math.comb(a, b) if a >= 0 else 0
    return FockBasis(sites, n, occ, binom)


def build_hamiltonian(spec: LatticeSpec, n, g3, basis: FockBasis = None, cap=DEFAULT_DIMENSION_CAP):
    """Sparse real symmetric Hamiltonian in CSR form."""
    if basis is None:
        basis = enumerate_basis(spec.sites, n, cap)
    occ = basis.occupations
    dim = basis.dim
    rows, cols, vals = [], [], []
    diag = 2.0 * occ.sum(axis=1).astype(float)
    if n > 0:
        diag = diag + (g3 / float(n) ** 2) * np.sum(occ * (occ - 1) * (occ - 2), axis=1) / 6.0
    rows.append(np.arange(dim))
    cols.append(np.arange(dim))
    vals.append(diag)
    for src, dst in spec.bonds():
        # a_dst^* a_src
        ok = occ[:, src] > 0
        idx = np.nonzero(ok)[0]
        new = occ[idx].copy()
        amp = np.sqrt((new[:, src] * (new[:, dst] + 1)).astype(float))
        new[:, src] -= 1
        new[:, dst] += 1
        rows.append(basis.rank(new))
        cols.append(idx)
        vals.append(-amp)
    H = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(dim, dim))
    H.sum_duplicates()
    return H


@dataclass
class ManyBodyState:
    basis: FockBasis
    amplitudes: np.ndarray

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))


def product_state(basis: FockBasis, phi):
    """Amplitudes of ``phi^{(x)N}``: ``sqrt(N! / prod n_i!) prod phi_i^{n_i}``."""
    phi = np.asarray(phi, dtype=complex)
    occ = basis.occupations
    logc = math.lgamma(basis.n + 1) - np.sum([[math.lgamma(v + 1) for v in row] for row in occ], axis=1)
    amp = np.exp(0.5 * logc) * np.prod(phi[None, :] ** occ, axis=1)
    return ManyBodyState(basis, amp)


def expectation(H, state: ManyBodyState):
    v = state.amplitudes
    return float(np.real(np.vdot(v, H @ v)))


# -- Krylov propagation -----------------------------------------------------

@dataclass
class KrylovStats:
    substeps: int = 0
    rejected: int = 0
    max_error: float = 0.0


def _lanczos(H, v, m):
    """Lanczos with full reorthogonalisation.  Returns ``(Q, alpha, beta, m_eff)``
    where ``beta[m_eff - 1]`` is the coupling to the next (unused) vector."""
    n = v.size
    m = min(m, n)
    Q = np.zeros((m, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    nrm = np.linalg.norm(v)
    Q[0] = v / nrm
    scale = 0.0
    for j in range(m):
        w = H @ Q[j]
        alpha[j] = float(np.real(np.vdot(Q[j], w)))
        w = w - alpha[j] * Q[j] - (beta[j - 1] * Q[j - 1] if j > 0 else 0.0)
        # two passes of classical Gram-Schmidt against the whole basis
        for _ in range(2):
            w = w - Q[:j + 1].T @ (Q[:j + 1].conj() @ w)
        b = float(np.linalg.norm(w))
        beta[j] = b
        scale = max(scale, abs(alpha[j]), b)
        if not np.isfinite(b):
            raise KrylovBreakdown("non-finite Lanczos coefficient")
        if b <= 1e-13 * max(scale, 1.0):
            return Q[:j + 1], alpha[:j + 1], beta[:j + 1], j + 1, True
        if j + 1 < m:
            Q[j + 1] = w / b
    return Q, alpha, beta, m, False


def _small_expm(alpha, beta_inner, tau):
    """``exp(-i T tau) e_1`` for the symmetric tridiagonal ``T``."""
    if alpha.size == 1:
        return np.array([np.exp(-1j * alpha[0] * tau)])
    w, V = linalg.eigh_tridiagonal(alpha, beta_inner)
    return V @ (np.exp(-1j * w * tau) * V[0].conj())


def evolve_krylov(state: ManyBodyState, H, t, tol=1e-12, m=30, max_substeps=100000, stats=None):
    """``exp(-i H t) psi`` by Lanczos substeps.

    Each substep of length ``tau`` is accepted when the a-posteriori error
    estimate ``beta_m |e_m^T exp(-i T tau) e_1|`` is below ``tol * tau / t``
    or at the rounding level of the estimate itself; otherwise ``tau`` is
    halved.  A substep is exact when the Krylov space is
    invariant.  Raises ``ToleranceNotMet`` if the substep length collapses,
    ``KrylovBreakdown`` on loss of orthogonality.
    """
    if t == 0:
        return ManyBodyState(state.basis, state.amplitudes.copy())
    stats = KrylovStats() if stats is None else stats
    psi = np.asarray(state.amplitudes, dtype=complex).copy()
    total = float(abs(t))
    sign = 1.0 if t > 0 else -1.0
    done = 0.0
    tau = total
    while done < total * (1 - 1e-15):
        tau = min(tau, total - done)
        nrm = np.linalg.norm(psi)
        Q, alpha, beta, k, invariant = _lanczos(H, psi, m)
        ortho = np.max(np.abs(Q.conj() @ Q.T - np.eye(k)))
        if ortho > 1e-8:
            raise KrylovBreakdown(f"Krylov basis lost orthogonality ({ortho:.2e})")
        # the estimate cannot resolve anything below the rounding level of y[-1]
        floor = 4.0 * k * np.finfo(float).eps * beta[k - 1]
        while True:
            y = _small_expm(alpha, beta[:k - 1], sign * tau)
            err = 0.0 if invariant else beta[k - 1] * abs(y[-1])
            if err <= max(tol * tau / total, floor):
                break
            stats.rejected += 1
            tau *= 0.5
            if tau < total * 1e-10:
                raise ToleranceNotMet("Krylov substep underflow")
        psi = nrm * (Q.T @ y)
        done += tau
        stats.substeps += 1
        stats.max_error = max(stats.max_error, err)
        if stats.substeps > max_substeps:
            raise ToleranceNotMet("too many Krylov substeps")
        tau = tau * 2.0 if err < 0.1 * tol * tau / total else tau
    return ManyBodyState(state.basis, psi)


def dense_propagator_apply(H, psi, t):
    """Oracle: ``exp(-i H t) psi`` through a dense eigendecomposition."""
    w, V = np.linalg.eigh(H.toarray() if sparse.issparse(H) else H)
    return V @ (np.exp(-1j * w * t) * (V.conj().T @ psi))


# -- density matrices -----------------------------------------------------

@dataclass
class OneBodyDM:
    gamma: np.ndarray  # gamma[x, y] = <a_y^* a_x>

    @property
    def trace(self):
        return float(np.real(np.trace(self.gamma)))


def one_body_dm(state: ManyBodyState):
    basis = state.basis
    occ = basis.occupations
    psi = state.amplitudes
    L = basis.sites
    gamma = np.zeros((L, L), dtype=complex)
    prob = np.abs(psi) ** 2
    gamma[np.diag_indices(L)] = prob @ occ
    for x in range(L):
        src = np.nonzero(occ[:, x] > 0)[0]
        if src.size == 0:
            continue
        for y in range(L):
            if y == x:
                continue
            new = occ[src].copy()
            amp = np.sqrt((new[:, x] * (new[:, y] + 1)).astype(float))
            new[:, x] -= 1
            new[:, y] += 1
            tgt = basis.rank(new)
            # <psi| a_y^* a_x |psi>
            gamma[x, y] = np.sum(np.conj(psi[tgt]) * amp * psi[src])
    return OneBodyDM(gamma)


def depletion(state_or_dm, phi, n=None):
    """``1 - <phi, gamma phi> / N`` clipped to ``[0, 1]`` (``phi`` normalised)."""
    if isinstance(state_or_dm, ManyBodyState):
        dm = one_body_dm(state_or_dm)
        n = state_or_dm.basis.n
    else:
        dm = state_or_dm
        n = dm.trace if n is None else n
    phi = np.asarray(phi, dtype=complex)
    val = 1.0 - float(np.real(np.vdot(phi, dm.gamma @ phi))) / n
    return min(1.0, max(0.0, val))


def default_orbital(sites, amplitude=0.3):
    """Uniform orbital plus a smooth cosine perturbation, normalised."""
    x = np.arange(sites)
    phi = 1.0 + amplitude * np.cos(2.0 * np.pi * x / sites)
    return (phi / np.linalg.norm(phi)).astype(complex)


@dataclass
class RunRecord:
    n: int
    times: np.ndarray
    norm: np.ndarray
    energy: np.ndarray
    depletion: np.ndarray
    trace: np.ndarray
    min_eig: np.ndarray
    hermitian_error: np.ndarray
    gammas: List[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def max_depletion(self):
        return float(self.depletion.max())


@dataclass
class MeanFieldComparison:
    sites: int
    g3: float
    records: List[RunRecord]

    def summary(self):
        return [(r.n, r.max_depletion) for r in self.records]

    def slope(self):
        ns = np.array([r.n for r in self.records], dtype=float)
        d = np.array([r.max_depletion for r in self.records])
        if np.any(d <= 0):
            return float("nan")
        return float(np.polyfit(np.log(ns), np.log(d), 1)[0])


def mean_field_comparison(sites, n_list, g3, phi0=None, t_end=1.0, checkpoints=21, tol=1e-12,
                          nls_dt=1e-3, keep_gamma=False, cap=DEFAULT_DIMENSION_CAP):
    """Evolve ``phi0^{(x)N}`` exactly and ``phi0`` under the lattice quintic NLS,
    recording the depletion against the evolved orbital at ``checkpoints``
    equally spaced times in ``[0, t_end]``."""
    spec = LatticeSpec(sites)
    phi0 = default_orbital(sites) if phi0 is None else np.asarray(phi0, dtype=complex)
    phi0 = phi0 / np.linalg.norm(phi0)
    times = np.linspace(0.0, t_end, checkpoints)
    orbitals = lattice_nls_evolve(phi0, g3, times, dt=nls_dt)
    records = []
    for n in n_list:
        basis = enumerate_basis(sites, n, cap)
        H = build_hamiltonian(spec, n, g3, basis)
        state = product_state(basis, phi0)
        rec = dict(norm=[], energy=[], depletion=[], trace=[], min_eig=[], herm=[], gam=[])
        prev_t = 0.0
        for t, orb in zip(times, orbitals):
            state = evolve_krylov(state, H, t - prev_t, tol=tol)
            prev_t = t
            dm = one_body_dm(state)
            g = dm.gamma
            rec["norm"].append(state.norm())
            rec["energy"].append(expectation(H, state))
            rec["depletion"].append(depletion(dm, orb / np.linalg.norm(orb), n))
            rec["trace"].append(dm.trace)
            rec["herm"].append(float(np.max(np.abs(g - g.conj().T))))
            rec["min_eig"].append(float(np.linalg.eigvalsh(0.5 * (g + g.conj().T)).min()))
            if keep_gamma:
                rec["gam"].append(g.copy())
        records.append(RunRecord(n=n, times=times, norm=np.array(rec["norm"]),
                                 energy=np.array(rec["energy"]), depletion=np.array(rec["depletion"]),
                                 trace=np.array(rec["trace"]), min_eig=np.array(rec["min_eig"]),
                                 hermitian_error=np.array(rec["herm"]), gammas=rec["gam"]))
    return MeanFieldComparison(sites, g3, records)


# -- I/O ------------------------------------------------------------------

def write_run_csv(path, record: RunRecord):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_COLUMNS)
        for row in zip(record.times, record.norm, record.energy, record.depletion):
            w.writerow([repr(float(v)) for v in row])


def write_summary_csv(path, comparison: MeanFieldComparison):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for n, d in comparison.summary():
            w.writerow([n, repr(float(d))])


def write_gamma(path, gamma, n, t):
    """Binary one-body density matrix: 16-byte little-endian header (magic
    ``GAMM``, L:u16, N:u16, t:f64) then ``L*L`` complex128 values, row-major."""
    gamma = np.asarray(gamma, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(GAMMA_HEADER.pack(GAMMA_MAGIC, gamma.shape[0], int(n), float(t)))
        fh.write(np.ascontiguousarray(gamma).tobytes())


def read_gamma(path):
    with open(path, "rb") as fh:
        data = fh.read()
    magic, L, n, t = GAMMA_HEADER.unpack_from(data)
    if magic != GAMMA_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    g = np.frombuffer(data, dtype="<c16", offset=GAMMA_HEADER.size).reshape(L, L)
    return g.astype(complex), n, t
