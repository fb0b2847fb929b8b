import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special
from scipy.stats import qmc

from threebody_gp.errors import ConfigError, InvalidGrid, LambdaTooSmall, TailNotResolved
from threebody_gp.scattering.coupling import (constant_profile, effective_coupling_error, periodic_test_profile,
                                              sphere_directions)
from threebody_gp.scattering.geometry import (gradient_stretch_from_parts, hyperradius, hyperradius_from_parts,
                                              mmatrix_constants, sphere_mean_stretch)
from threebody_gp.scattering.norms import (NORM_COLUMNS, field_norms, pointwise_bound_constants, sample_points)
from threebody_gp.scattering.potentials import (bump_potential, potential_from_config, step_potential,
                                                table_potential, zero_potential)
from threebody_gp.scattering.radial import RadialGrid, hypervolume, make_grid, solve_scattering
from threebody_gp.scattering.truncated import cutoff_profile, truncate


def fitted_exponent(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def step_closed_form(v0, r):
    """Exact solution for ``v0 1(r <= 1)``: ``1 + c I_2(k r) / r^2`` inside with
    ``k^2 = v0 / 2`` and ``A r^{-4}`` outside, matched in value and slope at 1."""
    k = np.sqrt(v0 / 2.0)
    c = -4.0 / (k * special.iv(3, k) + 4.0 * special.iv(2, k))
    A = 1.0 + c * special.iv(2, k)
    r = np.asarray(r, dtype=float)
    safe = np.where(r > 0, r, 1.0)
    inner = np.where(r > 0, 1.0 + c * special.iv(2, k * safe) / safe ** 2, 1.0 + c * k * k / 8.0)
    return np.where(r <= 1.0, inner, A / safe ** 4), A


@pytest.fixture(scope="module")
def step10():
    sol = solve_scattering(step_potential(10.0))
    hypervolume(sol)
    return sol


# -- geometry -------------------------------------------------------------

def test_m_matrix_constants():
    mc = mmatrix_constants()
    assert mc.block[0, 0] == pytest.approx((np.sqrt(3) + 1) / (2 * np.sqrt(2)), rel=1e-15)
    assert mc.block[0, 1] == pytest.approx((np.sqrt(3) - 1) / (2 * np.sqrt(2)), rel=1e-15)
    target = 0.5 * np.kron(np.array([[2.0, 1.0], [1.0, 2.0]]), np.eye(3))
    assert np.max(np.abs(mc.m @ mc.m - target)) < 1e-15
    assert np.max(np.abs(mc.m @ mc.m_inv - np.eye(6))) < 1e-14
    assert mc.det_m == pytest.approx(3 * np.sqrt(3) / 8, rel=1e-14)
    assert mc.det_m == pytest.approx(np.linalg.det(mc.m), rel=1e-13)
    assert mc.sphere_area_5 == pytest.approx(np.pi ** 3, rel=1e-15)


def test_hyperradius_is_exchange_symmetric():
    rng = np.random.default_rng(0)
    p = rng.standard_normal((50, 3, 3))  # particles x, y, z
    rel = lambda a, b, c: np.concatenate([a - b, a - c], axis=-1)
    base = hyperradius(rel(p[:, 0], p[:, 1], p[:, 2]))
    pair_sum = sum(np.sum((p[:, i] - p[:, j]) ** 2, axis=-1) for i, j in ((0, 1), (1, 2), (0, 2)))
    assert np.allclose(base ** 2, 2.0 / 3.0 * pair_sum, rtol=1e-13)
    for perm in ((1, 0, 2), (2, 1, 0), (0, 2, 1), (1, 2, 0)):
        assert np.allclose(hyperradius(rel(*(p[:, i] for i in perm))), base, rtol=1e-13)


def test_hyperradius_from_parts_and_gradient_stretch():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2, 40, 3))
    u = np.concatenate([a, b], axis=1)
    na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
    cos = np.sum(a * b, axis=1) / (na * nb)
    assert np.allclose(hyperradius_from_parts(na, nb, cos), hyperradius(u), rtol=1e-12)
    minv = mmatrix_constants().m_inv
    direct = np.linalg.norm(u @ (minv @ minv).T, axis=1) / hyperradius(u)
    assert np.allclose(gradient_stretch_from_parts(na, nb, cos), direct, rtol=1e-12)


def test_sphere_mean_stretch_matches_sampling():
    s = sphere_directions(1 << 14, seed=3)
    sampled = np.mean(np.linalg.norm(s @ mmatrix_constants().m_inv.T, axis=1) ** 2)
    # the exact second moment is the normalised trace of M^{-2}
    assert sphere_mean_stretch(2) == pytest.approx(np.trace(mmatrix_constants().m_inv_sq) / 6, rel=1e-12)
    assert sampled == pytest.approx(sphere_mean_stretch(2), rel=1e-3)


# -- potentials -----------------------------------------------------------

def test_potential_families():
    assert np.all(step_potential(3.0)(np.array([0.0, 1.0, 1.01])) == [3.0, 3.0, 0.0])
    assert bump_potential(2.0)(np.array([0.0]))[0] == 2.0
    tab = table_potential([0.0, 0.5, 1.0], [2.0, 1.0, 0.0])
    assert tab(np.array([0.25, 0.75, 2.0])).tolist() == [1.5, 0.5, 0.0]
    assert zero_potential().is_zero and step_potential(0.0).is_zero
    with pytest.raises(ValueError):
        table_potential([0.0, 1.0], [1.0, -1.0])
    with pytest.raises(ConfigError):
        potential_from_config({"potential": "table"})
    with pytest.raises(ConfigError):
        potential_from_config({"potential": "coulomb"})


# -- radial solver --------------------------------------------------------

def test_zero_potential_gives_zero():
    sol = solve_scattering(zero_potential())
    assert np.all(sol.g == 0.0) and sol.tail_coeff == 0.0
    assert hypervolume(sol)[:3] == (0.0, 0.0, 0.0)


def test_step_matches_closed_form():
    sol = solve_scattering(step_potential(4.0))
    exact, A = step_closed_form(4.0, sol.grid.nodes)
    assert np.max(np.abs(sol.g - exact)) < 1e-8
    assert sol.tail_coeff == pytest.approx(A, rel=1e-7)


def test_hard_core_matches_closed_form():
    # the analytic penetration depth keeps A near 1 - 4 (2 / v0)^{1/2}, not 1
    sol = solve_scattering(step_potential(1e4))
    _, A = step_closed_form(1e4, 1.0)
    assert sol.tail_coeff == pytest.approx(A, rel=1e-5)
    assert A == pytest.approx(0.9446, abs=1e-4)


@pytest.mark.parametrize("v", [step_potential(1.0), step_potential(10.0), step_potential(100.0),
                               bump_potential(30.0), table_potential([0, 0.4, 1.0], [20.0, 5.0, 0.0])],
                         ids=["step1", "step10", "step100", "bump", "table"])
def test_two_routes_agree(v):
    sol = solve_scattering(v)
    b_int, b_tail, A, disc = hypervolume(sol)
    assert disc <= 1e-6
    assert b_tail == pytest.approx(3 * np.sqrt(3) * np.pi ** 3 * A, rel=1e-14)
    assert np.all((sol.g >= 0) & (sol.g <= 1))


def test_divergence_theorem_flux(step10):
    # 2 int_{|w| < R} Delta g = 2 |S^5| R^5 g'(R) = -|S^5| int v (1 - g) r^5
    mc = mmatrix_constants()
    moment = step10.b_integral / (mc.det_m * mc.sphere_area_5)
    for R in (2.0, 5.0, 9.0):
        flux = 2.0 * R ** 5 * float(step10(R, 1))
        assert flux == pytest.approx(-moment, rel=1e-5)
    assert step10.b_tail == pytest.approx(8 * mc.sphere_area_5 * mc.det_m * step10.tail_coeff)


def test_residual_of_the_ode(step10):
    r = step10.grid.nodes
    h = r[1] - r[0]
    g = step10.g
    i = np.arange(1, r.size - 1)
    lhs = (g[i + 1] - 2 * g[i] + g[i - 1]) / h ** 2 + 5 / r[i] * (g[i + 1] - g[i - 1]) / (2 * h)
    v = step10.potential.cell_average(r[i], h)
    assert np.max(np.abs(lhs - 0.5 * v * (g[i] - 1))) < 1e-8 * np.max(np.abs(0.5 * v))


def test_grid_scaling_reproduces_omega_n():
    v = step_potential(10.0)
    base = solve_scattering(v, make_grid(1.0, 400))
    for n in (100.0, 1e4):
        scaled = solve_scattering(v.scaled(n), make_grid(1.0 / np.sqrt(n), 400))
        assert np.allclose(scaled.grid.nodes * np.sqrt(n), base.grid.nodes, rtol=1e-13)
        assert np.max(np.abs(scaled.g - base.g)) < 1e-8


def test_invalid_grids():
    v = step_potential(5.0)
    with pytest.raises(InvalidGrid):
        solve_scattering(v, make_grid(1.0, 100))
    with pytest.raises(InvalidGrid):
        solve_scattering(v, make_grid(1.0, 1000, r_max_factor=5.0))
    with pytest.raises(InvalidGrid):
        solve_scattering(v, RadialGrid(np.linspace(0.0, 10.0, 5001) ** 1.01))
    with pytest.raises(InvalidGrid):
        RadialGrid(np.array([0.0, 1.0, 1.0]))


def test_tail_not_resolved():
    sol = solve_scattering(step_potential(10.0))
    sol.tail_spread = 0.1
    with pytest.raises(TailNotResolved):
        hypervolume(sol)


# -- truncation -----------------------------------------------------------

def test_cutoff_profile_regions_and_smoothness():
    s = np.linspace(0, 1.5, 3001)
    c = cutoff_profile(s)
    assert np.all(c[s <= 0.5] == 1.0) and np.all(c[s >= 1.0] == 0.0)
    assert np.all(np.diff(c) <= 1e-15)
    h = 1e-6
    mid = np.linspace(0.55, 0.95, 9)
    fd1 = (cutoff_profile(mid + h) - cutoff_profile(mid - h)) / (2 * h)
    assert np.allclose(fd1, cutoff_profile(mid, 1), rtol=1e-6, atol=1e-8)
    fd2 = (cutoff_profile(mid + h, 1) - cutoff_profile(mid - h, 1)) / (2 * h)
    assert np.allclose(fd2, cutoff_profile(mid, 2), rtol=1e-6, atol=1e-6)
    for nu in (1, 2):
        assert cutoff_profile(np.array([0.5, 1.0]), nu).tolist() == [0.0, 0.0]


def test_truncation_regions(step10):
    ts = truncate(step10, 0.5, 1e3)
    rng = np.random.default_rng(2)
    x = sample_points(rng, 4000, 1e-4, 2.0)
    arg = ts.cutoff_argument(x)
    inner, outer = arg <= 0.5, arg >= 1.0
    assert inner.any() and outer.any()
    assert np.array_equal(ts.omega(x)[inner], ts.omega_untruncated(x)[inner])
    assert np.all(ts.omega(x)[outer] == 0.0) and np.all(ts.eps(x)[outer] == 0.0)
    assert np.all(ts.eps(x)[inner] == 0.0)
    assert np.all(ts.f(x) == 1.0 - ts.omega(x))
    # the cutoff vanishes beyond Euclidean |x| >= lam; by the anisotropy sqrt(3)
    # of M it equals 1 on |x| <= lam / (2 sqrt(3))
    r = np.linalg.norm(x, axis=1)
    assert np.all(arg[r >= 0.5] >= 1.0 - 1e-12)
    assert np.all(arg[r <= 0.5 / (2 * np.sqrt(3))] <= 0.5 + 1e-12)
    w, wn = ts.omega(x), ts.omega_untruncated(x)
    assert np.all((0 <= w) & (w <= wn) & (wn <= 1))


def test_lambda_too_small(step10):
    R = np.sqrt(1.5)
    with pytest.raises(LambdaTooSmall):
        truncate(step10, 0.99 * 2 * R / 10.0, 100)
    truncate(step10, 2 * R / 10.0, 100)
    with pytest.raises(LambdaTooSmall):
        truncate(step10, 0.0, 100)


def test_poisson_equation_residual(step10):
    ts = truncate(step10, 0.5, 1e3)
    rho = np.linspace(0.52, 0.98, 47) * ts.lam_h
    h = 1e-4 * ts.lam_h
    u = lambda r: ts.u_radial(r)
    lap = (u(rho + h) - 2 * u(rho) + u(rho - h)) / h ** 2 + 5 / rho * (u(rho + h) - u(rho - h)) / (2 * h)
    eps = ts.eps_radial(rho)
    assert np.max(np.abs(-2 * lap - eps)) < 1e-5 * np.max(np.abs(eps))
    # analytic derivative agrees with the finite difference of U
    fd = (u(rho + h) - u(rho - h)) / (2 * h)
    du = ts.u_radial(rho, 1)
    assert np.max(np.abs(fd - du)) < 1e-6 * np.max(np.abs(du))
    # U is constant inside the inner ball and Q / (8 rho^4) outside
    assert np.ptp(ts.u_radial(np.linspace(0, 0.49, 20) * ts.lam_h)) < 1e-14 * abs(ts.u_radial(0.0))
    far = np.array([1.5, 3.0]) * ts.lam_h
    assert np.allclose(ts.u_radial(far), ts.charge_moment / (8 * far ** 4), rtol=1e-12)


def test_u_is_the_cut_away_part_of_omega(step10):
    # outside the scaled potential support g_N is harmonic, so
    # -2 Delta_M (N^2 (1 - chi) omega_N) = eps and the decaying solution is exact
    ts = truncate(step10, 0.5, 1e3)
    rho = np.linspace(0.2, 3.0, 400) * ts.lam_h
    exact = ts.n ** 2 * (1 - ts.chi(rho)) * ts.g_n(rho)
    assert np.max(np.abs(ts.u_radial(rho) - exact)) < 1e-8 * np.max(np.abs(exact))
    assert ts.charge_moment == pytest.approx(8 * step10.tail_coeff, rel=1e-8)


def green_oracle(ts, x, replicates=16, m=12, seed=0):
    """QMC estimate of ``detM^{-1}/(8 pi^3) int eps(y) / |M^{-1}(x - y)|^4 dy``.

    With ``y = M w`` the integral becomes ``(1/(8 pi^3)) int eps(|w|) / |w_x - w|^4 dw``
    over the annulus ``lam_h/2 < |w| < lam_h``; radii are sampled uniformly
    and directions from Gaussian-mapped scrambled Sobol points.  Returns the
    mean and standard error over independent scramblings.
    """
    wx = np.atleast_2d(x) @ mmatrix_constants().m_inv.T
    lo, hi = 0.5 * ts.lam_h, ts.lam_h
    estimates = []
    for k in range(replicates):
        u = qmc.Sobol(d=7, scramble=True, seed=seed + k).random_base2(m)
        r = lo + (hi - lo) * u[:, 0]
        d = special.ndtri(np.clip(u[:, 1:], 1e-15, 1 - 1e-15))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        w = r[:, None] * d
        weight = ts.eps_radial(r) * r ** 5 * (hi - lo) * np.pi ** 3
        dist4 = np.sum((wx[:, None, :] - w[None, :, :]) ** 2, axis=-1) ** 2
        estimates.append(np.mean(weight[None, :] / dist4, axis=1) / (8 * np.pi ** 3))
    est = np.array(estimates)
    return est.mean(axis=0), est.std(axis=0, ddof=1) / np.sqrt(replicates)


def test_u_matches_green_integral(step10):
    ts = truncate(step10, 0.5, 1e3)
    rng = np.random.default_rng(3)
    # points away from the annulus, where the Green kernel is bounded on it
    inside = sample_points(rng, 50, 1e-3, 0.4 * ts.lam_h)
    outside = sample_points(rng, 50, 1.15 * ts.lam_h, 3.0 * ts.lam_h)
    x = np.concatenate([inside, outside]) @ mmatrix_constants().m.T
    assert np.all((ts.cutoff_argument(x) < 0.4 + 1e-12) | (ts.cutoff_argument(x) > 1.15 - 1e-12))
    mean, se = green_oracle(ts, x)
    exact = ts.u(x)
    assert np.all(se > 0)
    # the summed deviation lies within 3 combined standard errors, and the
    # per-point z-scores are consistent with replicate noise
    z = (mean - exact) / se
    assert abs(np.sum(mean - exact)) <= 3 * np.sqrt(np.sum(se ** 2))
    assert abs(np.mean(z)) <= 3 / np.sqrt(z.size)
    assert np.mean(z ** 2) <= 2.0
    assert np.max(np.abs(z)) <= 6.0


# -- norms ----------------------------------------------------------------

def test_zero_potential_norms_and_constants():
    ts = truncate(solve_scattering(zero_potential()), 0.5, 100)
    rep = field_norms(ts)
    assert all(v == 0.0 for v in rep.as_row()[2:])
    pc = pointwise_bound_constants(ts, 1000)
    assert (pc.omega, pc.grad_omega, pc.eps, pc.u, pc.grad_u) == (0.0,) * 5
    assert effective_coupling_error(ts, periodic_test_profile()).deviation == 0.0


def test_norm_report_columns(step10):
    rep = field_norms(truncate(step10, 0.5, 100))
    assert len(rep.as_row()) == len(NORM_COLUMNS)
    assert rep.as_row()[:2] == [0.5, 100.0]


def test_volume_norm_against_direct_6d_sampling(step10):
    ts = truncate(step10, 0.5, 100)
    rep = field_norms(ts)
    # uniform sampling of the Euclidean ball |x| < lam that contains the support
    rng = np.random.default_rng(4)
    n = 400000
    d = rng.standard_normal((n, 6))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    x = d * (ts.lam * rng.uniform(0, 1, n) ** (1 / 6))[:, None]
    vol = np.pi ** 3 / 6 * ts.lam ** 6
    vals = ts.omega(x)
    est, se = vol * vals.mean(), vol * vals.std() / np.sqrt(n)
    assert abs(est - rep.omega_L1) < 4 * se
    g = np.linalg.norm(ts.grad_omega(x), axis=1)
    est, se = vol * g.mean(), vol * g.std() / np.sqrt(n)
    assert abs(est - rep.grad_omega_L1) < 4 * se


def test_norm_exponents_in_n(step10):
    ns = [1e2, 1e3, 1e4]
    reps = [field_norms(truncate(step10, 0.5, n)) for n in ns]
    expect = {"omega_L1": -2.0, "omega_L2": -1.5, "omega_L1Linf": -1.5}
    for key, target in expect.items():
        assert fitted_exponent(ns, [getattr(r, key) for r in reps]) == pytest.approx(target, abs=0.1), key


def test_norm_exponents_in_lambda(step10):
    lams = [0.25, 0.5, 1.0]
    reps = [field_norms(truncate(step10, lam, 1e4)) for lam in lams]
    expect = {"omega_L1": 2.0, "eps_L2": -3.0, "grad_u_L2": -2.0}
    for key, target in expect.items():
        assert fitted_exponent(lams, [getattr(r, key) for r in reps]) == pytest.approx(target, abs=0.1), key


# -- pointwise constants --------------------------------------------------

def test_pointwise_constants_stable_in_n():
    sol = solve_scattering(step_potential(1e4))
    consts = [pointwise_bound_constants(truncate(sol, 0.5, n), 4096).omega for n in (1e2, 1e3, 1e4)]
    assert max(consts) / min(consts) < 1.2
    assert all(np.isfinite(consts))


def test_pointwise_constants_stable_in_lambda(step10):
    consts = [pointwise_bound_constants(truncate(step10, lam, 1e4), 4096).eps for lam in (0.25, 0.5, 1.0)]
    assert max(consts) / min(consts) < 1.2


def test_pointwise_constants_reject_small_samples(step10):
    with pytest.raises(ValueError):
        pointwise_bound_constants(truncate(step10, 0.5, 100), 999)


# -- effective coupling ---------------------------------------------------

def test_constant_profile_gives_zero_deviation(step10):
    res = effective_coupling_error(truncate(step10, 0.5, 1e3), constant_profile(1.3))
    assert res.deviation < 1e-6
    assert res.b == pytest.approx(step10.b_integral, rel=1e-6)


def test_coupling_decays_like_inverse_root_n(step10):
    ns = [1e2, 1e3, 1e4]
    phi = periodic_test_profile()
    dev = [effective_coupling_error(truncate(step10, 0.5, n), phi).deviation for n in ns]
    assert fitted_exponent(ns, dev) <= -0.4


@settings(max_examples=10, deadline=None)
@given(st.floats(0.5, 200.0))
def test_hypervolume_monotone_in_strength(v0):
    a = hypervolume(solve_scattering(step_potential(v0), make_grid(1.0, 400)))[0]
    b = hypervolume(solve_scattering(step_potential(1.5 * v0), make_grid(1.0, 400)))[0]
    assert 0 < a < b < 3 * np.sqrt(3) * np.pi ** 3
