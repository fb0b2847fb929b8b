import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from threebody_gp.boxes import (Configuration, adversarial_search, calibrate_constants, convexity_batch,
                                convexity_inequality, count_in_boxes, hyperdistance_triples,
                                interaction_counts, proof_constants, read_configuration, read_constants,
                                recombination_identity, three_body_box_inequality, write_configuration,
                                write_constants)
from threebody_gp.errors import HypothesisViolated, InvalidScales

coords = arrays(np.float64, st.tuples(st.integers(0, 40), st.just(3)),
                elements=st.floats(-20, 20, allow_nan=False, allow_infinity=False))


def random_config(rng, m, spread=3.0):
    return Configuration(rng.uniform(-spread, spread, (m, 3)))


# -- brute-force oracles --------------------------------------------------

def brute_triples(points, ell1):
    m = len(points)
    count = 0
    for i, j, k in itertools.permutations(range(m), 3):
        d = np.sum((points[i] - points[j]) ** 2) + np.sum((points[i] - points[k]) ** 2)
        count += d <= ell1 ** 2
    return count


def brute_box_count(points, center, side):
    """Points in ``center + side [-1/2, 1/2)^3`` by direct comparison."""
    lo, hi = center - 0.5 * side, center + 0.5 * side
    return int(np.count_nonzero(np.all((points >= lo) & (points < hi), axis=1)))


def brute_convexity(points, ell1, ell2, ell3, alpha, beta, c_beta):
    """Both sums of the convexity estimate by enumerating every box centre in
    a bounding region."""
    thr = c_beta * (ell1 / ell3) ** 3
    lo = np.floor((points.min(axis=0) - ell1) / ell2).astype(int)
    hi = np.ceil((points.max(axis=0) + ell1) / ell2).astype(int)
    lhs = 0.0
    for idx in itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi))):
        m = brute_box_count(points, np.array(idx) * ell2, ell1)
        if m >= thr:
            lhs += m ** alpha
    rhs = 0.0
    lo = np.floor(points.min(axis=0) / ell3).astype(int) - 1
    hi = np.ceil(points.max(axis=0) / ell3).astype(int) + 1
    for idx in itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi))):
        m = brute_box_count(points, np.array(idx) * ell3, ell3)
        if m >= beta:
            rhs += m ** alpha
    return lhs, rhs


def brute_interaction_counts(points, ell_short, ell_long):
    m = len(points)
    d = np.sqrt(np.sum((points[:, None] - points[None]) ** 2, axis=-1))
    off = ~np.eye(m, dtype=bool)
    W = ((d <= ell_short) & off).astype(float)
    L = ((d <= ell_long) & off).astype(float)
    ne = off.astype(float)
    pair = W.sum()
    triple = np.einsum("ij,ik,jk->", W, L, ne)
    quad = np.einsum("ij,ik,il,jk,jl,kl->", W, L, L, ne, ne, ne)
    # five-index tensor: factor i, then distinct j, k, l, q among the long neighbours
    t = np.einsum("ij,ik,il,iq->ijklq", L, L, L, L)
    mask = (ne[:, :, None, None] * ne[:, None, :, None] * ne[:, None, None, :]
            * ne[None, :, :, None] * ne[None, :, None, :] * ne[None, None, :, :])
    quint = float(np.sum(t * mask[None]))
    return pair, triple, quad, quint


# -- counting -------------------------------------------------------------

def test_single_point_at_origin():
    rep = count_in_boxes(Configuration([[0.0, 0.0, 0.0]]), 1.0)
    assert rep.as_dict() == {(0, 0, 0): 1}


def test_face_point_goes_to_upper_cell():
    rep = count_in_boxes(Configuration([[0.5, 0.0, -0.5]]), 1.0)
    assert rep.as_dict() == {(1, 0, 0): 1}


def test_counts_sum_to_m():
    rng = np.random.default_rng(0)
    rep = count_in_boxes(random_config(rng, 50), 0.7)
    assert rep.total == 50 and np.all(rep.counts > 0)


@settings(max_examples=200, deadline=None)
@given(coords, st.floats(0.05, 5.0))
def test_partition_exactness(points, ell):
    cfg = Configuration(points)
    rep = count_in_boxes(cfg, ell)
    assert rep.total == cfg.size
    assert np.all(rep.counts > 0)


def test_counts_match_direct_comparison():
    rng = np.random.default_rng(12)
    for _ in range(50):
        cfg = random_config(rng, int(rng.integers(1, 60)))
        ell = float(rng.uniform(0.2, 2.0))
        rep = count_in_boxes(cfg, ell)
        for center, n in zip(rep.centers, rep.counts):
            assert brute_box_count(cfg.points, center * ell, ell) == n


def test_recombination_empty():
    assert recombination_identity(Configuration(np.zeros((0, 3))), 1.0) == 0


def test_single_point_in_exactly_27_boxes():
    x = np.array([0.23, -1.41, 2.07])
    ell = 0.6
    rep = count_in_boxes(Configuration([x]), ell, 3)
    assert rep.total == 27
    # oracle: centres r in l Z^3 with r - 3l/2 <= x < r + 3l/2 on every axis
    expected = set()
    for idx in itertools.product(range(-10, 11), repeat=3):
        r = np.array(idx) * ell
        if np.all((r - 1.5 * ell <= x) & (x < r + 1.5 * ell)):
            expected.add(idx)
    assert set(rep.as_dict()) == expected


@settings(max_examples=100, deadline=None)
@given(coords, st.floats(0.05, 5.0))
def test_recombination_property(points, ell):
    assert recombination_identity(Configuration(points), ell) == 0


def test_recombination_randomized():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        cfg = random_config(rng, int(rng.integers(0, 101)), 5.0)
        assert recombination_identity(cfg, float(rng.uniform(0.1, 3.0))) == 0


# -- three-body box estimate ----------------------------------------------

def test_triples_match_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(60):
        cfg = random_config(rng, int(rng.integers(0, 16)), 1.5)
        ell1 = float(rng.uniform(0.3, 3.0))
        assert hyperdistance_triples(cfg, ell1) == brute_triples(cfg.points, ell1)


def test_two_points_have_no_rhs():
    lhs, rhs, margin = three_body_box_inequality(Configuration([[0, 0, 0], [0.1, 0, 0]]), 1.0, 0.2)
    assert rhs == 0 and margin >= 0


def test_three_points_in_one_cell():
    ell1 = 1.0
    ell2 = ell1 / np.sqrt(6.0)
    pts = np.array([[0.1, -0.2, 0.05], [-0.15, 0.1, 0.12], [0.0, 0.18, -0.1]]) * ell2
    lhs, rhs, margin = three_body_box_inequality(Configuration(pts), ell1, ell2)
    assert lhs == rhs == 6 and margin == 0
    assert brute_triples(pts, ell1) == 6


def test_hypothesis_violation():
    with pytest.raises(HypothesisViolated):
        three_body_box_inequality(Configuration(np.zeros((3, 3))), 1.0, 0.5)


def test_three_body_margin_randomized():
    rng = np.random.default_rng(3)
    for trial in range(10_000):
        m = int(rng.integers(0, 51))
        cfg = random_config(rng, m, float(rng.choice([0.3, 1.0, 3.0])))
        ell1 = float(rng.uniform(0.2, 3.0))
        ell2 = ell1 / np.sqrt(6.0) * float(rng.uniform(0.3, 1.0))
        lhs, rhs, margin = three_body_box_inequality(cfg, ell1, ell2)
        assert margin >= 0
        if trial % 500 == 0:
            assert lhs == brute_triples(cfg.points, ell1)


# -- convexity estimate ---------------------------------------------------

def test_convexity_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(25):
        cfg = Configuration(rng.normal(0.0, 0.3, (int(rng.integers(5, 40)), 3)))
        ell3 = 0.25
        ell2 = ell3 * float(rng.choice([1.0, 1.5]))
        ell1 = ell2 * float(rng.choice([1.0, 2.0]))
        c_beta = float(rng.choice([0.05, 0.2]))
        lhs, rhs, _ = convexity_inequality(cfg, ell1, ell2, ell3, 2.0, 3.0, c_beta, 1.0)
        b_lhs, b_rhs = brute_convexity(cfg.points, ell1, ell2, ell3, 2.0, 3.0, c_beta)
        assert lhs == b_lhs
        assert rhs == pytest.approx(b_rhs * (ell1 / ell2) ** 3 * (ell1 / ell3) ** 3)


def test_convexity_trivial_lhs():
    cfg = Configuration(np.random.default_rng(5).uniform(-3, 3, (20, 3)))
    lhs, rhs, margin = convexity_inequality(cfg, 1.0, 1.0, 1.0, 2.0, 3.0, 108.0, 1.0)
    assert lhs == 0 and margin >= 0


def test_convexity_coincident_points():
    m = 400
    cfg = Configuration(np.full((m, 3), 0.1))
    ell1, ell2, ell3 = 1.0, 1.0, 1.0
    lhs, rhs, margin = convexity_inequality(cfg, ell1, ell2, ell3, 2.0, 3.0, 108.0, 1.0)
    # every l1 box on the l2 lattice containing the point holds all m points
    assert lhs == m ** 2
    assert rhs == m ** 2 and margin == 0


def test_convexity_invalid_scales():
    cfg = Configuration(np.zeros((3, 3)))
    with pytest.raises(InvalidScales):
        convexity_inequality(cfg, 1.0, 2.0, 0.5, 2.0, 3.0, 108.0, 1.0)
    with pytest.raises(InvalidScales):
        convexity_inequality(cfg, 1.0, 1.0, 1.0, 0.5, 3.0, 108.0, 1.0)


def test_translation_invariance():
    rng = np.random.default_rng(6)
    cfg = Configuration(rng.normal(0.0, 0.2, (60, 3)))
    ell1, ell2, ell3 = 1.0, 0.5, 0.25
    base = convexity_inequality(cfg, ell1, ell2, ell3, 2.0, 3.0, 0.1, 4.0)
    tri = three_body_box_inequality(cfg, 1.0, 0.25)
    counts = sorted(count_in_boxes(cfg, ell3).counts)
    for shift in ([0.5, 0, 0], [-1.0, 1.5, 2.0], [3.0, -0.5, 0.5]):
        moved = cfg.shifted(shift)
        assert convexity_inequality(moved, ell1, ell2, ell3, 2.0, 3.0, 0.1, 4.0) == pytest.approx(base)
        assert three_body_box_inequality(moved, 1.0, 0.25) == tri
        assert sorted(count_in_boxes(moved, ell3).counts) == counts


def test_proof_constants():
    pc = proof_constants(2.0, 3.0)
    assert pc == {"C_beta": 108.0, "C_intermediate": 2.0, "C_alpha_beta": 2916.0}


def test_per_box_intermediate_holds_with_proof_constant():
    res = adversarial_search(4000, 2.0, 3.0, seeds=(11,), c_intermediate=2.0,
                             c_alpha_beta=proof_constants(2.0, 3.0)["C_alpha_beta"])
    assert res.nontrivial > 0
    assert res.per_box_violations == 0 and res.violations == 0
    assert res.max_per_box <= 2.0


def test_search_is_deterministic():
    a = adversarial_search(3000, seeds=(5, 6), batch=1000)
    b = adversarial_search(3000, seeds=(5, 6), batch=1000)
    assert a.max_ratio == b.max_ratio and a.nontrivial == b.nontrivial


def test_calibrated_constants_hold(tmp_path):
    consts = calibrate_constants(n_configs=4000, pairs=((2.0, 3.0),), seeds=(1, 2))
    path = tmp_path / "constants.json"
    write_constants(path, consts)
    loaded = read_constants(path)
    assert loaded == consts and loaded["seeds"] == [1, 2]
    pair = loaded["pairs"][0]
    assert 1.0 <= pair["C_alpha_beta"] <= pair["proof_C_alpha_beta"]
    res = adversarial_search(10_000, 2.0, 3.0, pair["C_beta"], seeds=(101, 102),
                             c_alpha_beta=pair["C_alpha_beta"], c_intermediate=pair["C_intermediate"])
    assert res.violations == 0 and res.per_box_violations == 0


def test_batch_matches_single():
    rng = np.random.default_rng(8)
    cfgs = [Configuration(rng.normal(0.0, 0.3, (30, 3))) for _ in range(5)]
    pts = np.concatenate([c.points for c in cfgs])
    cfg_id = np.repeat(np.arange(5), 30)
    batch = convexity_batch(pts, cfg_id, 5, 1.0, 0.5, 0.25, 2.0, 3.0, 0.1)
    for k, c in enumerate(cfgs):
        lhs, rhs, _ = convexity_inequality(c, 1.0, 0.5, 0.25, 2.0, 3.0, 0.1, 1.0)
        assert batch.lhs[k] == lhs and batch.rhs(1.0)[k] == pytest.approx(rhs)


# -- interaction counts ---------------------------------------------------

def test_pair_count_two_points():
    ic = interaction_counts(Configuration([[0, 0, 0], [0.5, 0, 0]]), 1.0, 1.0)
    assert ic.pair == 2 and ic.triple == 0


def test_coincident_points_falling_factorials():
    m = 7
    ic = interaction_counts(Configuration(np.zeros((m, 3))), 0.1, 0.2)
    assert ic.pair == m * (m - 1)
    assert ic.triple == m * (m - 1) * (m - 2)
    assert ic.quad == m * (m - 1) * (m - 2) * (m - 3)
    assert ic.quint == m * (m - 1) * (m - 2) * (m - 3) * (m - 4)


def test_counts_match_brute_force():
    rng = np.random.default_rng(9)
    for _ in range(15):
        m = int(rng.integers(0, 21))
        cfg = random_config(rng, m, 1.0)
        ls = float(rng.uniform(0.2, 1.0))
        ll = ls * float(rng.uniform(1.0, 2.0))
        ic = interaction_counts(cfg, ls, ll)
        if m < 2:
            assert (ic.pair, ic.triple, ic.quad, ic.quint) == (0, 0, 0, 0)
            continue
        assert (ic.pair, ic.triple, ic.quad, ic.quint) == pytest.approx(
            brute_interaction_counts(cfg.points, ls, ll))


def test_weighted_pair_count():
    rng = np.random.default_rng(10)
    cfg = random_config(rng, 12, 1.0)
    weight = lambda d: np.exp(-d ** 2)
    ic = interaction_counts(cfg, 1.0, 1.0, weight=weight)
    d = np.sqrt(np.sum((cfg.points[:, None] - cfg.points[None]) ** 2, axis=-1))
    assert ic.pair == pytest.approx(np.sum(weight(d)) - 12.0)


def test_configuration_csv_roundtrip(tmp_path):
    cfg = random_config(np.random.default_rng(11), 9)
    path = tmp_path / "cfg.csv"
    write_configuration(path, cfg)
    assert path.read_text().splitlines()[0] == "x,y,z"
    assert np.array_equal(read_configuration(path).points, cfg.points)
