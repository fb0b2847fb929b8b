import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from threebody_gp.errors import OutOfRange
from threebody_gp.prefactors import (SHIFTS, ThetaKind, shift_constant, theta, theta_bound_report,
                                     theta_values, write_bound_csv)

N_LIST = (50, 100, 200)

# Kinds containing the factor 1 - (n - 1)/N, which exceeds 1 at n = 0.
ABOVE_ONE_AT_ZERO = {ThetaKind.THETA3_2OR3, ThetaKind.THETA4_1}


def test_tags_cover_the_list():
    tags = {k.value for k in ThetaKind}
    assert tags == {"Θ0", "Θ1", "Θ2_1", "Θ2_2or3", "Θ3_1", "Θ3_2or3", "Θ4_1", "Θ4_2or3", "Θ5", "ΘN"}
    assert ThetaKind.from_tag("Theta2_1") is ThetaKind.THETA2_1
    assert ThetaKind.from_tag("ΘN") is ThetaKind.THETA_N
    with pytest.raises(ValueError):
        ThetaKind.from_tag("Θ7")


@pytest.mark.parametrize("N", [1, 7, 100])
def test_theta5_at_zero(N):
    assert theta(ThetaKind.THETA5, 0, N) == 1.0


@pytest.mark.parametrize("n,N", [(0, 10), (3, 10), (7, 50), (48, 50)])
def test_theta0_closed_form(n, N):
    expected = (1 - n / N) * (1 - (n + 1) / N) * (1 - (n + 2) / N)
    assert theta(ThetaKind.THETA0, n, N) == pytest.approx(expected, rel=1e-15, abs=1e-15)


@pytest.mark.parametrize("n,N", [(0, 10), (4, 10), (9, 13)])
def test_explicit_formulas(n, N):
    a, b, c, m = 1 - n / N, 1 - (n + 1) / N, 1 - (n + 2) / N, 1 - (n - 1) / N
    a, b, c = max(a, 0), max(b, 0), max(c, 0)
    expected = {
        ThetaKind.THETA1: np.sqrt(a) * b * c,
        ThetaKind.THETA2_1: a * np.sqrt(b) * np.sqrt(c),
        ThetaKind.THETA2_2OR3: a * b,
        ThetaKind.THETA3_1: np.sqrt(a * b * c),
        ThetaKind.THETA3_2OR3: np.sqrt(a) * m,
        ThetaKind.THETA4_1: np.sqrt(a) * np.sqrt(m),
        ThetaKind.THETA4_2OR3: a,
        ThetaKind.THETA5: np.sqrt(a),
        ThetaKind.THETA_N: np.sqrt(a) * np.sqrt(b) * np.sqrt(c),
    }
    for kind, val in expected.items():
        assert theta(kind, n, N) == pytest.approx(val, rel=1e-14, abs=1e-15), kind


def test_clamp_at_the_top():
    assert theta(ThetaKind.THETA_N, 49, 50) == 0.0
    assert theta(ThetaKind.THETA_N, 50, 50) == 0.0
    assert theta(ThetaKind.THETA0, 49, 50) == 0.0


@pytest.mark.parametrize("n,N", [(-1, 10), (11, 10), (2.5, 10), (0, 0)])
def test_out_of_range(n, N):
    with pytest.raises(OutOfRange):
        theta(ThetaKind.THETA5, n, N)


@given(st.sampled_from(list(ThetaKind)), st.integers(1, 400), st.data())
def test_range_and_monotonicity(kind, N, data):
    n = data.draw(st.integers(0, N))
    val = theta(kind, n, N)
    upper = 1.0 + 1.0 / N if kind in ABOVE_ONE_AT_ZERO else 1.0
    assert 0.0 <= val <= upper + 1e-15
    if n < N:
        assert theta(kind, n + 1, N) <= val + 1e-15


def test_only_two_kinds_exceed_one():
    for kind in ThetaKind:
        vals = theta_values(kind, np.arange(0, 101), 100)
        if kind in ABOVE_ONE_AT_ZERO:
            expected = 1.01 if kind is ThetaKind.THETA3_2OR3 else np.sqrt(1.01)
            assert vals[0] == pytest.approx(expected, rel=1e-14)
            assert np.all(vals[1:] <= 1.0 + 1e-15)
        else:
            assert np.all(vals <= 1.0 + 1e-15)


def test_shift_zero_is_zero():
    for kind in ThetaKind:
        assert shift_constant(kind, 100, 0) == 0.0


def test_bound_report_within_three_and_stable():
    report = theta_bound_report(N_LIST)
    assert len(report) == len(ThetaKind) * len(N_LIST)
    by_kind = {}
    for row in report:
        assert 0.0 < row.c <= 3.0
        by_kind.setdefault(row.kind, []).append(row)
    for rows in by_kind.values():
        for lo, hi in zip(rows, rows[1:]):
            assert 0.5 <= hi.c / lo.c <= 2.0
            for p in SHIFTS:
                assert 0.5 <= hi.c_shift[p] / lo.c_shift[p] <= 2.0


def test_theta5_stable_between_100_and_200():
    a, b = theta_bound_report([100, 200], kinds=[ThetaKind.THETA5])
    assert np.isfinite(a.c) and 0.5 <= b.c / a.c <= 2.0


def test_report_rejects_small_n():
    with pytest.raises(ValueError):
        theta_bound_report([3])


def test_bound_csv(tmp_path):
    report = theta_bound_report([50])
    path = tmp_path / "bounds.csv"
    write_bound_csv(path, report)
    raw = path.read_bytes()
    assert raw.count(b"\r\n") == len(report) + 1
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["kind", "N", "empirical_C", "empirical_C1", "empirical_C2", "empirical_C3"]
    assert rows[1][0] == "Theta0" and float(rows[1][2]) == report[0].c
