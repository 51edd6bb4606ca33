from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from latticeepi.moments import (_law_key, _moment_first_step, _moment_lce,
                                increment_moment, increment_moment_joint_route,
                                kernel_power, mc_increment_moment, mc_moment,
                                mc_moment_table, moment, partitions,
                                slot_multiplicity)
from latticeepi.offspring import poisson_limit, village_binomial

from conftest import MASTER_SEED


def test_kernel_examples():
    assert kernel_power(1, 0) == Fraction(1, 3)
    assert kernel_power(1, 1) == Fraction(1, 3)
    assert kernel_power(1, 2) == 0
    assert kernel_power(2, 0) == Fraction(1, 3)
    assert kernel_power(2, 1) == Fraction(2, 9)
    assert kernel_power(2, -2) == Fraction(1, 9)


def test_kernel_rows_are_stochastic():
    for n in range(51):
        assert sum(kernel_power(n, x) for x in range(-n, n + 1)) == 1


@given(st.integers(0, 30), st.integers(-30, 30))
@settings(max_examples=80, deadline=None)
def test_kernel_symmetry(n, x):
    assert kernel_power(n, x) == kernel_power(n, -x)


def test_partition_machinery():
    assert partitions(4) == ((4,), (3, 1), (2, 2), (2, 1, 1), (1, 1, 1, 1))
    assert slot_multiplicity((1, 1)) == 1
    assert slot_multiplicity((2, 1)) == 3
    assert slot_multiplicity((1, 1, 1)) == 1
    assert slot_multiplicity((2, 2)) == 3


def test_first_moment_equals_kernel_power():
    for law in (poisson_limit(), village_binomial(3)):
        for n in range(7):
            for x in range(-3, 4):
                assert moment(n, x, 1, law) == kernel_power(n, x)


def test_poisson_closed_forms():
    # Y_1(0) ~ Poisson(1/3): raw moments lambda + lambda^2, lambda^3 + 3 lambda^2 + lambda
    assert moment(1, 0, 2) == Fraction(4, 9)
    assert moment(1, 0, 3) == Fraction(19, 27)


def test_order_zero_rejected():
    with pytest.raises(ValueError):
        moment(2, 0, 0)


def test_two_exact_routes_agree_for_poisson():
    lk = _law_key(poisson_limit())
    for n in range(6):
        for x in range(0, 4):
            for m in range(1, 4):
                assert _moment_lce(n, x, m, lk) == _moment_first_step(n, x, m, lk)


def test_symmetry_in_x():
    for n in range(5):
        for x in range(4):
            for m in (1, 2, 3):
                assert moment(n, x, m) == moment(n, -x, m)


def test_total_mass_consistency():
    for n in range(31):
        s = sum(moment(n, x, 1) for x in range(-n, n + 1))
        assert abs(float(s) - 1.0) < 1e-12
        assert s == 1


def test_jensen_from_exact_values():
    for n in (1, 3, 5):
        assert moment(n, 0, 2) >= moment(n, 0, 1) ** 2


def test_moments_vs_mc_small_grid_poisson():
    table = mc_moment_table(4, 3, 3, poisson_limit(), 200_000, MASTER_SEED)
    for (n, x, m), (est, se) in table.items():
        exact = float(moment(n, x, m))
        assert abs(est - exact) <= 4 * max(se, 1e-12), (n, x, m, est, exact, se)


def test_moments_vs_mc_village_binomial():
    law = village_binomial(2)
    table = mc_moment_table(3, 2, 3, law, 200_000, MASTER_SEED + 1)
    for (n, x, m), (est, se) in table.items():
        exact = float(moment(n, x, m, law))
        assert abs(est - exact) <= 4 * max(se, 1e-12), (n, x, m, est, exact, se)


def test_mc_moment_single_cell():
    est, se = mc_moment(3, 0, 2, poisson_limit(), 100_000, MASTER_SEED)
    assert abs(est - float(moment(3, 0, 2))) <= 4 * se


def test_increment_zero_lag_is_zero():
    for m in (1, 2, 3, 4):
        assert increment_moment(3, 0.1, 0, m) == 0  # [0.1 * 3] = 0


def test_increment_first_moment_is_kernel_difference():
    for n in (1, 2, 4):
        for alpha in (0.5, 1.0):
            h = int(alpha * n)
            for x in range(-2, 3):
                assert increment_moment(n, alpha, x, 1) == \
                    kernel_power(n, x) - kernel_power(n + h, x)


def test_increment_routes_agree():
    for n in (1, 2, 3, 4):
        for alpha in (0.34, 0.5, 1.0):
            for x in (0, 1, 2):
                for m in (1, 2, 3):
                    a = increment_moment(n, alpha, x, m)
                    b = increment_moment_joint_route(n, alpha, x, m)
                    assert a == b, (n, alpha, x, m)


def test_increment_hand_value():
    # E[(Y_1(0) - Y_2(0))^2] = E Y_1^2 - 2 E Y_1 Y_2 + E Y_2^2 = 4/9 - 4/9 + 5/9
    assert increment_moment(1, 1.0, 0, 2) == Fraction(5, 9)


def test_increment_vs_mc():
    n, alpha, x, m = 2, 0.5, 0, 2
    exact = float(increment_moment(n, alpha, x, m))
    est, se = mc_increment_moment(n, alpha, x, m, poisson_limit(), 10_000_000,
                                  MASTER_SEED)
    assert abs(est - exact) <= 4 * se, (est, exact, se)


def test_increment_binomial_law():
    law = village_binomial(2)
    exact = float(increment_moment(2, 0.5, 0, 2, law))
    est, se = mc_increment_moment(2, 0.5, 0, 2, law, 400_000, MASTER_SEED + 2)
    assert abs(est - exact) <= 4 * se


def test_partitions_complete_and_distinct():
    # p(m) for m = 1..8: 1, 2, 3, 5, 7, 11, 15, 22
    expected = [1, 2, 3, 5, 7, 11, 15, 22]
    for m, cnt in zip(range(1, 9), expected):
        parts = partitions(m)
        assert len(parts) == len(set(parts)) == cnt
        assert all(sum(p) == m and list(p) == sorted(p, reverse=True) for p in parts)
