import math

import numpy as np
import pytest

from latticeepi.extent import (DEFAULT_CURVATURE, EquianharmonicLattice,
                               PoleError, exit_probability,
                               exit_profile_via_wp, halfline_profile,
                               solve_exit_ode, u_min_quadrature, weierstrass_p)


@pytest.fixture(scope="module")
def prof11():
    return solve_exit_ode(1.0, 1.0)


def test_halfline_closed_form_reproduced():
    prof = solve_exit_ode(50.0, 1.0)
    assert abs(prof(1.0) - halfline_profile(1.0, 1.0)) / 6.0 < 1e-4


def test_halfline_formula_satisfies_ode():
    # u = 6/(c x^2): u'' = 36/(c x^4) = c u^2, spot-checked by finite differences
    c = DEFAULT_CURVATURE
    h = 1e-4
    for x in (0.5, 1.0, 2.5):
        u = halfline_profile(x, c)
        d2 = (halfline_profile(x + h, c) - 2 * u + halfline_profile(x - h, c)) / h**2
        assert d2 == pytest.approx(c * u * u, rel=1e-6)


def test_symmetry_about_midpoint(prof11):
    for s in (0.05, 0.17, 0.31, 0.44):
        assert abs(prof11(0.5 + s) - prof11(0.5 - s)) < 1e-10


def test_first_integral_oracle_agreement(prof11):
    for x in (0.5, 0.31, 0.12):
        ode = prof11(x)
        quad = prof11.quadrature_value(x)
        assert abs(ode - quad) / quad < 1e-6


def test_scaling_law():
    p1 = solve_exit_ode(1.0, 1.0)
    p3 = solve_exit_ode(3.0, 1.0)
    for x in (0.2, 0.5, 0.8):
        lhs = p3(3 * x)
        rhs = p1(x) / 9.0
        assert abs(lhs - rhs) / rhs < 1e-6


def test_curvature_rescales_profile():
    pa = solve_exit_ode(2.0, 1.0)
    pb = solve_exit_ode(2.0, DEFAULT_CURVATURE)
    for x in (0.4, 1.0, 1.7):
        assert pb(x) == pytest.approx(pa(x) / DEFAULT_CURVATURE, rel=1e-8)


def test_umin_matches_quadrature_constant(prof11):
    assert prof11.u_min == pytest.approx(u_min_quadrature(1.0, 1.0), rel=1e-9)


def test_wp_evenness():
    lat = EquianharmonicLattice(scale=1.0)
    for z in (0.31 + 0.17j, 0.2 - 0.4j):
        assert abs(weierstrass_p(z, lat) - weierstrass_p(-z, lat)) < 1e-10


def test_wp_periodicity():
    lat = EquianharmonicLattice(scale=1.0)
    w1, w2 = lat.generators
    z = 0.31 + 0.17j
    base = weierstrass_p(z, lat)
    assert abs(weierstrass_p(z + w1, lat) - base) < 1e-8
    assert abs(weierstrass_p(z + w2, lat) - base) < 1e-8


def test_equianharmonic_invariants():
    lat = EquianharmonicLattice(scale=1.0)
    g2, g3 = lat.eisenstein
    assert abs(g2) <= 1e-8 * abs(g3)
    assert g3.real > 0 and abs(g3.imag) < 1e-9 * abs(g3)


def test_wp_pole_error():
    lat = EquianharmonicLattice(scale=1.0)
    with pytest.raises(PoleError):
        weierstrass_p(0.0, lat)
    with pytest.raises(PoleError):
        weierstrass_p(lat.generators[0], lat)


def test_spec_lattice_constructor():
    lat = EquianharmonicLattice.for_interval(2.0)
    assert lat.scale == pytest.approx(math.sqrt(6.0) * 2.0)
    w1, w2 = lat.generators
    assert w1 == pytest.approx(lat.scale * np.exp(1j * np.pi / 3))
    assert w2 == pytest.approx(np.conj(w1))


def test_wp_route_matches_ode_route(prof11):
    # 6 wp(x) over the real-period-a triangular lattice solves the same blow-up
    # problem; agreement far exceeds the 0.999 log-correlation requirement
    xs = np.linspace(0.08, 0.92, 15)
    ode = np.array([prof11(x) for x in xs])
    wp = np.array([exit_profile_via_wp(x, 1.0, 1.0) for x in xs])
    assert np.max(np.abs(wp - ode) / ode) < 1e-8
    corr = np.corrcoef(np.log(ode), np.log(wp))[0, 1]
    assert corr > 0.999


def test_exit_probability_empty_and_superposition():
    assert exit_probability([], 2.0).probability == 1.0
    assert exit_probability([(1.0, 0.0)], 2.0).probability == 1.0
    prof = solve_exit_ode(2.0, DEFAULT_CURVATURE)
    single = exit_probability([(0.7, 0.4)], 2.0, profile=prof)
    double = exit_probability([(0.7, 0.8)], 2.0, profile=prof)
    assert double.probability == pytest.approx(single.probability**2, rel=1e-12)
    mixed = exit_probability([(0.7, 0.4), (1.3, 0.2)], 2.0, profile=prof)
    other = exit_probability([(1.3, 0.2)], 2.0, profile=prof)
    assert mixed.probability == pytest.approx(
        single.probability * other.probability, rel=1e-12)


def test_exit_probability_monotone_in_mass():
    prof = solve_exit_ode(2.0, DEFAULT_CURVATURE)
    probs = [exit_probability([(0.9, m)], 2.0, profile=prof).probability
             for m in (0.1, 0.5, 1.0, 3.0)]
    assert all(a > b for a, b in zip(probs, probs[1:]))


def test_support_outside_interval_flagged():
    res = exit_probability([(2.5, 1.0)], 2.0)
    assert res.probability == 0.0 and res.outside_support
    res = exit_probability([(0.0, 1.0)], 2.0)
    assert res.probability == 0.0 and res.outside_support


def test_solver_rejects_bad_domain():
    with pytest.raises(ValueError):
        solve_exit_ode(-1.0, 1.0)
    with pytest.raises(ValueError):
        solve_exit_ode(1.0, 0.0)


def test_profile_shape_decreasing_then_increasing(prof11):
    xs = np.linspace(0.03, 0.97, 95)
    vals = np.array([prof11(x) for x in xs])
    assert (vals > 0).all()
    mid = len(xs) // 2
    assert (np.diff(vals[: mid + 1]) < 0).all()
    assert (np.diff(vals[mid:]) > 0).all()


def test_lattice_closed_under_hexagonal_rotation():
    lat = EquianharmonicLattice(scale=1.0, radius=12.0)
    pts = lat.points
    rotated = pts * np.exp(1j * np.pi / 3.0)
    # every rotated point is again a lattice point (within the same disk)
    for z in rotated[np.abs(rotated) <= 11.0]:
        assert np.min(np.abs(pts - z)) < 1e-9
