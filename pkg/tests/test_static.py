import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_equilibria, e1_payoff, e2_payoff, e3_payoff, hausdorff_points
from setgame.errors import EmptyCloudError, SpecError
from setgame.io import load_spec
from setgame.game import Theta, coefficient_bounds, theta_payoffs
from setgame.static import (
    DEDUP_TOL,
    SetCloud,
    continuity_report,
    dist_point_cloud,
    eps_equilibria,
    hamiltonian_cloud,
    hausdorff,
    isaacs_check,
    rho_K,
    theta_lattice,
)

E1 = load_spec("e1")


def th(z, t=0.0, x=0.0):
    return Theta.make(t, [x], np.atleast_2d(z))


def flat(profiles):
    return sorted(tuple(a[0] for a in p) for p in profiles)


def test_eps_equilibria_examples(e1, e2, e3):
    assert flat(eps_equilibria(e2, th([0.4, -2.0]), 0.0)) == [(0.0, 0.0), (1.0, 1.0)]
    assert eps_equilibria(e3, th([1.0, -1.0]), 0.5) == []
    assert len(eps_equilibria(e1, th([0.0, 0.0]), 0.0)) == 9


def test_hamiltonian_cloud_examples(e1, e2, e3):
    c = hamiltonian_cloud(e2, th([1.0, 1.0]), 0.0)
    assert c.points.tolist() == [[1.0, 2.0], [2.0, 1.0]] and c.radius == 0.0
    assert hamiltonian_cloud(e1, th([0.5, -0.3]), 0.0).points.tolist() == [[0.0, 0.0]]
    assert hamiltonian_cloud(e3, th([1.0, -1.0]), 0.0).is_empty


@pytest.mark.parametrize("z", [(0.5, -0.3), (1.0, -1.0), (-0.7, 0.2), (0.0, 0.0)])
@pytest.mark.parametrize("eps", [0.0, 0.1, 0.6])
def test_equilibria_match_brute_force(e1, e3, z, eps):
    grid = [(-1.0, 0.0, 1.0)] * 2
    assert flat(eps_equilibria(e1, th(z), eps)) == sorted(brute_equilibria(e1_payoff(z), grid, eps))
    grid = [(-1.0, 1.0)] * 2
    assert flat(eps_equilibria(e3, th(z), eps)) == sorted(brute_equilibria(e3_payoff(z), grid, eps))


def test_e2_brute_force(e2):
    assert flat(eps_equilibria(e2, th([0.0, 0.0]), 0.0)) == brute_equilibria(e2_payoff, [(0, 1)] * 2)


def test_dist_point_cloud_examples():
    assert dist_point_cloud([0, 0], SetCloud([[3.0, 4.0]])) == 5.0
    assert dist_point_cloud([0, 0], SetCloud([[3.0, 4.0]], radius=1.0)) == 4.0
    assert dist_point_cloud([1, 1], SetCloud([[1.0, 1.0], [9.0, 9.0]])) == 0.0
    assert dist_point_cloud([1, 1], SetCloud([], dim=2)) == math.inf


def test_hausdorff_examples():
    s = SetCloud([[0.0, 0.0], [1.0, 0.0]])
    assert hausdorff(s, s) == 0.0
    assert hausdorff(SetCloud([[0.0, 0.0]]), SetCloud([[3.0, 4.0]])) == 5.0
    assert hausdorff(s, SetCloud([[0.0, 0.0]])) == 1.0
    assert hausdorff(s, SetCloud([], dim=2)) == math.inf


def test_setcloud_canonical():
    c = SetCloud([[2.0, 1.0], [1.0, 2.0], [2.0, 1.0 + 1e-14]])
    assert c.points.tolist() == [[1.0, 2.0], [2.0, 1.0]]
    assert c == SetCloud([[1.0, 2.0], [2.0, 1.0]])


def test_rho_examples(e1, e2):
    K = [th([z1, z2], t=t, x=x) for t in (0.0, 1.0) for x in (-1.0, 1.0)
         for z1 in (-1.0, 0.3) for z2 in (0.5, -0.2)]
    for eps in (0.05, 0.5, 0.9):
        assert rho_K(e2, K, eps) <= eps + 1e-12
    K0 = [th([0.0, 0.0], t=t) for t in (0.0, 0.5)]
    assert rho_K(e1, K0, 0.3) <= 0.3 + 1e-12


def test_rho_empty_cloud_names_theta(e3):
    with pytest.raises(EmptyCloudError) as err:
        rho_K(e3, [th([1.0, -1.0])], 0.1)
    assert err.value.theta is not None


def test_continuity_report_examples(e1, e2):
    K = theta_lattice(e2, 2, 3, 3)
    rep = continuity_report(e2, K, [0.5, 0.1, 0.01])
    assert rep.monotone and all(b <= a for a, b in zip(rep.rho, rep.rho[1:]))
    rep = continuity_report(e1, theta_lattice(e1, 3, 5, 5), [0.5, 0.1, 0.01])
    assert rep.rho[-1] <= 0.02
    assert len(continuity_report(e2, K, [0.2]).rows()) == 1
    with pytest.raises(ValueError):
        continuity_report(e2, K, [0.1, 0.2])


def test_isaacs_examples(e1, e2, e3):
    assert tuple(isaacs_check(e1, th([0.5, -0.5]))) == (0.0, 0.0, True)
    assert tuple(isaacs_check(e3, th([1.0, -1.0]))) == (-1.0, 1.0, False)
    assert tuple(isaacs_check(e3, th([0.0, 0.0]))) == (0.0, 0.0, True)
    with pytest.raises(SpecError):
        isaacs_check(e2, th([0.0, 0.0]))


def test_isaacs_singleton_on_diagonal(e1):
    # zero-sum game: H is {(H1, -H1)} when z^2 = -z^1
    for z1 in np.linspace(-1, 1, 9):
        theta = th([z1, -z1], x=0.3)
        res = isaacs_check(e1, theta)
        assert res.holds
        assert hamiltonian_cloud(e1, theta, 0.0).points.tolist() == [[res.supinf, -res.supinf]]


def test_growth_bound(e1):
    box = ((0.0, 1.0), (-1.0, 1.0))
    C = coefficient_bounds(e1, box).growth_constant
    for theta in theta_lattice(e1, 2, 3, 5):
        for y in hamiltonian_cloud(e1, theta, 0.0).points:
            assert np.linalg.norm(y) <= C * (1 + np.linalg.norm(theta.z)) + 1e-12


# ---------------------------------------------------------------- properties

pts = st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=6)
rad = st.floats(0, 1)


@settings(max_examples=300, deadline=None)
@given(pts, pts, pts, rad, rad, rad)
def test_hausdorff_pseudometric(a, b, c, ra, rb, rc):
    A, B, C = SetCloud(a, ra), SetCloud(b, rb), SetCloud(c, rc)
    assert hausdorff(A, B) == hausdorff(B, A)
    assert hausdorff(A, A) == 0.0
    assert hausdorff(A, C) <= hausdorff(A, B) + hausdorff(B, C) + 1e-12


@settings(max_examples=300, deadline=None)
@given(pts, pts)
def test_hausdorff_matches_oracle_for_zero_radius(a, b):
    assert hausdorff(SetCloud(a), SetCloud(b)) == pytest.approx(hausdorff_points(a, b), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(pts, pts, rad, rad, st.tuples(st.floats(-6, 6), st.floats(-6, 6)))
def test_distance_stability(a, b, ra, rb, y):
    A, B = SetCloud(a, ra), SetCloud(b, rb)
    assert abs(dist_point_cloud(y, A) - dist_point_cloud(y, B)) <= hausdorff(A, B) + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1), st.floats(0, 1))
def test_eps_monotone(z1, z2, e_small, e_big):
    spec = E1
    lo, hi = sorted((e_small, e_big))
    theta = th([z1, z2])
    small = set(eps_equilibria(spec, theta, lo))
    assert small <= set(eps_equilibria(spec, theta, hi))
    big_pts = hamiltonian_cloud(spec, theta, hi).points
    for p in hamiltonian_cloud(spec, theta, lo).points:
        # clouds merge points closer than DEDUP_TOL
        assert np.abs(big_pts - p).max(axis=1).min() <= DEDUP_TOL


def test_batched_payoffs_match_single(e1):
    theta = th([0.5, -0.3], t=0.2, x=0.1)
    h = theta_payoffs(e1, theta)
    for p in range(e1.num_profiles):
        a = e1.profile(p)
        expect = e1_payoff((0.5, -0.3))(tuple(v[0] for v in a))
        assert np.allclose(h[p], expect, atol=1e-15)
