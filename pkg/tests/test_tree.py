import math

import numpy as np
import pytest

from oracles import binomial_leaf_mean, recombining_control_dp
from setgame.errors import NumericGuardError
from setgame.io import parse_spec
from setgame.pde import Grid1D, solve_hjb_system
from setgame.selectors import (
    IndexMap,
    Selector,
    constant_selector,
    make_indexed_selector,
    make_nearest_point_selector,
    payoff_branch_selector,
)
from setgame.tree import (
    ControlProfile,
    best_response_root,
    build_tree,
    certify_equilibrium,
    constant_field,
    construct_control,
    control_generator,
    field_as_map,
    payoff_girsanov,
    solve_bsde,
    xi_deficit,
)

E2_ACTIONS = {"00": ((0.0,), (0.0,)), "01": ((0.0,), (1.0,)), "11": ((1.0,), (1.0,))}


def zeros(n):
    return lambda x: np.zeros((len(x), n))


def test_build_tree_examples():
    t = build_tree(1.0, 1)
    assert t.num_nodes == 3 and t.leaves.tolist() == [-1.0, 1.0]
    t = build_tree(1.0, 2)
    assert t.num_nodes == 7
    assert np.allclose(sorted(t.leaves), [-2 * math.sqrt(0.5), 0, 0, 2 * math.sqrt(0.5)])
    t = build_tree(4.0, 4)
    assert t.dt == 1.0 and np.allclose(np.diff(t.path(4, 0)[:, 0]), -1.0)
    with pytest.raises(NumericGuardError):
        build_tree(1.0, 23)
    with pytest.raises(ValueError):
        build_tree(1.0, 0)


def test_path_round_trip():
    t = build_tree(1.0, 6)
    for j in range(2**6):
        p = t.path(6, j)
        assert p[-1, 0] == pytest.approx(t.leaves[j], abs=1e-14)
        assert t.node_of_path(p) == j


def test_zero_generator_is_leaf_mean():
    t = build_tree(1.0, 10)
    g = lambda x: np.tanh(x - 0.5)
    sol = solve_bsde(t, constant_selector([0.0]), g)
    # equal up to summation order
    assert sol.root[0] == pytest.approx(binomial_leaf_mean(lambda v: math.tanh(v - 0.5), 1.0, 10), abs=1e-14)
    assert sol.root[0] == pytest.approx(np.mean(g(t.leaves)), abs=1e-15)


def test_constant_generator():
    t = build_tree(1.0, 6)
    assert np.allclose(solve_bsde(t, constant_selector([0.3, -2.0]), zeros(2)).root, [0.3, -2.0])


def test_e2_constant_selector(e2):
    t = build_tree(1.0, 8)
    assert solve_bsde(t, constant_selector([2.0, 1.0]), e2).root.tolist() == [2.0, 1.0]


def test_non_finite_generator_rejected():
    t = build_tree(1.0, 3)
    bad = Selector(state_fn=lambda t, x, z: np.full((len(x), 1), np.nan), lipschitz_bound=0.0,
                   label="nan", num_players=1)
    with pytest.raises(NumericGuardError):
        solve_bsde(t, bad, zeros(1))


def test_depth_guard():
    t = build_tree(1.0, 2)
    sel = Selector(state_fn=lambda t, x, z: z[:, 0, :], lipschitz_bound=3.0, label="L3",
                   num_players=1)
    with pytest.raises(NumericGuardError, match="depth"):
        solve_bsde(t, sel, zeros(1))


def test_callable_generator_matches_selector(e4):
    t = build_tree(1.0, 6)
    sel = payoff_branch_selector(e4, ((1.0,),))
    a = solve_bsde(t, sel, e4).root
    b = solve_bsde(t, lambda tt, path, z: sel(tt, path, z), e4).root
    assert np.allclose(a, b, atol=1e-15)


# ---------------------------------------------------------------- payoffs

def test_girsanov_no_tilt():
    spec = parse_spec(
        "[game]\nN = 1\n[actions]\n1 = 0\n[dynamics]\nb1 = 0\n[running]\nf1 = 0\n"
        "[terminal]\ng1 = tanh(x1)\n", "flat")
    t = build_tree(1.0, 9)
    c = ControlProfile.constant(t, spec, ((0.0,),))
    assert payoff_girsanov(t, spec, c)[0] == pytest.approx(
        binomial_leaf_mean(math.tanh, 1.0, 9), abs=1e-14)


def test_girsanov_examples(e2, e4):
    t = build_tree(1.0, 8)
    assert payoff_girsanov(t, e2, ControlProfile.constant(t, e2, E2_ACTIONS["00"])).tolist() == [2.0, 1.0]
    t = build_tree(1.0, 12)
    c = ControlProfile.constant(t, e4, ((1.0,),))
    j = payoff_girsanov(t, e4, c)
    y = solve_bsde(t, payoff_branch_selector(e4, ((1.0,),)), e4).root
    assert abs(j[0] - y[0]) <= 5e-3


def test_girsanov_tilt_guard():
    spec = parse_spec(
        "[game]\nN = 1\n[actions]\n1 = 5\n[dynamics]\nb1 = a1\n[running]\nf1 = 0\n"
        "[terminal]\ng1 = 0\n", "steep")
    t = build_tree(1.0, 10)
    with pytest.raises(NumericGuardError, match="at least 26"):
        payoff_girsanov(t, spec, ControlProfile.constant(t, spec, ((5.0,),)))


def test_cross_method_consistency(e1):
    # C dt regression bound; the two schemes agree to rounding on these specs
    rng = np.random.default_rng(0)
    for M in (6, 10):
        t = build_tree(1.0, M)
        levels = [rng.integers(0, e1.num_profiles, size=2**k) for k in range(M)]
        c = ControlProfile(levels)
        y = solve_bsde(t, control_generator(e1, c), e1).root
        assert np.abs(payoff_girsanov(t, e1, c) - y).max() <= 0.1 * t.dt


def test_best_response_examples(e1, e2):
    t = build_tree(1.0, 8)
    assert best_response_root(t, e2, ControlProfile.constant(t, e2, E2_ACTIONS["00"]), 1) == 2.0
    assert best_response_root(t, e2, ControlProfile.constant(t, e2, E2_ACTIONS["01"]), 1) == 1.0
    t = build_tree(1.0, 12)
    c = ControlProfile.constant(t, e1, ((0.0,), (0.0,)))
    tree_val = best_response_root(t, e1, c, 1)
    grid = Grid1D.uniform(0.02)
    absz = Selector(state_fn=lambda tt, x, z: np.abs(z[:, 0, :]), lipschitz_bound=1.0,
                    label="|z|", num_players=1)
    pde_val = solve_hjb_system(absz, lambda x: np.tanh(x - 0.5), grid).root()[0]
    assert abs(tree_val - pde_val) <= 2e-2


def test_best_response_matches_recombining_dp(e4):
    t = build_tree(1.0, 14)
    c = ControlProfile.constant(t, e4, ((0.0,),))
    oracle = recombining_control_dp(1.0, 14, math.tanh, (-1.0, 0.0, 1.0))
    assert best_response_root(t, e4, c, 1) == pytest.approx(oracle, abs=1e-12)


def test_best_response_dominates(e1):
    rng = np.random.default_rng(2)
    t = build_tree(1.0, 7)
    for _ in range(20):
        c = ControlProfile([rng.integers(0, e1.num_profiles, size=2**k) for k in range(7)])
        cert = certify_equilibrium(t, e1, c)
        assert np.all(cert.gaps >= -1e-12)


def test_certify_examples(e2):
    # power-of-two depth: dt sums to T without rounding
    t = build_tree(1.0, 8)
    assert certify_equilibrium(t, e2, ControlProfile.constant(t, e2, E2_ACTIONS["00"])).eps == 0.0
    assert certify_equilibrium(t, e2, ControlProfile.constant(t, e2, E2_ACTIONS["01"])).eps == 1.0
    rng = np.random.default_rng(0)
    eq = [e2.profile_index(E2_ACTIONS["00"]), e2.profile_index(E2_ACTIONS["11"])]
    c = ControlProfile([rng.choice(eq, size=2**k) for k in range(8)])
    assert certify_equilibrium(t, e2, c).eps == 0.0


# ---------------------------------------------------------------- construction

def test_construct_examples(e1, e2):
    t = build_tree(1.0, 6)
    c = construct_control(t, e2, constant_field(t, [2.0, 1.0]), delta=0.01)
    p00 = e2.profile_index(E2_ACTIONS["00"])
    assert all(np.all(lvl == p00) for lvl in c.levels)
    c = construct_control(t, e2, constant_field(t, [1.6, 1.4]), delta=0.01)
    assert all(np.all(lvl == p00) for lvl in c.levels)
    t = build_tree(1.0, 8)
    c = construct_control(t, e1, constant_field(t, [0.0, 0.0]), delta=0.01)
    prof = {e1.profile(int(p)) for lvl in c.levels for p in lvl}
    assert all(a[0][0] + a[1][0] == 0 for a in prof)
    assert certify_equilibrium(t, e1, c).eps <= 0.05


@pytest.mark.parametrize("delta", [0.1, 0.01])
def test_construct_certificate_small(e1, e2, delta):
    t = build_tree(1.0, 8)
    for spec, y in ((e1, [0.0, 0.0]), (e2, [1.0, 2.0])):
        c = construct_control(t, spec, constant_field(t, y), delta=delta)
        assert certify_equilibrium(t, spec, c).eps <= 0.05


def test_construct_rejects_bad_delta(e2):
    t = build_tree(1.0, 3)
    with pytest.raises(ValueError):
        construct_control(t, e2, constant_field(t, [2.0, 1.0]), delta=0.0)


# ---------------------------------------------------------------- xi deficit

def test_xi_deficit_examples(e2):
    t = build_tree(1.0, 6)
    assert xi_deficit(t, e2, constant_field(t, [0.0, 0.0])) == pytest.approx(5**0.75, rel=1e-14)
    assert xi_deficit(t, e2, constant_field(t, [1.0, 2.0])) == 0.0


def test_xi_deficit_selector_eta(e1, e2):
    t = build_tree(1.0, 8)
    fam = [payoff_branch_selector(e2, E2_ACTIONS["00"]), payoff_branch_selector(e2, E2_ACTIONS["11"])]
    sel = make_indexed_selector(fam, IndexMap.endpoint_sign(1, 2))
    eta = solve_bsde(t, sel, e2).generator_values
    assert xi_deficit(t, e2, eta) <= 1e-10
    sel = payoff_branch_selector(e1, ((1.0,), (-1.0,)))
    eta = solve_bsde(t, sel, e1).generator_values
    assert xi_deficit(t, e1, eta) <= 1e-10


def test_nearest_point_selector_on_tree(e2):
    t = build_tree(1.0, 5)
    eta0 = constant_field(t, [1.6, 1.4])
    sel = make_nearest_point_selector(e2, field_as_map(eta0, t))
    sol = solve_bsde(t, sel, e2)
    assert sol.root.tolist() == [2.0, 1.0]


def test_linearity_shift():
    rng = np.random.default_rng(4)
    t = build_tree(2.0, 9)
    eta = [rng.standard_normal((2**k, 2)) for k in range(9)]
    g = lambda x: np.hstack([np.tanh(x), np.sin(x)])
    c = np.array([0.7, -1.3])
    base = solve_bsde(t, eta, g)
    shifted = solve_bsde(t, [e + c / t.horizon for e in eta], g)
    assert np.allclose(shifted.root, base.root + c, atol=1e-12, rtol=0)
    for za, zb in zip(base.Z, shifted.Z):
        assert np.abs(za - zb).max() <= 1e-12
