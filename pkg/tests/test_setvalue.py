import numpy as np
import pytest

from setgame.game import Theta
from setgame.selectors import (
    IndexMap,
    constant_selector,
    make_indexed_selector,
    make_nearest_point_selector,
    payoff_branch_selector,
)
from setgame.setvalue import (
    SamplingPlan,
    SelectorValidityError,
    emptiness_scan,
    estimate_set_value,
    raw_value_check,
    shift_to_target,
    xi_deficit,
    xi_membership,
)
from setgame.tree import build_tree, constant_field, field_as_map, solve_bsde

A00, A11 = ((0.0,), (0.0,)), ((1.0,), (1.0,))


@pytest.fixture(scope="module")
def tree():
    return build_tree(1.0, 8)


def e2_family(spec):
    return [payoff_branch_selector(spec, A00), payoff_branch_selector(spec, A11)]


def segment_distance(p):
    # distance to the segment from (1, 2) to (2, 1)
    a, b = np.array([1.0, 2.0]), np.array([2.0, 1.0])
    s = np.clip((p - a) @ (b - a) / 2.0, 0, 1)
    return np.linalg.norm(p - (a + s[:, None] * (b - a)), axis=-1)


def test_constants_only(tree, e2):
    vc = estimate_set_value(tree, e2, e2_family(e2), SamplingPlan(n_switch=0, n_random=0))
    assert vc.cloud.points.tolist() == [[1.0, 2.0], [2.0, 1.0]]
    assert sorted(vc.provenance) == ["const[1]", "const[2]"]


def test_time_switch(tree, e2):
    vc = estimate_set_value(tree, e2, e2_family(e2), SamplingPlan(n_constant=0, n_switch=1, n_random=0))
    assert np.allclose(vc.cloud.points, [[1.5, 1.5]], atol=1e-9)


def test_random_maps_on_segment(tree, e2):
    vc = estimate_set_value(tree, e2, e2_family(e2), SamplingPlan(n_random=50, seed=7))
    assert segment_distance(vc.cloud.points).max() <= 1e-9
    assert vc.metadata["seed"] == 7 and len(vc.provenance) == len(vc.cloud)


def test_invalid_family_member(tree, e2):
    fam = [constant_selector([1.5, 1.5])]
    with pytest.raises(SelectorValidityError):
        estimate_set_value(tree, e2, fam, SamplingPlan(n_switch=0, n_random=0))
    with pytest.raises(ValueError):
        estimate_set_value(tree, e2, [], SamplingPlan())


def test_sampling_plan_guards():
    with pytest.raises(ValueError):
        SamplingPlan(n_constant=0, n_switch=0, n_random=0)


def test_xi_membership_examples(tree, e2):
    sel = make_indexed_selector(e2_family(e2), IndexMap.endpoint_sign(1, 2))
    eta = solve_bsde(tree, sel, e2).generator_values
    assert xi_membership(tree, e2, eta, 1e-12)
    assert not xi_membership(tree, e2, constant_field(tree, [0.0, 0.0]), 0.1)
    assert xi_membership(tree, e2, constant_field(tree, [2.0, 1.0]), 1e-6)


def test_cloud_points_pass_membership(tree, e2):
    vc = estimate_set_value(tree, e2, e2_family(e2), SamplingPlan(n_random=5, seed=1))
    for imap in vc.sources:
        eta = solve_bsde(tree, make_indexed_selector(e2_family(e2), imap), e2).generator_values
        assert xi_deficit(tree, e2, eta) == 0.0


def test_shift_to_target_examples(tree, e2):
    eta = constant_field(tree, [2.0, 1.0])
    same = shift_to_target(tree, eta, [2.0, 1.0], e2)
    assert all(np.array_equal(a, b) for a, b in zip(same, eta))
    new = shift_to_target(tree, eta, [2.1, 1.0], e2)
    assert np.allclose(new[0], [2.1, 1.0], atol=1e-15)
    assert np.allclose(solve_bsde(tree, new, e2).root, [2.1, 1.0], atol=1e-12)
    assert xi_deficit(tree, e2, new) <= xi_deficit(tree, e2, eta) + 0.1**1.5 + 1e-12
    back = shift_to_target(tree, new, [2.0, 1.0], e2)
    assert max(np.abs(a - b).max() for a, b in zip(back, eta)) <= 1e-15


def test_shift_preserves_z(tree, e1):
    rng = np.random.default_rng(0)
    eta = [rng.normal(size=(2**k, 2)) for k in range(tree.depth)]
    new = shift_to_target(tree, eta, [0.3, -0.1], e1)
    a, b = solve_bsde(tree, eta, e1), solve_bsde(tree, new, e1)
    assert np.allclose(b.root, [0.3, -0.1], atol=1e-12, rtol=0)
    assert max(np.abs(x - y).max() for x, y in zip(a.Z, b.Z)) <= 1e-12


def test_raw_value_check_examples(tree, e2):
    small = build_tree(1.0, 5)
    sel = make_nearest_point_selector(e2, field_as_map(constant_field(small, [1.7, 0.0]), small))
    eta = solve_bsde(small, sel, e2).generator_values
    assert raw_value_check(small, e2, eta)
    alt = [np.where((np.arange(2**k) % 2)[:, None] == 0, [2.0, 1.0], [1.0, 2.0])
           for k in range(tree.depth)]
    assert raw_value_check(tree, e2, alt)
    assert not raw_value_check(tree, e2, constant_field(tree, [1.5, 1.5]))


def test_emptiness_examples(e1, e3):
    probes = [Theta.make(0.5, [0.0], [[z, -z]]) for z in (0.5, -0.5, 1.0, -1.0)]
    rep = emptiness_scan(e3, probes, 0.4)
    assert rep.empty and len(rep.failing) == 4
    rep = emptiness_scan(e1, probes, 0.01)
    assert rep.failing == [] and not rep.empty
    rep = emptiness_scan(e3, [Theta.make(0.2, [0.3], [[0.0, 0.0]])], 0.4)
    assert rep.verdict == "inconclusive" and rep.warnings
