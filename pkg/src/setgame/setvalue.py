"""Desk-scale set values: value clouds from sampled index maps, Xi_eps membership, emptiness scans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyCloudError, NoValueError, SpecError
from .game import GameSpec, Theta
from .selectors import IndexMap, Selector, make_indexed_selector, payoff_branch_selector
from .static import DEDUP_TOL, SetCloud, clouds_batch
from .tree import (
    BinTree,
    EpsCertificate,
    certify_equilibrium,
    construct_control,
    level_cloud_distances,
    solve_bsde,
    xi_deficit,
)

MEMBERSHIP_TOL = 1e-9


class SelectorValidityError(SpecError):
    """A family member produced a value outside the Hamiltonian cloud."""


@dataclass(frozen=True)
class SamplingPlan:
    """How many index maps of each kind to sample.

    ``n_constant`` of None means one constant map per family member.
    Time switches go from member i to member i + 1 (cyclically) at
    evenly spaced times; random maps are node-wise Markov chains.
    """

    n_constant: Optional[int] = None
    n_switch: int = 1
    n_random: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.n_switch < 0 or self.n_random < 0 or (self.n_constant or 0) < 0:
            raise ValueError("sample counts must be nonnegative")
        if self.n_constant == 0 and self.n_switch == 0 and self.n_random == 0:
            raise ValueError("sampling plan must contain at least one index map")


@dataclass
class ValueCloud:
    cloud: SetCloud
    provenance: list  # one label per cloud point
    metadata: dict
    sources: list = field(default_factory=list, repr=False)  # IndexMap per cloud point

    def to_dict(self) -> dict:
        return {
            "cloud": self.cloud.to_dict(),
            "provenance": list(self.provenance),
            "metadata": dict(self.metadata),
        }


def random_index_map(tree: BinTree, n_family: int, rng: np.random.Generator, label: str):
    """Each node keeps its parent's index or, with a path-independent switch
    probability drawn once per map, redraws uniformly; adapted by construction."""
    p_switch = rng.uniform(0.05, 0.95)
    levels = [rng.integers(1, n_family + 1, size=1)]
    for k in range(1, tree.depth):
        parent = np.repeat(levels[-1], 2)
        redraw = rng.random(2**k) < p_switch
        fresh = rng.integers(1, n_family + 1, size=2**k)
        levels.append(np.where(redraw, fresh, parent))
    return IndexMap.from_levels(tree, levels, label=label)


def sample_index_maps(tree: BinTree, n_family: int, plan: SamplingPlan) -> list:
    rng = np.random.default_rng(plan.seed)
    maps = []
    n_const = n_family if plan.n_constant is None else plan.n_constant
    for c in range(n_const):
        maps.append(IndexMap.constant(c % n_family + 1))
    for s in range(plan.n_switch):
        before = s % n_family + 1
        after = before % n_family + 1
        t_switch = tree.horizon * (s + 1) / (plan.n_switch + 1)
        maps.append(IndexMap.time_switch(t_switch, before, after))
    for r in range(plan.n_random):
        maps.append(random_index_map(tree, n_family, rng, label=f"random[{r + 1}]"))
    return maps


def _validate_solution(tree, spec, sol, label):
    for k in range(tree.depth):
        d = level_cloud_distances(spec, tree, k, sol.Z[k], sol.generator_values[k])
        if np.any(d > MEMBERSHIP_TOL):
            j = int(np.argmax(d))
            raise SelectorValidityError(
                f"selector {label!r} leaves the Hamiltonian cloud at level {k}, node {j} "
                f"(distance {d[j]:.3g})"
            )


def estimate_set_value(
    tree: BinTree,
    spec: GameSpec,
    family: Sequence[Selector],
    plan: SamplingPlan,
    validate: bool = True,
) -> ValueCloud:
    """Root values Y^{H^I}_0 over sampled index maps I.

    Family members that claim exactness are validated on every node
    visited by the solves: their values must lie in the eps = 0 cloud at
    the node's (t, x, Z).
    """
    if not family:
        raise ValueError("selector family is empty")
    family = list(family)
    check = validate and all(s.exact for s in family)
    raw, labels, maps = [], [], []
    for imap in sample_index_maps(tree, len(family), plan):
        sel = make_indexed_selector(family, imap)
        sol = solve_bsde(tree, sel, spec)
        if check:
            _validate_solution(tree, spec, sol, imap.label)
        raw.append(sol.root)
        labels.append(imap.label)
        maps.append(imap)
    raw = np.array(raw)
    cloud = SetCloud(raw, dim=spec.num_players)
    provenance, sources = [], []
    for p in cloud.points:
        first = int(np.flatnonzero(np.abs(raw - p).max(axis=1) <= DEDUP_TOL)[0])
        provenance.append(labels[first])
        sources.append(maps[first])
    metadata = {
        "seed": plan.seed,
        "depth": tree.depth,
        "T": tree.horizon,
        "n_samples": len(raw),
        "n_constant": len(family) if plan.n_constant is None else plan.n_constant,
        "n_switch": plan.n_switch,
        "n_random": plan.n_random,
        "family": [s.label for s in family],
    }
    return ValueCloud(cloud, provenance, metadata, sources)


def branch_family(tree: BinTree, spec: GameSpec) -> list:
    """Payoff-branch selectors h(., a) of the profiles that are exact
    equilibria at every node of their own tree solve."""
    family = []
    for p in range(spec.num_profiles):
        sel = payoff_branch_selector(spec, spec.profile(p))
        sol = solve_bsde(tree, sel, spec)
        try:
            _validate_solution(tree, spec, sol, sel.label)
        except (SelectorValidityError, EmptyCloudError):
            continue
        family.append(sel)
    if not family:
        raise NoValueError(f"no action profile of {spec.name!r} is an equilibrium along the tree")
    return family


@dataclass
class BandEntry:
    point: np.ndarray
    provenance: str
    certificate: EpsCertificate
    payoff: np.ndarray

    @property
    def payoff_error(self) -> float:
        return float(np.linalg.norm(self.payoff - self.point))

    def to_dict(self) -> dict:
        return {
            "point": self.point.tolist(),
            "provenance": self.provenance,
            "eps": self.certificate.eps,
            "payoff": self.payoff.tolist(),
            "payoff_error": self.payoff_error,
        }


def certified_band(
    tree: BinTree,
    spec: GameSpec,
    family: Sequence[Selector],
    vc: ValueCloud,
    n_points: int = 10,
    delta: float = 0.01,
    seed: int = 0,
) -> list:
    """For sampled cloud points y, build a control from the generating eta and certify it."""
    rng = np.random.default_rng(seed)
    n = len(vc.cloud)
    picks = np.sort(rng.choice(n, size=min(n_points, n), replace=False))
    out = []
    for m in picks:
        sel = make_indexed_selector(list(family), vc.sources[m])
        sol = solve_bsde(tree, sel, spec)
        control = construct_control(tree, spec, sol.generator_values, sol.Z, delta)
        cert = certify_equilibrium(tree, spec, control)
        out.append(BandEntry(vc.cloud.points[m].copy(), vc.provenance[m], cert, cert.values))
    return out


# ---------------------------------------------------------------- Xi_eps

def xi_membership(tree: BinTree, spec: GameSpec, eta, eps: float) -> bool:
    if eps <= 0:
        raise ValueError("eps must be positive")
    return xi_deficit(tree, spec, eta) <= eps


def shift_to_target(tree: BinTree, eta, y, terminal) -> list:
    """eta + (y - Y^eta_0) / T, so that the shifted root equals y."""
    root = solve_bsde(tree, eta, terminal, check_depth=False).root
    shift = (np.asarray(y, dtype=float) - root) / tree.horizon
    return [np.asarray(e, dtype=float) + shift for e in eta]


def raw_value_check(tree: BinTree, spec: GameSpec, eta) -> bool:
    """eta lies in the eps = 0 cloud at (t, x, Z^eta) at every node."""
    sol = solve_bsde(tree, eta, spec, check_depth=False)
    for k in range(tree.depth):
        d = level_cloud_distances(spec, tree, k, sol.Z[k], sol.generator_values[k])
        if np.any(d > MEMBERSHIP_TOL):
            return False
    return True


# ---------------------------------------------------------------- emptiness

@dataclass
class EmptinessReport:
    verdict: str  # "set value empty" | "inconclusive" | "no emptiness detected"
    failing: list
    z_range: float
    warnings: list

    @property
    def empty(self) -> bool:
        return self.verdict == "set value empty"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "failing": [
                {"t": th.t, "x": th.x.tolist(), "z": th.z.tolist()} for th in self.failing
            ],
            "z_range": self.z_range,
            "warnings": list(self.warnings),
        }


def _z_range(spec: GameSpec) -> float:
    if spec.brownian_dim != 1:
        return math.inf
    from .pde import Grid1D, attained_gradient_range

    grid = Grid1D.uniform(0.05, horizon=spec.horizon)
    return max(attained_gradient_range(spec, grid, i) for i in range(spec.num_players))


def emptiness_scan(
    spec: GameSpec, probes: Sequence[Theta], eps: float, z_range: Optional[float] = None
) -> EmptinessReport:
    """Probes whose eps-equilibrium set is empty, and a verdict.

    Only failures at |z| (max abs entry) within the attained-gradient
    range (a selector-free PDE pre-solve, d = 1) count toward the
    "set value empty" verdict.
    """
    if not probes:
        raise ValueError("emptiness_scan needs at least one probe")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if z_range is None:
        z_range = _z_range(spec)
    clouds = clouds_batch(spec, probes, [eps])[0]
    failing = [th for th, c in zip(probes, clouds) if c.is_empty]
    zabs = [float(np.abs(th.z).max()) for th in probes]
    in_range = [th for th in failing if float(np.abs(th.z).max()) <= z_range + 1e-12]
    warnings = []
    if max(zabs) == 0.0:
        warnings.append("all probes have z = 0; the attained-gradient range is not explored")
    elif max(zabs) < 0.5 * z_range:
        warnings.append(
            f"probes reach |z| <= {max(zabs):g}, below half the attained range {z_range:g}"
        )
    if failing and not in_range:
        warnings.append("all failures lie outside the attained-gradient range")
    if in_range:
        verdict = "set value empty"
    elif failing or max(zabs) == 0.0:
        verdict = "inconclusive"
    else:
        verdict = "no emptiness detected"
    return EmptinessReport(verdict, failing, float(z_range), warnings)
