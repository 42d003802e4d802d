"""Vector BSDEs on a non-recombining binary Brownian tree (d = 1).

Nodes at level k are numbered 0..2^k - 1; the children of node j are
2j (down move, x - sqrt(dt)) and 2j + 1 (up move, x + sqrt(dt)), so the
binary digits of j spell out the path. Per-node quantities are stored
as lists indexed by level: ``field[k]`` has one row per node of level k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EmptyCloudError, NumericGuardError, SpecError
from .game import GameSpec, Theta
from .selectors import nearest_cloud_point
from .static import (
    TIE_TOL,
    SetCloud,
    equilibrium_gaps,
    hausdorff,
)

MAX_DEPTH = 22


@dataclass
class BinTree:
    horizon: float
    depth: int
    states: list = field(repr=False)

    @property
    def dt(self) -> float:
        return self.horizon / self.depth

    @property
    def sqrt_dt(self) -> float:
        return math.sqrt(self.dt)

    @property
    def num_nodes(self) -> int:
        return 2 ** (self.depth + 1) - 1

    @property
    def leaves(self) -> np.ndarray:
        return self.states[self.depth]

    def time(self, level: int) -> float:
        return level * self.dt

    def path(self, level: int, node: int) -> np.ndarray:
        """States x_0..x_level along the path to a node, shape (level+1, 1)."""
        bits = [(node >> (level - s)) & 1 for s in range(1, level + 1)]
        steps = np.where(np.array(bits, dtype=int) == 1, 1.0, -1.0) * self.sqrt_dt
        return np.concatenate([[0.0], np.cumsum(steps)])[:, None]

    def node_of_path(self, path) -> int:
        steps = np.diff(np.asarray(path, dtype=float)[:, 0])
        node = 0
        for s in steps:
            node = 2 * node + (1 if s > 0 else 0)
        return node


def build_tree(horizon: float, depth: int) -> BinTree:
    if depth < 1:
        raise ValueError("tree depth must be at least 1")
    if depth > MAX_DEPTH:
        raise NumericGuardError(f"tree depth {depth} exceeds the memory guard {MAX_DEPTH}")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    s = math.sqrt(horizon / depth)
    states = [np.zeros(1)]
    for _ in range(depth):
        prev = states[-1]
        nxt = np.empty(2 * prev.size)
        nxt[0::2] = prev - s
        nxt[1::2] = prev + s
        states.append(nxt)
    return BinTree(float(horizon), depth, states)


# ---------------------------------------------------------------- node fields

def constant_field(tree: BinTree, value) -> list:
    value = np.asarray(value, dtype=float).reshape(-1)
    return [np.tile(value, (2**k, 1)) for k in range(tree.depth)]


def field_at(fld, tree: BinTree, t, path) -> np.ndarray:
    k = len(path) - 1
    return fld[k][tree.node_of_path(path)]


def field_as_map(fld, tree: BinTree) -> Callable:
    """View a node field as a map (t, path) -> R^N."""
    return lambda t, path: field_at(fld, tree, t, path)


@dataclass
class ControlProfile:
    """Flat profile index per non-terminal node, per level."""

    levels: list

    @classmethod
    def constant(cls, tree: BinTree, spec: GameSpec, actions):
        p = spec.profile_index(actions)
        return cls([np.full(2**k, p, dtype=int) for k in range(tree.depth)])

    def actions(self, spec: GameSpec, level: int, node: int):
        return spec.profile(int(self.levels[level][node]))

    def to_dict(self, spec: GameSpec) -> dict:
        return {
            "per_node": [
                [[list(a) for a in spec.profile(int(p))] for p in lvl] for lvl in self.levels
            ]
        }


@dataclass
class TreeSolution:
    Y: list  # levels 0..M, (2^k, N)
    Z: list  # levels 0..M-1, (2^k, 1, N)
    generator_values: list  # levels 0..M-1, (2^k, N)

    @property
    def root(self) -> np.ndarray:
        return self.Y[0][0]


@dataclass
class EpsCertificate:
    gaps: np.ndarray
    eps: float
    values: np.ndarray  # root Y of the profile's own BSDE
    best_responses: np.ndarray

    def to_dict(self) -> dict:
        return {
            "gaps": self.gaps.tolist(),
            "eps": self.eps,
            "values": self.values.tolist(),
            "best_responses": self.best_responses.tolist(),
        }


def _require_tree_spec(spec: GameSpec):
    if spec.brownian_dim != 1:
        raise SpecError("the tree solver requires d = 1")


def terminal_at(x: np.ndarray, terminal) -> np.ndarray:
    """Terminal vectors (M, N) at states x (M, 1); GameSpec or callable."""
    if isinstance(terminal, GameSpec):
        return terminal.terminal_values(x)
    try:
        vals = np.asarray(terminal(x), dtype=float)
    except Exception:
        vals = None
    if vals is None or vals.ndim != 2 or vals.shape[0] != x.shape[0]:
        vals = np.stack([np.atleast_1d(np.asarray(terminal(row), dtype=float)) for row in x])
    return vals.reshape(x.shape[0], -1)


def _terminal_values(tree: BinTree, terminal) -> np.ndarray:
    return terminal_at(tree.leaves[:, None], terminal)


def _level_generator(generator) -> Callable:
    """Normalize a generator to (tree, level, Z) -> (2^k, N)."""
    if hasattr(generator, "evaluate_level"):
        return lambda tree, k, z: generator.evaluate_level(tree, k, z)
    if isinstance(generator, (list, tuple)):
        return lambda tree, k, z: np.asarray(generator[k], dtype=float)
    if callable(generator):
        def loop(tree, k, z):
            t = tree.time(k)
            return np.stack(
                [np.asarray(generator(t, tree.path(k, j), z[j]), dtype=float).reshape(-1)
                 for j in range(2**k)]
            )
        return loop
    raise TypeError(f"unsupported generator {generator!r}")


def solve_bsde(tree: BinTree, generator, terminal, check_depth: bool = True) -> TreeSolution:
    """Backward induction Y_k = (Y+ + Y-)/2 + G(t, path, Z) dt, Z = (Y+ - Y-)/(2 sqrt dt).

    ``generator`` is a Selector, a node field (list of per-level arrays,
    the z-independent case) or a callable (t, path, z) -> R^N.
    ``terminal`` is a GameSpec or a callable on leaf states (L, 1).
    """
    lip = getattr(generator, "lipschitz_bound", 0.0)
    if check_depth and math.isfinite(lip) and tree.dt * lip >= 1.0:
        raise NumericGuardError(
            f"dt * L = {tree.dt * lip:.3g} >= 1; increase the depth beyond "
            f"{math.floor(tree.horizon * lip)}"
        )
    gen = _level_generator(generator)
    Y = [None] * (tree.depth + 1)
    Z = [None] * tree.depth
    G = [None] * tree.depth
    Y[tree.depth] = _terminal_values(tree, terminal)
    for k in range(tree.depth - 1, -1, -1):
        down, up = Y[k + 1][0::2], Y[k + 1][1::2]
        z = ((up - down) / (2.0 * tree.sqrt_dt))[:, None, :]
        g = np.asarray(gen(tree, k, z), dtype=float).reshape(down.shape)
        if not np.all(np.isfinite(g)):
            raise NumericGuardError(f"non-finite generator value at level {k}")
        Y[k] = 0.5 * (up + down) + g * tree.dt
        Z[k] = z
        G[k] = g
    return TreeSolution(Y, Z, G)


# ---------------------------------------------------------------- controls

def _level_fields(spec: GameSpec, tree: BinTree, k: int):
    return spec.fields(tree.time(k), tree.states[k][:, None])


def control_generator(spec: GameSpec, control: ControlProfile) -> Callable:
    """Level generator h(t, x, z, alpha(node))."""

    def gen(tree, k, z):
        b, f = _level_fields(spec, tree, k)
        rows = np.arange(2**k)
        p = control.levels[k]
        return f[rows, p] + b[rows, p, 0][:, None] * z[:, 0, :]

    return _LevelFn(gen)


class _LevelFn:
    def __init__(self, fn):
        self.evaluate_level = fn
        self.lipschitz_bound = 0.0


def payoff_girsanov(tree: BinTree, spec: GameSpec, control: ControlProfile) -> np.ndarray:
    """J(alpha) by forward weighting with tilted up-probabilities (1 + b sqrt dt)/2."""
    _require_tree_spec(spec)
    weights = np.ones(1)
    total = np.zeros(spec.num_players)
    for k in range(tree.depth):
        b, f = _level_fields(spec, tree, k)
        rows = np.arange(2**k)
        p_idx = control.levels[k]
        drift = b[rows, p_idx, 0]
        p_up = 0.5 * (1.0 + drift * tree.sqrt_dt)
        if np.any((p_up <= 0.0) | (p_up >= 1.0)):
            sup_b = float(np.abs(drift).max())
            need = math.floor(tree.horizon * sup_b**2) + 1
            raise NumericGuardError(
                f"tilted probability outside (0, 1) at level {k}; depth must be at least {need}"
            )
        total += (weights[:, None] * f[rows, p_idx]).sum(axis=0) * tree.dt
        nxt = np.empty(2 * weights.size)
        nxt[0::2] = weights * (1.0 - p_up)
        nxt[1::2] = weights * p_up
        weights = nxt
    total += (weights[:, None] * _terminal_values(tree, spec)).sum(axis=0)
    return total


def best_response_root(tree: BinTree, spec: GameSpec, control: ControlProfile, i: int) -> float:
    """Root of the BSDE with generator hbar_i(t, x, z, alpha); i is 1-based."""
    _require_tree_spec(spec)
    col = i - 1
    dev = spec.deviation_indices[col]
    y = _terminal_values(tree, spec)[:, col]
    for k in range(tree.depth - 1, -1, -1):
        down, up = y[0::2], y[1::2]
        z = (up - down) / (2.0 * tree.sqrt_dt)
        b, f = _level_fields(spec, tree, k)
        rows = np.arange(2**k)[:, None]
        cand = dev[control.levels[k]]  # (2^k, n_i)
        hbar = (f[rows, cand, col] + b[rows, cand, 0] * z[:, None]).max(axis=1)
        y = 0.5 * (up + down) + hbar * tree.dt
    return float(y[0])


def certify_equilibrium(tree: BinTree, spec: GameSpec, control: ControlProfile) -> EpsCertificate:
    _require_tree_spec(spec)
    values = solve_bsde(tree, control_generator(spec, control), spec).root
    best = np.array(
        [best_response_root(tree, spec, control, i + 1) for i in range(spec.num_players)]
    )
    gaps = best - values
    return EpsCertificate(gaps, float(gaps.max()), values, best)


# ---------------------------------------------------------------- clouds on levels

def level_equilibria(spec: GameSpec, tree: BinTree, k: int, z: np.ndarray, eps: float = 0.0):
    """Payoffs (2^k, P, N) and eps-equilibrium mask (2^k, P) at every node of a level."""
    h = spec.payoffs_batch(tree.time(k), tree.states[k][:, None], z)
    gaps = equilibrium_gaps(spec, h)
    return h, np.all(gaps <= eps + TIE_TOL, axis=-1)


def level_cloud_distances(spec: GameSpec, tree: BinTree, k: int, z: np.ndarray, y: np.ndarray):
    """Distance of y[j] to H at node j of level k; raises if a cloud is empty."""
    h, mask = level_equilibria(spec, tree, k, z)
    if not mask.any(axis=1).all():
        j = int(np.flatnonzero(~mask.any(axis=1))[0])
        th = Theta.make(tree.time(k), tree.states[k][j], z[j])
        raise EmptyCloudError(f"H(theta) is empty at {th!r}", th)
    d = np.sqrt(((h - y[:, None, :]) ** 2).sum(axis=-1))
    return np.where(mask, d, np.inf).min(axis=1)


def xi_deficit(tree: BinTree, spec: GameSpec, eta) -> float:
    """E sum_k d^{3/2}(eta, H(t_k, x, Z^eta)) dt under the uniform path measure."""
    _require_tree_spec(spec)
    sol = solve_bsde(tree, eta, spec)
    total = 0.0
    for k in range(tree.depth):
        d = level_cloud_distances(spec, tree, k, sol.Z[k], sol.generator_values[k])
        total += float(np.mean(d**1.5)) * tree.dt
    return total


# ---------------------------------------------------------------- construction

@dataclass
class _Anchor:
    theta: np.ndarray
    eta: np.ndarray
    cloud: SetCloud
    profile: int


def construct_control(
    tree: BinTree, spec: GameSpec, eta, z=None, delta: float = 0.01
) -> ControlProfile:
    """Piecewise-constant control realizing eta up to delta.

    Along each path an anchor is (re)set whenever
    |Theta - Theta_anchor| + d_H(H(Theta), H(Theta_anchor)) + |eta - eta_anchor| >= delta,
    with Theta = (t, x, Z). At an anchor, the cell of side delta (centers
    on the delta-lattice) containing (Theta, eta) selects a profile a_m in
    E_delta(theta_m) with |h(theta_m, a_m) - y*_m| < delta, where y*_m is
    the point of H(theta_m) nearest the cell's eta-center. Within a cell,
    ties go to the smallest |h - y*|, then the smallest equilibrium gap,
    then the lowest profile index. ``z`` defaults to Z^eta.
    """
    _require_tree_spec(spec)
    if delta <= 0:
        raise ValueError("delta must be positive")
    eta = [np.asarray(e, dtype=float) for e in eta]
    if z is None:
        z = solve_bsde(tree, eta, spec, check_depth=False).Z
    cells = {}
    levels = []
    parents = [None]
    n_players = spec.num_players
    for k in range(tree.depth):
        t = tree.time(k)
        xs = tree.states[k]
        zk = np.asarray(z[k], dtype=float).reshape(2**k, 1, n_players)
        h, mask = level_equilibria(spec, tree, k, zk)
        out = np.empty(2**k, dtype=int)
        anchors = []
        for j in range(2**k):
            theta_vec = np.concatenate([[t, xs[j]], zk[j].ravel()])
            cloud = SetCloud(h[j][mask[j]], dim=n_players)
            parent = parents[j // 2] if k > 0 else None
            trigger = parent is None
            if not trigger:
                move = (
                    np.linalg.norm(theta_vec - parent.theta)
                    + hausdorff(cloud, parent.cloud)
                    + np.linalg.norm(eta[k][j] - parent.eta)
                )
                trigger = move >= delta
            if trigger:
                profile = _cell_profile(spec, cells, theta_vec, eta[k][j], delta)
                anchor = _Anchor(theta_vec, eta[k][j], cloud, profile)
            else:
                anchor = parent
            anchors.append(anchor)
            out[j] = anchor.profile
        levels.append(out)
        parents = anchors
    return ControlProfile(levels)


def _cell_profile(spec, cells, theta_vec, eta, delta):
    key = tuple(np.round(np.concatenate([theta_vec, eta]) / delta).astype(np.int64))
    if key in cells:
        return cells[key]
    center = np.array(key, dtype=float) * delta
    n_th = theta_vec.size
    t_m = min(max(center[0], 0.0), spec.horizon)
    x_m = center[1:2]
    z_m = center[2:n_th].reshape(1, spec.num_players)
    y_m = center[n_th:]
    h = spec.payoffs_batch(t_m, x_m[None, :], z_m[None])[0]
    gaps = equilibrium_gaps(spec, h).max(axis=1)
    exact = gaps <= TIE_TOL
    if not exact.any():
        th = Theta.make(t_m, x_m, z_m)
        raise EmptyCloudError(f"H(theta) is empty at cell anchor {th!r}", th)
    cloud = SetCloud(h[exact], dim=spec.num_players)
    y_star = cloud.points[nearest_cloud_point(cloud.points, y_m)]
    miss = np.sqrt(((h - y_star) ** 2).sum(axis=1))
    ok = np.flatnonzero((gaps <= delta + TIE_TOL) & (miss < delta))
    order = np.lexsort((ok, gaps[ok], miss[ok]))
    profile = int(ok[order[0]])
    cells[key] = profile
    return profile
