"""Lipschitz selectors of the set-valued Hamiltonian.

A selector maps (t, path prefix, z) to R^N, where the path prefix is the
array of visited states x_0, ..., x_t (shape (k+1, d)) and z has shape
(d, N). State-dependent selectors additionally expose a vectorized
``state_fn(t, x, z)`` over a batch of states x (M, d) and gradients
z (M, d, N); solvers use it when present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm, qmc

from .errors import EmptyCloudError, NotSingletonError
from .game import GameSpec, Theta, coefficient_bounds
from .static import TIE_TOL, eps_equilibrium_mask


class Selector:
    def __init__(
        self,
        fn: Optional[Callable] = None,
        *,
        state_fn: Optional[Callable] = None,
        lipschitz_bound: float,
        label: str,
        num_players: int,
        exact: bool = True,
    ):
        if fn is None and state_fn is None:
            raise ValueError("selector needs fn or state_fn")
        self._fn = fn
        self.state_fn = state_fn
        self.lipschitz_bound = float(lipschitz_bound)
        self.label = label
        self.num_players = num_players
        self.exact = exact

    def __repr__(self):
        return f"Selector({self.label!r}, L={self.lipschitz_bound:g})"

    @property
    def state_dependent(self) -> bool:
        return self.state_fn is not None

    def evaluate(self, t, path, z) -> np.ndarray:
        path = np.asarray(path, dtype=float)
        if path.ndim == 1:
            path = path[:, None]
        z = np.asarray(z, dtype=float).reshape(path.shape[1], self.num_players)
        if self._fn is not None:
            return np.asarray(self._fn(t, path, z), dtype=float).reshape(self.num_players)
        return self.state_fn(t, path[-1][None, :], z[None])[0]

    __call__ = evaluate

    def evaluate_level(self, tree, level: int, z: np.ndarray, nodes=None) -> np.ndarray:
        """Values at the nodes of one tree level; z has shape (n, d, N)."""
        t = tree.time(level)
        if nodes is None:
            nodes = np.arange(2**level)
        if self.state_fn is not None:
            return self.state_fn(t, tree.states[level][nodes][:, None], z)
        return np.stack(
            [self.evaluate(t, tree.path(level, j), z[r]) for r, j in enumerate(nodes)]
        )


# ---------------------------------------------------------------- basic selectors

def constant_selector(value, label=None) -> Selector:
    value = np.asarray(value, dtype=float).reshape(-1)

    def state_fn(t, x, z):
        return np.broadcast_to(value, (np.shape(x)[0], value.size)).copy()

    return Selector(
        state_fn=state_fn,
        lipschitz_bound=0.0,
        label=label or f"const{tuple(value.tolist())}",
        num_players=value.size,
    )


def payoff_branch_selector(spec: GameSpec, actions, box=None) -> Selector:
    """theta -> h(theta, a) for a fixed profile a.

    A selector of H only where a is an equilibrium; useful as a family
    member when a is an equilibrium at every state.
    """
    p = spec.profile_index(actions)
    box = box or ((0.0, spec.horizon), (-6.0, 6.0))
    lip = coefficient_bounds(spec, box).lipschitz_z

    def state_fn(t, x, z):
        return spec.payoffs_batch(t, x, z)[:, p]

    return Selector(
        state_fn=state_fn,
        lipschitz_bound=lip,
        label=f"branch{spec.profile(p)}",
        num_players=spec.num_players,
    )


def _singleton_values(spec, t, x, z, tol=1e-9):
    h = spec.payoffs_batch(t, x, z)
    mask = eps_equilibrium_mask(spec, h, 0.0)
    has = mask.any(axis=1)
    if not has.all():
        m = int(np.flatnonzero(~has)[0])
        th = Theta.make(t, x[m], z[m])
        raise EmptyCloudError(f"H(theta) is empty at {th!r}", th)
    masked = np.where(mask[..., None], h, np.nan)
    spread = np.nanmax(masked, axis=1) - np.nanmin(masked, axis=1)
    if np.any(spread > tol):
        m = int(np.flatnonzero((spread > tol).any(axis=1))[0])
        th = Theta.make(t, x[m], z[m])
        raise NotSingletonError(f"H(theta) is not a singleton at {th!r}", th)
    first = mask.argmax(axis=1)
    return h[np.arange(len(h)), first]


def make_singleton_selector(spec: GameSpec, probes: Sequence[Theta], label=None) -> Selector:
    """The unique point of H(t, x, z), checked to be a singleton on the probes."""
    for th in probes:
        _singleton_values(spec, th.t, th.x[None, :], th.z[None])

    def state_fn(t, x, z):
        return _singleton_values(spec, t, np.asarray(x, float), np.asarray(z, float))

    sel = Selector(
        state_fn=state_fn,
        lipschitz_bound=0.0,
        label=label or f"singleton[{spec.name}]",
        num_players=spec.num_players,
    )
    rng = np.random.default_rng(0)
    pairs = []
    for th in probes:
        for scale in (1e-3, 0.1):
            dz = rng.standard_normal(th.z.shape) * scale
            pairs.append((th.t, th.x[None, :], th.z, th.z + dz))
    sel.lipschitz_bound = estimate_lipschitz_z(sel, pairs) if pairs else 0.0
    return sel


# ---------------------------------------------------------------- index maps

class IndexMap:
    """Adapted choice (t, path prefix) -> 1-based index into a selector family."""

    def __init__(self, fn: Callable, level_fn: Optional[Callable] = None, label: str = "I"):
        self._fn = fn
        self._level_fn = level_fn
        self.label = label

    def __call__(self, t, path) -> int:
        return int(self._fn(t, np.asarray(path, dtype=float)))

    def level(self, tree, level: int) -> np.ndarray:
        if self._level_fn is not None:
            return np.asarray(self._level_fn(tree, level), dtype=int)
        t = tree.time(level)
        return np.array([self(t, tree.path(level, j)) for j in range(2**level)], dtype=int)

    @classmethod
    def constant(cls, n: int):
        return cls(lambda t, path: n, lambda tree, k: np.full(2**k, n), label=f"const[{n}]")

    @classmethod
    def time_switch(cls, t_switch: float, before: int, after: int):
        def fn(t, path):
            return before if t < t_switch - 1e-12 else after

        def level_fn(tree, k):
            return np.full(2**k, fn(tree.time(k), None))

        return cls(fn, level_fn, label=f"switch[{before}->{after}@{t_switch:g}]")

    @classmethod
    def endpoint_sign(cls, nonneg: int, neg: int):
        """nonneg where the current state x_t >= 0, else neg (path dependent)."""

        def fn(t, path):
            return nonneg if path[-1, 0] >= 0 else neg

        def level_fn(tree, k):
            return np.where(tree.states[k] >= 0, nonneg, neg)

        return cls(fn, level_fn, label=f"sign[{nonneg}|{neg}]")

    @classmethod
    def from_levels(cls, tree, levels, label="table"):
        """Node-wise indices on a given tree; adapted by construction."""
        levels = [np.asarray(v, dtype=int) for v in levels]

        def fn(t, path):
            k = len(path) - 1
            return levels[k][tree.node_of_path(path)]

        return cls(fn, lambda tr, k: levels[k], label=label)


def make_indexed_selector(family: Sequence[Selector], index_map: IndexMap) -> Selector:
    """H^I(t, path, z) = family[I(t, path)](t, x_t, z)."""
    if not family:
        raise ValueError("selector family is empty")
    family = list(family)
    n = len(family)
    lip = max(s.lipschitz_bound for s in family)

    def check(idx):
        idx = np.asarray(idx)
        if np.any((idx < 1) | (idx > n)):
            raise IndexError(f"index map value out of range 1..{n}")

    def fn(t, path, z):
        k = index_map(t, path)
        check(k)
        return family[k - 1].evaluate(t, path[-1:], z)

    sel = Selector(
        fn,
        lipschitz_bound=lip,
        label=f"{index_map.label}",
        num_players=family[0].num_players,
    )

    def evaluate_level(tree, level, z, nodes=None):
        if nodes is None:
            nodes = np.arange(2**level)
        idx = index_map.level(tree, level)[nodes]
        check(idx)
        out = np.empty((len(nodes), sel.num_players))
        for k in np.unique(idx):
            rows = np.flatnonzero(idx == k)
            out[rows] = family[k - 1].evaluate_level(tree, level, z[rows], nodes[rows])
        return out

    sel.evaluate_level = evaluate_level
    return sel


# ---------------------------------------------------------------- ball Hamiltonians

@dataclass(frozen=True)
class BallHamiltonianSpec:
    """H(t,x,z) = closed ball with center o(t,x,z) and radius r(t,x,z).

    ``center(t, x, z)`` returns R^N and ``radius(t, x, z)`` a nonnegative
    real, with x of shape (d,) and z of shape (d, N); both are declared
    ``lipschitz``-Lipschitz in z.
    """

    center: Callable
    radius: Callable
    lipschitz: float
    num_players: int


def _project(eta, o, r):
    e = eta - o
    n = float(np.sqrt(e @ e))
    if n <= r:
        return eta.copy()
    if n == 0.0:
        return o.copy()
    return o + (r / n) * e


def make_projection_selector(ball: BallHamiltonianSpec, eta_map: Callable) -> Selector:
    """Project eta(t, path) onto the ball; declared 4 * L0-Lipschitz in z."""

    def fn(t, path, z):
        x = path[-1]
        o = np.asarray(ball.center(t, x, z), dtype=float).reshape(ball.num_players)
        r = float(ball.radius(t, x, z))
        eta = np.asarray(eta_map(t, path), dtype=float).reshape(ball.num_players)
        return _project(eta, o, r)

    return Selector(
        fn,
        lipschitz_bound=4.0 * ball.lipschitz,
        label="projection",
        num_players=ball.num_players,
    )


def sphere_directions(num_players: int, n_dirs: int) -> np.ndarray:
    """n_dirs unit vectors in R^N; the first is e_1."""
    if n_dirs < 1:
        raise ValueError("n_dirs must be at least 1")
    if num_players == 1:
        return np.array([[1.0 if k % 2 == 0 else -1.0] for k in range(n_dirs)])
    if num_players == 2:
        ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    dirs = [np.eye(num_players)[0]]
    if n_dirs > 1:
        u = qmc.Halton(d=num_players, scramble=False).random(n_dirs)[1:]
        g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
        dirs.extend(g / np.linalg.norm(g, axis=1, keepdims=True))
    return np.array(dirs)


def enumerate_ball_family(ball: BallHamiltonianSpec, n_dirs: int, n_radii: int) -> list:
    """Selectors H_{n,m} = o + iota_m * r * zeta_n, each 2 * L0-Lipschitz."""
    if n_radii < 1:
        raise ValueError("n_radii must be at least 1")
    dirs = sphere_directions(ball.num_players, n_dirs)
    iotas = np.linspace(1.0, 0.0, n_radii) if n_radii > 1 else np.array([1.0])
    family = []
    for n, zeta in enumerate(dirs):
        for m, iota in enumerate(iotas):

            def fn(t, path, z, zeta=zeta, iota=iota):
                x = path[-1]
                o = np.asarray(ball.center(t, x, z), dtype=float).reshape(ball.num_players)
                return o + iota * float(ball.radius(t, x, z)) * zeta

            def state_fn(t, x, z, fn=fn):
                return np.stack([fn(t, x[m][None, :], z[m]) for m in range(len(x))])

            family.append(
                Selector(
                    state_fn=state_fn,
                    lipschitz_bound=2.0 * ball.lipschitz,
                    label=f"ball[{n + 1},{m + 1}]",
                    num_players=ball.num_players,
                )
            )
    return family


# ---------------------------------------------------------------- nearest point

def nearest_cloud_point(points: np.ndarray, y: np.ndarray) -> int:
    """Index of the nearest point; ties go to the lexicographically first.

    ``points`` must already be in canonical (lexicographic) order.
    """
    d2 = ((points - y) ** 2).sum(axis=1)
    return int(np.flatnonzero(d2 <= d2.min() + TIE_TOL)[0])


def make_nearest_point_selector(spec: GameSpec, eta_map: Callable) -> Selector:
    """Nearest point of H(t, x_t, z) to eta(t, path).

    Not Lipschitz in z in general, so the declared bound is infinite.
    """
    from .static import hamiltonian_cloud

    def fn(t, path, z):
        th = Theta.make(t, path[-1], z)
        cloud = hamiltonian_cloud(spec, th, 0.0)
        if cloud.is_empty:
            raise EmptyCloudError(f"H(theta) is empty at {th!r}", th)
        eta = np.asarray(eta_map(t, path), dtype=float)
        return cloud.points[nearest_cloud_point(cloud.points, eta)].copy()

    return Selector(
        fn,
        lipschitz_bound=math.inf,
        label="nearest-point",
        num_players=spec.num_players,
    )


# ---------------------------------------------------------------- diagnostics

def estimate_lipschitz_z(sel: Selector, probes) -> float:
    """max |H(t,path,z) - H(t,path,z')| / |z - z'| over (t, path, z, z') probes."""
    worst = 0.0
    for t, path, z, z2 in probes:
        dz = np.asarray(z, float) - np.asarray(z2, float)
        nz = float(np.sqrt((dz**2).sum()))
        if nz == 0.0:
            raise ValueError("probe pair has z == z'")
        dh = sel.evaluate(t, path, z) - sel.evaluate(t, path, z2)
        worst = max(worst, float(np.sqrt(dh @ dh)) / nz)
    return worst
