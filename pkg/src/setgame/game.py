"""Game data, reduced static payoffs h and best-response envelopes.

Coefficients are evaluated in batch: for states ``x`` of shape (M, d)
every action profile is evaluated at once, giving drift of shape
(M, P, d) and running payoff of shape (M, P, N), where P is the number
of profiles in the product grid (C order over player grids).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import dsl
from .errors import SpecError


@dataclass(frozen=True)
class GameSpec:
    num_players: int
    brownian_dim: int
    horizon: float
    action_grids: tuple  # per player: tuple of action points (tuples of floats)
    drift: tuple  # d expressions
    terminal: tuple  # N expressions
    running: Optional[tuple] = None  # N expressions, or None when table is used
    table: Optional[dict] = None  # {profile of action points: payoff vector}
    name: str = ""

    def __post_init__(self):
        if self.num_players < 1 or self.brownian_dim < 1:
            raise SpecError("N and d must be positive integers")
        if not self.horizon > 0:
            raise SpecError("horizon T must be positive")
        if len(self.action_grids) != self.num_players:
            raise SpecError(
                f"expected {self.num_players} action grids, got {len(self.action_grids)}"
            )
        grids = []
        for i, grid in enumerate(self.action_grids):
            if len(grid) == 0:
                raise SpecError(f"action grid of player {i + 1} is empty")
            pts = tuple(_as_point(a) for a in grid)
            if len({len(p) for p in pts}) != 1:
                raise SpecError(f"action grid of player {i + 1} mixes dimensions")
            grids.append(pts)
        object.__setattr__(self, "action_grids", tuple(grids))
        if len(self.drift) != self.brownian_dim:
            raise SpecError(
                f"dimension mismatch: {len(self.drift)} drift expressions for d={self.brownian_dim}"
            )
        if len(self.terminal) != self.num_players:
            raise SpecError(
                f"dimension mismatch: {len(self.terminal)} terminal expressions for N={self.num_players}"
            )
        if (self.running is None) == (self.table is None):
            raise SpecError("give exactly one of running expressions or a payoff table")
        if self.running is not None and len(self.running) != self.num_players:
            raise SpecError(
                f"dimension mismatch: {len(self.running)} running expressions for N={self.num_players}"
            )
        if self.table is not None:
            table = {}
            for key, val in self.table.items():
                prof = tuple(_as_point(a) for a in key)
                if len(val) != self.num_players:
                    raise SpecError(f"table row {key} has {len(val)} entries, expected N")
                table[prof] = tuple(float(v) for v in val)
            object.__setattr__(self, "table", table)

    # -- grids and profiles

    @cached_property
    def grid_shape(self) -> tuple:
        return tuple(len(g) for g in self.action_grids)

    @cached_property
    def profile_indices(self) -> np.ndarray:
        """(P, N) integer array of grid indices, C order."""
        idx = np.indices(self.grid_shape).reshape(self.num_players, -1).T
        return np.ascontiguousarray(idx)

    @property
    def num_profiles(self) -> int:
        return int(np.prod(self.grid_shape))

    def profile(self, index: int) -> tuple:
        """Action profile (tuple of action points) for a flat profile index."""
        return tuple(
            self.action_grids[i][k] for i, k in enumerate(self.profile_indices[index])
        )

    def profile_index(self, actions: Sequence) -> int:
        idx = []
        for i, a in enumerate(actions):
            pt = _as_point(a)
            try:
                idx.append(self.action_grids[i].index(pt))
            except ValueError:
                raise SpecError(
                    f"action {a!r} is not on the grid of player {i + 1}"
                ) from None
        return int(np.ravel_multi_index(idx, self.grid_shape))

    @cached_property
    def deviation_indices(self) -> tuple:
        """Per player i, (P, n_i) flat indices of the profiles (a^{-i}, a_i')."""
        out = []
        shape = self.grid_shape
        for i in range(self.num_players):
            prof = np.repeat(self.profile_indices[:, None, :], shape[i], axis=1).copy()
            prof[:, :, i] = np.arange(shape[i])[None, :]
            out.append(np.ravel_multi_index(tuple(np.moveaxis(prof, -1, 0)), shape))
        return tuple(out)

    @cached_property
    def _action_env(self) -> dict:
        env = {}
        for i, grid in enumerate(self.action_grids):
            vals = np.array(grid, dtype=float)[self.profile_indices[:, i]]  # (P, k)
            for j in range(vals.shape[1]):
                env[f"a{i + 1}_{j + 1}"] = vals[:, j][None, :]
            if vals.shape[1] == 1:
                env[f"a{i + 1}"] = vals[:, 0][None, :]
        return env

    @cached_property
    def _table_payoffs(self) -> Optional[np.ndarray]:
        if self.table is None:
            return None
        out = np.empty((self.num_profiles, self.num_players))
        for p in range(self.num_profiles):
            prof = self.profile(p)
            if prof not in self.table:
                raise SpecError(f"payoff table has no row for profile {prof}")
            out[p] = self.table[prof]
        return out

    @cached_property
    def uses_time(self) -> bool:
        exprs = list(self.drift) + list(self.running or ())
        return any("t" in dsl.variables(e) for e in exprs)

    @cached_property
    def zero_sum(self) -> bool:
        return is_zero_sum(self)

    # -- evaluation

    def _state_env(self, t, x):
        env = {"t": t}
        for j in range(self.brownian_dim):
            env[f"x{j + 1}"] = x[:, j][:, None]
        return env

    def _eval_block(self, exprs, env, shape):
        out = np.empty(shape + (len(exprs),))
        for k, e in enumerate(exprs):
            try:
                out[..., k] = np.broadcast_to(dsl.evaluate(e, env), shape)
            except dsl.EvalError as err:
                raise SpecError(f"malformed spec {self.name!r}: {err}") from None
        return out

    def fields(self, t, x):
        """Drift (M, P, d) and running payoff (M, P, N) at states x (M, d)."""
        x = np.asarray(x, dtype=float).reshape(-1, self.brownian_dim)
        env = self._state_env(t, x)
        env.update(self._action_env)
        shape = (x.shape[0], self.num_profiles)
        b = self._eval_block(self.drift, env, shape)
        if self.table is not None:
            f = np.broadcast_to(self._table_payoffs, shape + (self.num_players,)).copy()
        else:
            f = self._eval_block(self.running, env, shape)
        return b, f

    def terminal_values(self, x) -> np.ndarray:
        """g at states x (M, d) -> (M, N)."""
        x = np.asarray(x, dtype=float).reshape(-1, self.brownian_dim)
        env = {f"x{j + 1}": x[:, j] for j in range(self.brownian_dim)}
        return self._eval_block(self.terminal, env, (x.shape[0],))

    def payoffs_batch(self, t, x, z) -> np.ndarray:
        """h(t, x_m, z_m, a_p) for all states and profiles -> (M, P, N).

        ``z`` has shape (M, d, N); column i of z_m is player i's z^i.
        """
        b, f = self.fields(t, x)
        z = np.asarray(z, dtype=float).reshape(-1, self.brownian_dim, self.num_players)
        return f + np.einsum("mpd,mdn->mpn", b, z)


def _as_point(a) -> tuple:
    if np.ndim(a) == 0:
        return (float(a),)
    return tuple(float(v) for v in a)


@dataclass(frozen=True)
class Theta:
    """Extended state point (t, x, z) with z of shape (d, N)."""

    t: float
    x: np.ndarray = field(compare=False)
    z: np.ndarray = field(compare=False)

    @classmethod
    def make(cls, t, x, z):
        x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
        z = np.asarray(z, dtype=float)
        if z.ndim <= 1:
            z = z.reshape(x.size, -1)
        theta = cls(float(t), x, z)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z)) and np.isfinite(t)):
            raise ValueError("Theta entries must be finite")
        return theta

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.t], self.x, self.z.ravel()])

    def __repr__(self):
        return f"Theta(t={self.t:g}, x={self.x.tolist()}, z={self.z.tolist()})"


def _check_theta(spec: GameSpec, theta: Theta):
    if not 0 <= theta.t <= spec.horizon:
        raise SpecError(f"t={theta.t} outside [0, {spec.horizon}]")
    if theta.z.shape != (spec.brownian_dim, spec.num_players):
        raise SpecError(
            f"z has shape {theta.z.shape}, expected {(spec.brownian_dim, spec.num_players)}"
        )


def evaluate_coefficients(spec: GameSpec, t, x, actions):
    """b(t, x, a) in R^d and f(t, x, a) in R^N for one action profile."""
    p = spec.profile_index(actions)
    b, f = spec.fields(t, np.atleast_1d(np.asarray(x, dtype=float))[None, :])
    return b[0, p], f[0, p]


def evaluate_terminal(spec: GameSpec, x) -> np.ndarray:
    return spec.terminal_values(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0]


def theta_payoffs(spec: GameSpec, theta: Theta) -> np.ndarray:
    """h(theta, a) for every profile, shape (P, N)."""
    _check_theta(spec, theta)
    return spec.payoffs_batch(theta.t, theta.x[None, :], theta.z[None])[0]


def hamiltonian_h(spec: GameSpec, theta: Theta, actions) -> np.ndarray:
    return theta_payoffs(spec, theta)[spec.profile_index(actions)]


def best_response_values(spec: GameSpec, h: np.ndarray) -> np.ndarray:
    """hbar_i(a) for every profile given payoffs h of shape (..., P, N)."""
    out = np.empty_like(h)
    for i, dev in enumerate(spec.deviation_indices):
        out[..., i] = h[..., dev, i].max(axis=-1)
    return out


def best_response_hbar(spec: GameSpec, theta: Theta, actions, i: int) -> float:
    """max over player i's grid of h_i with the other players held at a^{-i}.

    ``i`` is a 1-based player index.
    """
    h = theta_payoffs(spec, theta)
    p = spec.profile_index(actions)
    return float(h[spec.deviation_indices[i - 1][p], i - 1].max())


@dataclass(frozen=True)
class CoefficientBounds:
    sup_b: float
    sup_f: float
    sup_g: float
    num_players: int
    brownian_dim: int

    @property
    def lipschitz_z(self) -> float:
        """Bound on the z-Lipschitz constant of h (Euclidean norms)."""
        return self.sup_b * np.sqrt(self.brownian_dim)

    @property
    def growth_constant(self) -> float:
        """C with |h(theta, a)| <= C (1 + |z|) on the probe box."""
        return float(np.sqrt(self.num_players) * max(self.sup_f, self.lipschitz_z))


def coefficient_bounds(spec: GameSpec, box, points_per_axis: int = 9) -> CoefficientBounds:
    """Sup-norms of b, f, g over a lattice of the box and all profiles.

    ``box`` is ((t_lo, t_hi), (x_lo, x_hi)) with the x interval applied to
    every coordinate, or ((t_lo, t_hi), [(lo, hi), ...]) per coordinate.
    """
    (t_lo, t_hi), xbox = box
    if np.ndim(xbox[0]) == 0:
        xbox = [xbox] * spec.brownian_dim
    axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in xbox]
    xs = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    sup_b = sup_f = 0.0
    for t in np.linspace(t_lo, t_hi, points_per_axis):
        b, f = spec.fields(float(t), xs)
        sup_b = max(sup_b, float(np.abs(b).max()))
        sup_f = max(sup_f, float(np.abs(f).max()))
    sup_g = float(np.abs(spec.terminal_values(xs)).max())
    return CoefficientBounds(sup_b, sup_f, sup_g, spec.num_players, spec.brownian_dim)


def is_zero_sum(spec: GameSpec, tol: float = 1e-10, box=((0.0, None), (-3.0, 3.0))) -> bool:
    """Probe-lattice test of f_2 = -f_1 and g_2 = -g_1 for two players."""
    if spec.num_players != 2:
        return False
    (t_lo, t_hi), xbox = box
    t_hi = spec.horizon if t_hi is None else t_hi
    axes = [np.linspace(xbox[0], xbox[1], 9)] * spec.brownian_dim
    xs = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    for t in np.linspace(t_lo, t_hi, 5):
        _, f = spec.fields(float(t), xs)
        if np.abs(f[..., 0] + f[..., 1]).max() > tol:
            return False
    g = spec.terminal_values(xs)
    return bool(np.abs(g[:, 0] + g[:, 1]).max() <= tol)
