"""Explicit finite differences for the HJB system driven by a state-dependent selector (d = 1).

Backward Euler-in-time steps from u(T) = g:

    u_n = u_{n+1} + dt * (0.5 * D2 u_{n+1} + H(t_{n+1}, x, D1 u_{n+1}))

with central differences D1, D2 on a uniform grid. The scheme is
monotone when dt <= dx^2 and L * dx <= 1, where L is the selector's
Lipschitz bound in z; the grid enforces dt <= 0.9 * dx^2 / 2. At the
two boundary nodes the gradient is frozen: each boundary value moves by
the same amount as its neighbour, a Neumann-type truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericGuardError, SpecError
from .game import GameSpec, Theta, coefficient_bounds
from .selectors import Selector
from .static import _require_zero_sum, isaacs_values_batch
from .tree import terminal_at

CFL_SAFETY = 0.1
MAX_STORED_LEVELS = 200
PRESOLVE_DX = 0.05
BOUNDARY_POLICY = "frozen-gradient (Neumann-type) truncation"


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    nx: int  # interior points
    dx: float
    dt: float
    horizon: float

    @classmethod
    def uniform(cls, dx=0.01, x_min=-6.0, x_max=6.0, horizon=1.0, dt=None):
        if not x_min < 0 < x_max:
            raise ValueError("grid must satisfy x_min < 0 < x_max")
        n_cells = int(round((x_max - x_min) / dx))
        if not math.isclose(n_cells * dx, x_max - x_min, rel_tol=1e-9):
            raise ValueError("dx must divide the domain length")
        dt_max = (1.0 - CFL_SAFETY) * dx**2 / 2.0
        n_steps = max(1, math.ceil(horizon / min(dt if dt else dt_max, dt_max) - 1e-9))
        return cls(float(x_min), float(x_max), n_cells - 1, float(dx), horizon / n_steps,
                   float(horizon))

    @property
    def points(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.nx + 2)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def check(self, lipschitz: float = 0.0):
        if self.dt > (1.0 - CFL_SAFETY) * self.dx**2 / 2.0 * (1 + 1e-12):
            raise NumericGuardError(
                f"CFL violated: dt = {self.dt:.3g} > {(1 - CFL_SAFETY) * self.dx**2 / 2:.3g}"
            )
        if not math.isclose(self.n_steps * self.dt, self.horizon, rel_tol=1e-9):
            raise NumericGuardError("dt must divide the horizon")
        if not math.isfinite(lipschitz) or lipschitz * self.dx > 1.0:
            raise NumericGuardError(
                f"monotonicity needs L * dx <= 1 (L = {lipschitz:g}, dx = {self.dx:g})"
            )

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "nx": self.nx, "dx": self.dx,
                "dt": self.dt, "T": self.horizon}


@dataclass
class PDESolution:
    """u[k, j, i] at times[k] and grid point j for component i.

    Only a subsample of time levels is kept; level 0 (t = 0) and the
    terminal level are always present.
    """

    times: np.ndarray
    u: np.ndarray
    grid: Grid1D
    label: str
    metadata: dict = field(default_factory=dict)

    def root(self) -> np.ndarray:
        return sample_value(self, 0.0, 0.0)


def solve_hjb_system(selector: Selector, terminal, grid: Grid1D, horizon: Optional[float] = None):
    if not selector.state_dependent:
        raise SpecError(f"selector {selector.label!r} is path-dependent; the PDE needs a state map")
    if horizon is not None and not math.isclose(horizon, grid.horizon):
        raise ValueError("grid was built for a different horizon")
    grid.check(selector.lipschitz_bound)
    xs = grid.points
    x_int = xs[1:-1, None]
    u = terminal_at(xs[:, None], terminal).astype(float)
    n_steps = grid.n_steps
    stride = max(1, math.ceil(n_steps / MAX_STORED_LEVELS))
    stored_t = [grid.horizon]
    stored_u = [u.copy()]
    dx, dt = grid.dx, grid.dt
    for n in range(n_steps, 0, -1):
        t = n * dt
        lap = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx**2
        grad = (u[2:] - u[:-2]) / (2.0 * dx)
        ham = np.asarray(selector.state_fn(t, x_int, grad[:, None, :]), dtype=float)
        new = u.copy()
        new[1:-1] = u[1:-1] + dt * (0.5 * lap + ham.reshape(grad.shape))
        new[0] = new[1] - (u[1] - u[0])
        new[-1] = new[-2] - (u[-2] - u[-1])
        if not np.all(np.isfinite(new)):
            raise NumericGuardError(f"non-finite PDE update at t = {(n - 1) * dt:.6g}")
        u = new
        if (n - 1) % stride == 0:
            stored_t.append((n - 1) * dt)
            stored_u.append(u.copy())
    order = np.argsort(stored_t)
    return PDESolution(
        times=np.asarray(stored_t)[order],
        u=np.stack(stored_u)[order],
        grid=grid,
        label=selector.label,
        metadata={"boundary": BOUNDARY_POLICY, "grid": grid.to_dict(), "stride": stride},
    )


def sample_value(sol: PDESolution, t: float, x: float) -> np.ndarray:
    """Bilinear interpolation of u in (t, x) over the stored levels."""
    xs = sol.grid.points
    tol = 1e-12
    if not (sol.times[0] - tol <= t <= sol.times[-1] + tol and xs[0] - tol <= x <= xs[-1] + tol):
        raise ValueError(f"({t}, {x}) is outside the grid hull")

    def bracket(values, v):
        k = int(np.clip(np.searchsorted(values, v, side="right") - 1, 0, len(values) - 2))
        w = (v - values[k]) / (values[k + 1] - values[k])
        return k, min(max(w, 0.0), 1.0)

    k, wt = bracket(sol.times, t)
    j, wx = bracket(xs, x)
    u = sol.u
    lo = (1 - wx) * u[k, j] + wx * u[k, j + 1]
    hi = (1 - wx) * u[k + 1, j] + wx * u[k + 1, j + 1]
    out = lo if wt == 0.0 else (1 - wt) * lo + wt * hi
    return np.asarray(out, dtype=float)


# ---------------------------------------------------------------- game Hamiltonians

def _field_cache(spec: GameSpec, grid: Grid1D):
    """fields(t, x) on the interior grid, computed once for time-free specs."""
    x_int = grid.points[1:-1, None]
    if spec.uses_time:
        return lambda t: spec.fields(t, x_int)
    cached = spec.fields(0.0, x_int)
    return lambda t: cached


def _lipschitz(spec: GameSpec, grid: Grid1D) -> float:
    box = ((0.0, grid.horizon), (grid.x_min, grid.x_max))
    return coefficient_bounds(spec, box).lipschitz_z


def supinf_selector(spec: GameSpec, grid: Grid1D) -> Selector:
    """H_1 = sup_a1 inf_a2 h_1 on the grid; scalar (N = 1 output)."""
    _require_zero_sum(spec)
    fields = _field_cache(spec, grid)
    shape = spec.grid_shape

    def state_fn(t, x, z):
        b, f = fields(t)
        h1 = f[..., 0] + b[..., 0] * z[:, 0, :1]
        return h1.reshape((-1,) + shape).min(axis=2).max(axis=1)[:, None]

    return Selector(state_fn=state_fn, lipschitz_bound=_lipschitz(spec, grid),
                    label="supinf", num_players=1)


def max_selector(spec: GameSpec, grid: Grid1D) -> Selector:
    """H = max_a h over the action grid (single player)."""
    if spec.num_players != 1:
        raise SpecError(f"control_value needs N = 1, game {spec.name!r} has N = {spec.num_players}")
    fields = _field_cache(spec, grid)

    def state_fn(t, x, z):
        b, f = fields(t)
        h = f[..., 0] + np.einsum("mpd,md->mp", b, z[:, :, 0])
        return h.max(axis=1)[:, None]

    return Selector(state_fn=state_fn, lipschitz_bound=_lipschitz(spec, grid),
                    label="max", num_players=1)


def control_value(spec: GameSpec, grid: Grid1D) -> float:
    sel = max_selector(spec, grid)
    sol = solve_hjb_system(sel, spec, grid)
    return float(sol.root()[0])


@dataclass
class ZeroSumResult:
    u1_root: Optional[float]
    isaacs_ok: bool
    failing: list  # Theta probes where supinf != infsup
    z_range: float
    solution: Optional[PDESolution] = None

    @property
    def u2_root(self) -> Optional[float]:
        return None if self.u1_root is None else -self.u1_root


def attained_gradient_range(spec: GameSpec, grid: Grid1D, player: int = 0) -> float:
    """max |d_x u| over a selector-free (H = 0) solve of player's terminal data.

    Runs on a grid no finer than PRESOLVE_DX; only a range estimate is needed.
    """
    if grid.dx < PRESOLVE_DX:
        grid = Grid1D.uniform(PRESOLVE_DX, grid.x_min, grid.x_max, grid.horizon)
    zero = Selector(state_fn=lambda t, x, z: np.zeros((len(x), 1)), lipschitz_bound=0.0,
                    label="zero", num_players=1)
    g = lambda x: spec.terminal_values(x)[:, player : player + 1]
    sol = solve_hjb_system(zero, g, grid)
    grads = np.abs(np.diff(sol.u[..., 0], axis=1)) / grid.dx
    return float(grads.max())


def zero_sum_value(
    spec: GameSpec,
    grid: Grid1D,
    strict: bool = False,
    n_t: int = 5,
    n_x: int = 25,
    n_z: int = 21,
    strict_range: float = 10.0,
) -> ZeroSumResult:
    """Check Isaacs on a (t, x, z^1) lattice, then solve for u_1 when it holds.

    The z-range is the gradient range of a selector-free pre-solve, or
    [-strict_range, strict_range] in strict mode. u_2 = -u_1.
    """
    _require_zero_sum(spec)
    if spec.brownian_dim != 1:
        raise SpecError("the PDE solver requires d = 1")
    z_max = strict_range if strict else attained_gradient_range(spec, grid)
    ts = np.linspace(0.0, grid.horizon, n_t)
    xs = np.linspace(grid.x_min, grid.x_max, n_x)
    zs = np.linspace(-z_max, z_max, n_z)
    X, Zv = np.meshgrid(xs, zs, indexing="ij")
    failing = []
    for t in ts:
        s, i = isaacs_values_batch(spec, t, X.reshape(-1, 1), Zv.reshape(-1, 1))
        for m in np.flatnonzero(np.abs(s - i) > 1e-12):
            z1 = Zv.flat[m]
            failing.append(Theta.make(t, [X.flat[m]], [[z1, -z1]]))
    if failing:
        return ZeroSumResult(None, False, failing, z_max)
    sol = solve_hjb_system(supinf_selector(spec, grid), lambda x: spec.terminal_values(x)[:, :1],
                           grid)
    return ZeroSumResult(float(sol.root()[0]), True, [], z_max, sol)
