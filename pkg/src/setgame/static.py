"""Static-game equilibria, set-valued Hamiltonian clouds and Hausdorff geometry."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyCloudError, SpecError
from .game import GameSpec, Theta, _check_theta, best_response_values, theta_payoffs

# Absolute slack on equilibrium inequalities; absorbs rounding in f + b.z.
TIE_TOL = 1e-12
DEDUP_TOL = 1e-12
EMPTY_DISTANCE = math.inf


@dataclass(frozen=True)
class SetCloud:
    """Finite point set in R^N with a tolerance radius.

    The set represented is the union of open balls of the given radius
    around the points (the points themselves when radius is 0). Points
    are sorted lexicographically and deduplicated on construction.
    """

    points: np.ndarray
    radius: float = 0.0
    dim: int = field(default=0, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        dim = self.dim or (pts.shape[-1] if pts.ndim == 2 and pts.shape[-1] else 0)
        pts = pts.reshape(-1, dim) if dim else pts.reshape(0, 0)
        if not np.all(np.isfinite(pts)):
            raise ValueError("cloud points must be finite")
        if self.radius < 0:
            raise ValueError("cloud radius must be nonnegative")
        if len(pts):
            pts = pts[np.lexsort(pts.T[::-1])]
            keep = [0]
            for k in range(1, len(pts)):
                if np.abs(pts[k] - pts[keep[-1]]).max() > DEDUP_TOL:
                    keep.append(k)
            pts = pts[keep]
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "dim", dim)

    def __len__(self):
        return len(self.points)

    @property
    def is_empty(self) -> bool:
        return len(self.points) == 0

    def __eq__(self, other):
        if not isinstance(other, SetCloud):
            return NotImplemented
        return (
            self.radius == other.radius
            and self.points.shape == other.points.shape
            and bool(np.all(self.points == other.points))
        )

    def __hash__(self):
        return hash((self.radius, self.points.tobytes()))

    def contains(self, y, tol: float = 1e-9) -> bool:
        return dist_point_cloud(y, self) <= tol

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "radius": self.radius}


# ---------------------------------------------------------------- equilibria

def equilibrium_gaps(spec: GameSpec, h: np.ndarray) -> np.ndarray:
    """hbar - h, per profile and player; nonnegative."""
    return best_response_values(spec, h) - h


def eps_equilibrium_mask(spec: GameSpec, h: np.ndarray, eps: float) -> np.ndarray:
    """Boolean (..., P): profiles with h_i >= hbar_i - eps for every i."""
    return np.all(equilibrium_gaps(spec, h) <= eps + TIE_TOL, axis=-1)


def eps_equilibria(spec: GameSpec, theta: Theta, eps: float) -> list:
    """All grid profiles that are eps-equilibria of a -> h(theta, a)."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    mask = eps_equilibrium_mask(spec, theta_payoffs(spec, theta), eps)
    return [spec.profile(p) for p in np.flatnonzero(mask)]


def hamiltonian_cloud(spec: GameSpec, theta: Theta, eps: float = 0.0) -> SetCloud:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    h = theta_payoffs(spec, theta)
    mask = eps_equilibrium_mask(spec, h, eps)
    return SetCloud(h[mask], radius=eps, dim=spec.num_players)


def clouds_batch(spec: GameSpec, thetas: Sequence[Theta], eps_values: Sequence[float]):
    """Clouds for many probes and several eps at once.

    Returns ``clouds[k][m]`` for eps_values[k] and thetas[m]. Probes are
    grouped by time so that coefficient evaluation is vectorized over x.
    """
    by_t = defaultdict(list)
    for m, th in enumerate(thetas):
        _check_theta(spec, th)
        by_t[th.t].append(m)
    out = [[None] * len(thetas) for _ in eps_values]
    for t, idx in by_t.items():
        xs = np.stack([thetas[m].x for m in idx])
        zs = np.stack([thetas[m].z for m in idx])
        h = spec.payoffs_batch(t, xs, zs)
        gaps = equilibrium_gaps(spec, h)
        for k, eps in enumerate(eps_values):
            mask = np.all(gaps <= eps + TIE_TOL, axis=-1)
            for row, m in enumerate(idx):
                out[k][m] = SetCloud(h[row][mask[row]], radius=eps, dim=spec.num_players)
    return out


# ---------------------------------------------------------------- distances

def dist_point_cloud(y, cloud: SetCloud) -> float:
    """Distance from y to the cloud; EMPTY_DISTANCE (inf) for an empty cloud."""
    if cloud.is_empty:
        return EMPTY_DISTANCE
    y = np.asarray(y, dtype=float).reshape(1, -1)
    d = np.sqrt(((cloud.points - y) ** 2).sum(axis=1)).min()
    return max(0.0, float(d) - cloud.radius)


def _directed(s1: SetCloud, s2: SetCloud) -> float:
    diff = s1.points[:, None, :] - s2.points[None, :, :]
    nearest = np.sqrt((diff**2).sum(axis=-1)).min(axis=1)
    return float(np.maximum(nearest + s1.radius - s2.radius, 0.0).max())


def hausdorff(s1: SetCloud, s2: SetCloud) -> float:
    """Hausdorff distance between two clouds.

    Directed distance from S1 to S2 is max over p in S1 of
    (min_q |p - q| + r1 - r2)^+, which bounds the distance between the
    ball unions and is exact when the radii agree. EMPTY_DISTANCE if
    either cloud is empty.
    """
    if s1.is_empty or s2.is_empty:
        return EMPTY_DISTANCE
    return max(_directed(s1, s2), _directed(s2, s1))


# ---------------------------------------------------------------- continuity

def rho_K(spec: GameSpec, probes: Sequence[Theta], eps: float) -> float:
    """sup over probes of hausdorff(H_eps(theta), H(theta))."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    exact, relaxed = clouds_batch(spec, probes, [0.0, eps])
    worst = 0.0
    for th, c0, ce in zip(probes, exact, relaxed):
        if c0.is_empty:
            raise EmptyCloudError(f"H(theta) is empty at {th!r}", th)
        worst = max(worst, hausdorff(ce, c0))
    return worst


@dataclass
class ContinuityReport:
    probes: list
    ladder: list
    rho: list
    monotone: bool

    def rows(self):
        return list(zip(self.ladder, self.rho))


def continuity_report(spec: GameSpec, probes: Sequence[Theta], ladder: Sequence[float]):
    ladder = [float(e) for e in ladder]
    if not ladder or any(e <= 0 for e in ladder):
        raise ValueError("eps ladder must be positive")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("eps ladder must be strictly decreasing")
    clouds = clouds_batch(spec, probes, [0.0] + ladder)
    exact = clouds[0]
    for th, c0 in zip(probes, exact):
        if c0.is_empty:
            raise EmptyCloudError(f"H(theta) is empty at {th!r}", th)
    rho = []
    for relaxed in clouds[1:]:
        rho.append(max(hausdorff(ce, c0) for ce, c0 in zip(relaxed, exact)))
    monotone = all(b <= a + 1e-12 for a, b in zip(rho, rho[1:]))
    return ContinuityReport(list(probes), ladder, rho, monotone)


# ---------------------------------------------------------------- Isaacs

class IsaacsResult(NamedTuple):
    supinf: float
    infsup: float
    holds: bool


def _require_zero_sum(spec: GameSpec):
    if spec.num_players != 2 or not spec.zero_sum:
        raise SpecError(f"game {spec.name!r} is not two-player zero-sum")


def isaacs_values_batch(spec: GameSpec, t, x, z1):
    """sup_a1 inf_a2 h_1 and inf_a2 sup_a1 h_1 at states x (M, d), z1 (M, d)."""
    _require_zero_sum(spec)
    x = np.asarray(x, dtype=float).reshape(-1, spec.brownian_dim)
    z1 = np.asarray(z1, dtype=float).reshape(-1, spec.brownian_dim)
    b, f = spec.fields(t, x)
    h1 = f[..., 0] + np.einsum("mpd,md->mp", b, z1)
    h1 = h1.reshape((-1,) + spec.grid_shape)
    supinf = h1.min(axis=2).max(axis=1)
    infsup = h1.max(axis=1).min(axis=1)
    return supinf, infsup


def isaacs_check(spec: GameSpec, theta: Theta) -> IsaacsResult:
    _require_zero_sum(spec)
    _check_theta(spec, theta)
    supinf, infsup = isaacs_values_batch(spec, theta.t, theta.x[None, :], theta.z[:, 0][None, :])
    s, i = float(supinf[0]), float(infsup[0])
    return IsaacsResult(s, i, abs(s - i) <= 1e-12)


def theta_lattice(spec: GameSpec, n_t=5, n_x=9, n_z=9, x_box=(-1.0, 1.0), z_box=(-1.0, 1.0),
                  t_box=None):
    """Product lattice of probes over t, every x coordinate and every z entry."""
    t_box = t_box or (0.0, spec.horizon)
    ts = np.linspace(*t_box, n_t)
    x_axes = [np.linspace(*x_box, n_x)] * spec.brownian_dim
    z_axes = [np.linspace(*z_box, n_z)] * (spec.brownian_dim * spec.num_players)
    xs = np.stack(np.meshgrid(*x_axes, indexing="ij"), -1).reshape(-1, spec.brownian_dim)
    zs = np.stack(np.meshgrid(*z_axes, indexing="ij"), -1).reshape(
        -1, spec.brownian_dim, spec.num_players
    )
    return [Theta(float(t), x.copy(), z.copy()) for t in ts for x in xs for z in zs]
