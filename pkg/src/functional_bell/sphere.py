"""Measurement directions and quadrature rules on the unit sphere.

Rules are product rules: Gauss-Legendre in ``u = cos(theta)`` times a uniform
periodic rule in ``phi``.  The default ``"split"`` rule uses two Gauss-Legendre
panels, one per hemisphere, so integrands with a kink on the equator (such as
``|cos(theta)|`` or ``sign(cos(theta))``) are integrated to rounding error.
Combined with :meth:`QuadratureGrid.rotated`, any hemisphere boundary can be
aligned with the panel split.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

FOUR_PI = 4.0 * math.pi
RULES = ("split", "gauss-legendre")


@dataclass(frozen=True)
class Direction:
    """Unit vector on S^2 stored as polar/azimuthal angles plus Cartesian parts."""

    theta: float
    phi: float
    n1: float = field(init=False)
    n2: float = field(init=False)
    n3: float = field(init=False)

    def __post_init__(self):
        st = math.sin(self.theta)
        object.__setattr__(self, "n1", st * math.cos(self.phi))
        object.__setattr__(self, "n2", st * math.sin(self.phi))
        object.__setattr__(self, "n3", math.cos(self.theta))

    @property
    def xyz(self) -> np.ndarray:
        return np.array([self.n1, self.n2, self.n3])

    def __neg__(self) -> Direction:
        return make_direction(math.pi - self.theta, self.phi + math.pi)

    @classmethod
    def from_vector(cls, v) -> Direction:
        v = np.asarray(v, dtype=float)
        norm = float(np.linalg.norm(v))
        if not math.isfinite(norm) or norm == 0.0:
            raise ValueError(f"cannot build a direction from vector {v!r}")
        x, y, z = v / norm
        theta = math.acos(min(1.0, max(-1.0, z)))
        return make_direction(theta, math.atan2(y, x))


def make_direction(theta: float, phi: float) -> Direction:
    """Build a :class:`Direction`; ``phi`` is reduced mod 2*pi, ``theta`` must lie in [0, pi]."""
    theta = float(theta)
    phi = float(phi)
    if not (math.isfinite(theta) and math.isfinite(phi)):
        raise ValueError(f"non-finite angles: theta={theta!r}, phi={phi!r}")
    if theta < 0.0 or theta > math.pi:
        raise ValueError(f"theta={theta!r} outside [0, pi]")
    phi = math.fmod(phi, 2.0 * math.pi)
    if phi < 0.0:
        phi += 2.0 * math.pi
    if phi >= 2.0 * math.pi:
        phi = 0.0
    return Direction(theta, phi)


def dot(a: Direction, b: Direction) -> float:
    return a.n1 * b.n1 + a.n2 * b.n2 + a.n3 * b.n3


Z_AXIS = make_direction(0.0, 0.0)
X_AXIS = make_direction(math.pi / 2, 0.0)
Y_AXIS = make_direction(math.pi / 2, math.pi / 2)


def angles_to_points(theta, phi) -> np.ndarray:
    """Stack (..., 3) Cartesian unit vectors from angle arrays."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def points_to_angles(points) -> tuple[np.ndarray, np.ndarray]:
    points = np.asarray(points, dtype=float)
    theta = np.arccos(np.clip(points[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(points[..., 1], points[..., 0]), 2.0 * np.pi)
    return theta, phi


def rotation_to(c: Direction) -> np.ndarray:
    """Rotation matrix R with ``R @ z = c`` (deterministic choice)."""
    # z-y-z Euler form: rotate about y by theta, then about z by phi
    ct, st = math.cos(c.theta), math.sin(c.theta)
    cp, sp = math.cos(c.phi), math.sin(c.phi)
    rz = np.array([[cp, -sp, 0.0], [sp, cp, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[ct, 0.0, st], [0.0, 1.0, 0.0], [-st, 0.0, ct]])
    return rz @ ry


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-random element of SO(3) via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes and weights approximating integration against dOmega.

    ``points`` is an (N, 3) array of unit vectors in theta-major order; the
    :attr:`nodes` list of :class:`Direction` objects is built lazily.
    """

    points: np.ndarray
    weights: np.ndarray
    order: tuple[int, int]
    label: str

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self) -> int:
        return len(self.weights)

    @cached_property
    def nodes(self) -> list[Direction]:
        theta, phi = points_to_angles(self.points)
        return [make_direction(t, p) for t, p in zip(theta, phi)]

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def rotated(self, rotation: np.ndarray) -> QuadratureGrid:
        """Same rule with every node mapped by ``rotation``; exact by invariance of dOmega."""
        pts = self.points @ np.asarray(rotation, dtype=float).T
        return QuadratureGrid(pts, self.weights.copy(), self.order, self.label + "+rotated")

    def aligned_with(self, c: Direction) -> QuadratureGrid:
        """Rotate so the rule's pole (and its equatorial panel split) follows ``c``."""
        return self.rotated(rotation_to(c))

    def refined(self) -> QuadratureGrid:
        """The same rule family at twice the order in both angles."""
        if "+rotated" in self.label:
            raise ValueError("refine the base grid, then rotate")
        if self.label.startswith("circle"):
            return build_circle(2 * self.order[1], rule=self.label.split("-", 1)[1])
        n_theta, n_phi = self.order
        return build_grid(2 * n_theta, 2 * n_phi, rule=self.label.split("+")[0])


def _theta_rule(n_theta: int, rule: str) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n_theta)
    if rule == "gauss-legendre":
        return x, w
    if rule == "split":
        # n_theta nodes per hemisphere panel
        return np.concatenate([(x - 1.0) / 2.0, (x + 1.0) / 2.0]), np.concatenate([w / 2.0, w / 2.0])
    raise ValueError(f"unknown rule {rule!r}; expected one of {RULES}")


def build_grid(n_theta: int, n_phi: int, rule: str = "split") -> QuadratureGrid:
    """Product rule on S^2.

    ``rule="gauss-legendre"`` uses ``n_theta`` nodes in cos(theta) over [-1, 1];
    ``rule="split"`` uses ``n_theta`` nodes on each of [-1, 0] and [0, 1].
    Nodes are ordered theta-major, then phi.
    """
    if int(n_theta) != n_theta or int(n_phi) != n_phi:
        raise ValueError("grid orders must be integers")
    n_theta, n_phi = int(n_theta), int(n_phi)
    if n_theta < 2 or n_phi < 4:
        raise ValueError(f"grid order ({n_theta}, {n_phi}) below minimum (2, 4)")
    u, wu = _theta_rule(n_theta, rule)
    # descending cos(theta) so theta increases along the node list
    u, wu = u[::-1], wu[::-1]
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    theta = np.arccos(u)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    points = angles_to_points(tt, pp).reshape(-1, 3)
    # keep cos(theta) exactly equal to the Gauss-Legendre abscissa
    points[:, 2] = np.repeat(u, n_phi)
    weights = np.outer(wu, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel()
    return QuadratureGrid(points, weights, (n_theta, n_phi), rule)


def build_circle(n_phi: int, rule: str = "uniform", offset: float = 0.0) -> QuadratureGrid:
    """Equatorial rule for coplanar settings; weights sum to 2*pi.

    ``"uniform"`` is the periodic trapezoid rule with ``n_phi`` nodes.
    ``"split"`` places ``n_phi // 2`` Gauss-Legendre nodes on each half circle
    ``[offset - pi/2, offset + pi/2]`` and its complement, which integrates
    ``sign(cos(phi - offset))`` times a trigonometric polynomial exactly.
    """
    n_phi = int(n_phi)
    if n_phi < 4:
        raise ValueError(f"circle order {n_phi} below minimum 4")
    if rule == "uniform":
        phi = offset + 2.0 * np.pi * np.arange(n_phi) / n_phi
        weights = np.full(n_phi, 2.0 * np.pi / n_phi)
    elif rule == "split":
        x, w = leggauss(n_phi // 2)
        half = np.pi / 2.0
        phi = np.concatenate([offset + half * x, offset + np.pi + half * x])
        weights = np.concatenate([half * w, half * w])
    else:
        raise ValueError(f"unknown circle rule {rule!r}")
    points = angles_to_points(np.full_like(phi, np.pi / 2.0), phi)
    points[:, 2] = 0.0
    return QuadratureGrid(points, weights, (1, n_phi), f"circle-{rule}")


def integrate(f: Callable[[np.ndarray], np.ndarray], grid: QuadratureGrid) -> float:
    """Weighted sum ``sum_i w_i f(n_i)``.

    ``f`` is vectorized: it receives the (N, 3) array of node unit vectors and
    returns N values.  The reduction is numpy's pairwise sum in node order.
    """
    values = np.asarray(f(grid.points), dtype=float)
    if values.shape != grid.weights.shape:
        values = np.broadcast_to(values, grid.weights.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        theta, phi = points_to_angles(grid.points[i])
        raise ValueError(
            f"integrand is {values[i]!r} at node {i} (theta={float(theta):.6g}, phi={float(phi):.6g})"
        )
    return float(np.sum(grid.weights * values))
