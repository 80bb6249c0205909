"""Domains, uniform node-centred grids, boundary distance and the blow-up barrier."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# node classes
OUTSIDE = 0
INTERIOR = 1
BOUNDARY = 2
TARGET = 3

_GEOM_EPS = 1e-12


class GeometryError(ValueError):
    """Raised for degenerate or inconsistent domain geometry."""


@dataclass(frozen=True)
class Domain:
    """An interval, box, ball or annulus (outer region minus a closed ball) in 1 or 2 dimensions.

    Use the ``interval``/``box``/``ball``/``annulus`` constructors rather than the
    raw initializer.
    """

    kind: str
    lo: tuple[float, ...] = ()
    hi: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    radius: float = 0.0
    outer: Domain | None = None

    @classmethod
    def interval(cls, a: float, b: float) -> Domain:
        if not b - a > 0:
            raise GeometryError(f"interval ({a}, {b}) has non-positive length")
        return cls("interval", lo=(float(a),), hi=(float(b),))

    @classmethod
    def box(cls, lo, hi) -> Domain:
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        if len(lo) != len(hi) or len(lo) not in (1, 2):
            raise GeometryError("box corners must both have dimension 1 or 2")
        if any(not h - l > 0 for l, h in zip(lo, hi)):
            raise GeometryError(f"box {lo} x {hi} has a non-positive extent")
        if len(lo) == 1:
            return cls("interval", lo=lo, hi=hi)
        return cls("box", lo=lo, hi=hi)

    @classmethod
    def ball(cls, center, radius: float) -> Domain:
        center = tuple(float(v) for v in np.atleast_1d(center))
        if len(center) not in (1, 2):
            raise GeometryError("ball centre must have dimension 1 or 2")
        if not radius > 0:
            raise GeometryError(f"ball radius {radius} must be positive")
        if len(center) == 1:
            return cls.interval(center[0] - radius, center[0] + radius)
        return cls("ball", center=center, radius=float(radius))

    @classmethod
    def annulus(cls, outer: Domain, center, radius: float = 1.0) -> Domain:
        """``outer`` minus the closed ball of ``radius`` about ``center``."""
        if outer.kind == "annulus":
            raise GeometryError("annulus outer region must be an interval, box or ball")
        center = tuple(float(v) for v in np.atleast_1d(center))
        if len(center) != outer.dim:
            raise GeometryError("excluded ball and outer region differ in dimension")
        if not radius > 0:
            raise GeometryError(f"excluded radius {radius} must be positive")
        depth = float(outer.distance(np.asarray(center)[None, :])[0])
        if not (outer.contains(np.asarray(center)[None, :])[0] and depth > radius + _GEOM_EPS):
            raise GeometryError(
                f"excluded ball B({center}, {radius}) is not strictly inside the outer region "
                f"(boundary distance {depth:.6g})"
            )
        return cls("annulus", center=center, radius=float(radius), outer=outer)

    @property
    def dim(self) -> int:
        if self.kind == "annulus":
            return self.outer.dim
        if self.kind == "ball":
            return len(self.center)
        return len(self.lo)

    @property
    def region(self) -> Domain:
        """The outer region (self unless this is an annulus)."""
        return self.outer if self.kind == "annulus" else self

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        r = self.region
        if r.kind == "ball":
            c = np.asarray(r.center)
            return c - r.radius, c + r.radius
        return np.asarray(r.lo), np.asarray(r.hi)

    def inradius(self) -> float:
        r = self.region
        if r.kind == "ball":
            return r.radius
        return float(np.min(np.asarray(r.hi) - np.asarray(r.lo)) / 2)

    def diameter(self) -> float:
        lo, hi = self.bounds()
        if self.region.kind == "ball":
            return 2 * self.region.radius
        return float(np.linalg.norm(hi - lo))

    def eps0(self) -> float:
        """Depth below which the barrier is in its singular regime."""
        return min(0.5, self.inradius() / 4)

    def distance(self, x: np.ndarray) -> np.ndarray:
        """Euclidean distance to the boundary of the outer region, for points inside it.

        The excluded ball of an annulus is not part of the boundary.
        """
        x = np.asarray(x, dtype=float)
        r = self.region
        if r.kind == "ball":
            return r.radius - np.linalg.norm(x - np.asarray(r.center), axis=-1)
        lo, hi = np.asarray(r.lo), np.asarray(r.hi)
        return np.min(np.minimum(x - lo, hi - x), axis=-1)

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Membership in the closed outer region."""
        return self.distance(x) >= -_GEOM_EPS

    def in_hole(self, x: np.ndarray) -> np.ndarray:
        if self.kind != "annulus":
            return np.zeros(np.shape(x)[:-1], dtype=bool)
        return np.linalg.norm(np.asarray(x) - np.asarray(self.center), axis=-1) <= self.radius + _GEOM_EPS

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("interval", "box"):
            out.update(lo=list(self.lo), hi=list(self.hi))
        elif self.kind == "ball":
            out.update(center=list(self.center), radius=self.radius)
        else:
            out.update(outer=self.outer.describe(), center=list(self.center), radius=self.radius)
        return out


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform lattice over the bounding box of a domain with per-node classification.

    ``kind`` holds OUTSIDE / INTERIOR / BOUNDARY / TARGET codes in lattice shape.
    Boundary nodes are members with at least one axis neighbour outside the closed
    domain (or lying on the boundary itself).
    """

    domain: Domain
    spacing: float
    axes: tuple[np.ndarray, ...]
    kind: np.ndarray
    coords: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.kind.shape

    @property
    def member(self) -> np.ndarray:
        return self.kind != OUTSIDE

    @property
    def n_nodes(self) -> int:
        return int(np.count_nonzero(self.member))

    def mask(self, *kinds: int) -> np.ndarray:
        return np.isin(self.kind, kinds)

    def nearest_index(self, point) -> tuple[int, ...]:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return tuple(int(np.argmin(np.abs(ax - p))) for ax, p in zip(self.axes, point))

    def with_target(self, center, radius: float = 1.0) -> Grid:
        """Same lattice with the closed ball ``B(center, radius)`` marked as target."""
        return build_grid(Domain.annulus(self.domain.region, center, radius), 1.0 / self.spacing)


def build_grid(domain: Domain, resolution: float) -> Grid:
    """Lattice with spacing ``1/resolution`` covering the closed domain."""
    if resolution < 8:
        raise GeometryError(f"resolution {resolution} below the minimum of 8 nodes per unit length")
    h = 1.0 / float(resolution)
    lo, hi = domain.bounds()
    axes = []
    for a, b in zip(lo, hi):
        n = int(np.floor((b - a) / h + 1e-9)) + 1
        axes.append(a + h * np.arange(n))
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack(mesh, axis=-1)
    dist = domain.distance(coords)
    member = dist >= -_GEOM_EPS * max(1.0, domain.diameter())

    padded = np.pad(member, 1, constant_values=False)
    all_nbrs = np.ones_like(member)
    for ax in range(len(axes)):
        sl_p = [slice(1, -1)] * len(axes)
        sl_m = [slice(1, -1)] * len(axes)
        sl_p[ax] = slice(2, None)
        sl_m[ax] = slice(None, -2)
        all_nbrs &= padded[tuple(sl_p)] & padded[tuple(sl_m)]
    on_edge = dist <= _GEOM_EPS * max(1.0, domain.diameter())

    kind = np.full(member.shape, OUTSIDE, dtype=np.int8)
    kind[member] = INTERIOR
    kind[member & (~all_nbrs | on_edge)] = BOUNDARY
    if domain.kind == "annulus":
        hole = domain.in_hole(coords) & member
        if not hole.any():
            raise GeometryError("excluded ball contains no grid nodes at this resolution")
        kind[hole] = TARGET
    return Grid(domain=domain, spacing=h, axes=tuple(axes), kind=kind, coords=coords)


@dataclass(eq=False)
class GridFunction:
    """Real values on the member nodes of a grid (lattice-shaped, zero off the domain)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        member = self.grid.member
        if not np.all(np.isfinite(self.values[member])):
            bad = np.argwhere(member & ~np.isfinite(self.values))[0]
            raise ValueError(f"non-finite value at node {tuple(bad)}")
        self.values[~member] = 0.0

    def __call__(self, point) -> float:
        return float(self.values[self.grid.nearest_index(point)])

    def copy(self) -> GridFunction:
        return GridFunction(self.grid, self.values.copy())

    def sup(self, mask=None) -> float:
        mask = self.grid.member if mask is None else mask
        return float(np.max(np.abs(self.values[mask])))

    def to_csv(self, path) -> Path:
        """Write ``i[,j], x[,y], value`` rows for member nodes at round-trip precision."""
        path = Path(path)
        g = self.grid
        idx_names = ["i", "j"][: g.dim]
        x_names = ["x", "y"][: g.dim]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(idx_names + x_names + ["value"])
            for idx in np.argwhere(g.member):
                idx = tuple(int(k) for k in idx)
                xs = [repr(float(g.axes[a][idx[a]])) for a in range(g.dim)]
                w.writerow(list(idx) + xs + [repr(float(self.values[idx]))])
        return path

    @classmethod
    def from_csv(cls, grid: Grid, path) -> GridFunction:
        values = np.zeros(grid.shape)
        with Path(path).open() as fh:
            r = csv.reader(fh)
            next(r)
            for row in r:
                idx = tuple(int(v) for v in row[: grid.dim])
                values[idx] = float(row[-1])
        return cls(grid, values)


def distance_to_boundary(grid: Grid) -> GridFunction:
    """Exact distance to the outer boundary at every member node (0 for nodes on it)."""
    d = np.where(grid.member, grid.domain.distance(grid.coords), 0.0)
    return GridFunction(grid, np.maximum(d, 0.0))


def zeta(d, m: float) -> np.ndarray:
    """Boundary barrier as a function of distance, with the distance capped at 1."""
    if not 1 < m <= 2:
        raise ValueError(f"barrier exponent m={m} outside (1, 2]; use the Hoelder estimates for m > 2")
    d = np.minimum(np.asarray(d, dtype=float), 1.0)
    if m == 2:
        return 1.0 - np.log(d)
    return d ** ((m - 2) / (m - 1))


def barrier_zeta(grid: Grid, m: float, floor: float | None = None) -> GridFunction:
    """Nodal barrier d^{(m-2)/(m-1)} (or 1 - log d for m = 2).

    Nodes lying on the boundary itself are evaluated at distance ``floor``
    (default half a grid spacing) so the field stays finite.
    """
    floor = 0.5 * grid.spacing if floor is None else floor
    d = np.maximum(distance_to_boundary(grid).values, floor)
    vals = np.where(grid.member, zeta(d, m), 0.0)
    return GridFunction(grid, vals)


def plateau_constant(domain: Domain, m: float) -> float:
    """Value of the barrier at depth eps0, an upper bound for it deeper inside."""
    return float(zeta(domain.eps0(), m))
