"""Twisted-bilayer lattice geometry: Bravais lattices, finite cut-outs, shifts.

Conventions: lengths are in units of the nearest-neighbor distance (= 1),
positions are 3D with layer 1 at z = 0 and layer 2 at z = interlayer_gap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BravaisLattice",
    "BilayerGeometry",
    "Disc",
    "Parallelogram",
    "ConfigShift",
    "SiteList",
    "hexagonal_lattice",
    "square_lattice",
    "rotation_matrix",
    "make_twisted_pair",
    "enumerate_sites",
    "wrap_to_cell",
]

_SINGULAR_TOL = 1e-12
# fractional coordinates this close to 1 are snapped to 0 so that wrapping
# stays idempotent under roundoff
_WRAP_SNAP = 1e-10


@dataclass(frozen=True, eq=False)
class BravaisLattice:
    """2D Bravais lattice spanned by the columns of ``basis``."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.shape != (2, 2):
            raise ValueError(f"basis must be 2x2, got {basis.shape}")
        if abs(np.linalg.det(basis)) <= _SINGULAR_TOL:
            raise ValueError("basis is singular")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def cell_area(self) -> float:
        return abs(np.linalg.det(self.basis))


def hexagonal_lattice() -> BravaisLattice:
    """Triangular Bravais lattice with nearest-neighbor distance 1."""
    return BravaisLattice(np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]]))


def square_lattice() -> BravaisLattice:
    return BravaisLattice(np.eye(2))


def rotation_matrix(degrees: float) -> np.ndarray:
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class BilayerGeometry:
    """Two stacked Bravais lattices with a relative twist and an out-of-plane gap."""

    lattice1: BravaisLattice
    lattice2: BravaisLattice
    twist_degrees: float
    interlayer_gap: float

    def __post_init__(self):
        if self.interlayer_gap < 0:
            raise ValueError("interlayer_gap must be >= 0")

    def lattice(self, layer: int) -> BravaisLattice:
        if layer == 1:
            return self.lattice1
        if layer == 2:
            return self.lattice2
        raise ValueError(f"layer must be 1 or 2, got {layer}")


def make_twisted_pair(base: BravaisLattice, twist_degrees: float,
                      gap: float) -> BilayerGeometry:
    """Build a bilayer whose second lattice is the first rotated about the origin."""
    rotated = BravaisLattice(rotation_matrix(twist_degrees) @ base.basis)
    return BilayerGeometry(base, rotated, twist_degrees, gap)


@dataclass(frozen=True)
class Disc:
    """Circular cut-out keeping in-plane |x| <= radius."""

    radius: float

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("cut-out radius must be >= 1")


@dataclass(frozen=True)
class Parallelogram:
    """Parallelogrammatic cut-out keeping integer coordinates m in {-r, ..., r}^2."""

    halfwidth: int

    def __post_init__(self):
        if self.halfwidth < 1:
            raise ValueError("cut-out halfwidth must be >= 1")


@dataclass(frozen=True, eq=False)
class ConfigShift:
    """Relative in-plane shift of the non-focal layer (a configuration).

    ``b`` lives in the unit cell of the lattice opposite the focal layer.
    """

    b: np.ndarray
    focal_layer: int = 1

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).reshape(2)
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        if self.focal_layer not in (1, 2):
            raise ValueError("focal_layer must be 1 or 2")

    @property
    def other_layer(self) -> int:
        return 2 if self.focal_layer == 1 else 1


@dataclass(frozen=True, eq=False)
class SiteList:
    """Finite site set of a shifted bilayer configuration.

    positions is (n, 3); layer holds 1 or 2 per site; seed_index points at the
    focal-layer site sitting exactly at the in-plane origin.
    """

    positions: np.ndarray
    layer: np.ndarray
    seed_index: int

    def __post_init__(self):
        self.positions.setflags(write=False)
        self.layer.setflags(write=False)

    def __len__(self) -> int:
        return self.positions.shape[0]


def _index_range(lat: BravaisLattice, radius: float) -> int:
    # safe integer bound so that |A m| <= radius implies |m|_inf <= bound
    smin = np.linalg.svd(lat.basis, compute_uv=False)[-1]
    return int(math.ceil(radius / smin)) + 1


def _layer_points(lat: BravaisLattice, cut, shift2: np.ndarray):
    """Integer grid positions of one layer, shifted in-plane by shift2."""
    if isinstance(cut, Parallelogram):
        r = cut.halfwidth
        m = np.arange(-r, r + 1)
        m1, m2 = np.meshgrid(m, m, indexing="ij")
        ms = np.stack([m1.ravel(), m2.ravel()], axis=1)
        pts = ms @ lat.basis.T + shift2
        return pts, ms
    if isinstance(cut, Disc):
        r = _index_range(lat, cut.radius + np.linalg.norm(shift2))
        m = np.arange(-r, r + 1)
        m1, m2 = np.meshgrid(m, m, indexing="ij")
        ms = np.stack([m1.ravel(), m2.ravel()], axis=1)
        pts = ms @ lat.basis.T + shift2
        keep = np.linalg.norm(pts, axis=1) <= cut.radius
        return pts[keep], ms[keep]
    raise TypeError(f"unknown cut-out {cut!r}")


def enumerate_sites(geom: BilayerGeometry, cut, shift: ConfigShift) -> SiteList:
    """Enumerate the sites of the cut-out for a shifted configuration.

    The focal layer keeps a site exactly at the in-plane origin; the other
    layer is translated in-plane by ``shift.b``.
    """
    zero = np.zeros(2)
    z_of = {1: 0.0, 2: geom.interlayer_gap}

    positions = []
    layers = []
    seed_index = -1
    for layer in (1, 2):
        off = zero if layer == shift.focal_layer else shift.b
        pts, ms = _layer_points(geom.lattice(layer), cut, off)
        if layer == shift.focal_layer:
            at_origin = np.nonzero((ms[:, 0] == 0) & (ms[:, 1] == 0))[0]
            if at_origin.size != 1:
                raise RuntimeError("focal layer lost its origin site")
            seed_index = sum(len(p) for p in positions) + int(at_origin[0])
        pts3 = np.column_stack([pts, np.full(len(pts), z_of[layer])])
        positions.append(pts3)
        layers.append(np.full(len(pts), layer, dtype=np.int8))

    pos = np.vstack(positions)
    lay = np.concatenate(layers)
    return SiteList(pos, lay, seed_index)


def wrap_to_cell(point: np.ndarray, lat: BravaisLattice) -> np.ndarray:
    """Translate ``point`` by a lattice vector into the half-open cell {A b : b in [0,1)^2}."""
    frac = np.linalg.solve(lat.basis, np.asarray(point, dtype=float))
    frac = np.mod(frac, 1.0)
    frac = np.where(1.0 - frac < _WRAP_SNAP, 0.0, frac)
    return lat.basis @ frac
