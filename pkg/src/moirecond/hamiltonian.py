"""Sparse tight-binding Hamiltonian assembly, spectral rescaling, velocity operators.

Operators are scipy.sparse CSR matrices with complex128 values; the CSR
arrays (indptr, indices, data) carry the compressed-row contract directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .geometry import SiteList

__all__ = [
    "HamiltonianModel",
    "SpectralWindow",
    "AffineEnergyMap",
    "coupling",
    "assemble",
    "spectral_bounds",
    "rescale",
    "velocity",
    "is_hermitian",
    "save_matrix_market",
]

#: safety margin added to Gershgorin bounds so the window never degenerates
_WINDOW_PAD = 1e-12


@dataclass(frozen=True)
class HamiltonianModel:
    """Radial coupling model: h(d) = exp(-d^2/(r_cut^2 - d^2)) for d < r_cut, else 0.

    The default r_cut = sqrt(3) is the second-nearest-neighbor distance for
    lattices with nearest-neighbor distance 1.
    """

    r_cut: float = math.sqrt(3.0)

    def __post_init__(self):
        if self.r_cut <= 0:
            raise ValueError("r_cut must be > 0")


def coupling(d, r_cut: float = math.sqrt(3.0)):
    """Evaluate the compactly supported C-infinity coupling at distance(s) d."""
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    inside = d < r_cut
    di = d[inside]
    out[inside] = np.exp(-di * di / (r_cut * r_cut - di * di))
    if out.ndim == 0:
        return float(out)
    return out


def assemble(sites: SiteList, model: HamiltonianModel = HamiltonianModel()) -> sp.csr_matrix:
    """Assemble the Hermitian coupling matrix over a site list.

    Neighbor pairs are found with a k-d tree; the diagonal carries
    coupling(0) = 1. Entries exactly at the cutoff vanish and are dropped.
    """
    n = len(sites)
    if n == 0:
        raise ValueError("empty site list")
    tree = cKDTree(sites.positions)
    pairs = tree.query_pairs(model.r_cut, output_type="ndarray")
    if pairs.size:
        d = np.linalg.norm(sites.positions[pairs[:, 0]] - sites.positions[pairs[:, 1]], axis=1)
        vals = coupling(d, model.r_cut)
        nz = vals != 0.0
        pairs, vals = pairs[nz], np.atleast_1d(vals)[nz]
        rows = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(n)])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(n)])
        data = np.concatenate([vals, vals, np.ones(n)])
    else:
        rows = cols = np.arange(n)
        data = np.ones(n)
    H = sp.coo_matrix((data.astype(np.complex128), (rows, cols)), shape=(n, n))
    return H.tocsr()


@dataclass(frozen=True)
class SpectralWindow:
    """Guaranteed enclosure [e_min, e_max] of the spectrum of an operator."""

    e_min: float
    e_max: float

    def __post_init__(self):
        if not self.e_min < self.e_max:
            raise ValueError("spectral window requires e_min < e_max")

    def union(self, other: "SpectralWindow") -> "SpectralWindow":
        return SpectralWindow(min(self.e_min, other.e_min), max(self.e_max, other.e_max))


@dataclass(frozen=True)
class AffineEnergyMap:
    """Pinned affine map E_unit = scale * (E_raw - shift) between raw and rescaled energies."""

    scale: float
    shift: float

    def to_unit(self, e_raw):
        return self.scale * (np.asarray(e_raw) - self.shift)

    def to_raw(self, e_unit):
        return np.asarray(e_unit) / self.scale + self.shift


def spectral_bounds(A: sp.spmatrix) -> SpectralWindow:
    """Gershgorin enclosure of the spectrum of a Hermitian sparse matrix."""
    A = A.tocsr()
    diag = A.diagonal().real
    absrow = np.asarray(np.abs(A).sum(axis=1)).ravel()
    offdiag = absrow - np.abs(diag)
    return SpectralWindow(float(np.min(diag - offdiag)) - _WINDOW_PAD,
                          float(np.max(diag + offdiag)) + _WINDOW_PAD)


def rescale(A: sp.spmatrix, window: SpectralWindow):
    """Shift and scale A so its spectrum lands in [-1, 1].

    Returns (H, amap) where H = amap.scale * (A - amap.shift * I).
    """
    if not window.e_max > window.e_min:
        raise ValueError("degenerate spectral window")
    scale = 2.0 / (window.e_max - window.e_min)
    shift = 0.5 * (window.e_max + window.e_min)
    n = A.shape[0]
    H = (A - shift * sp.identity(n, dtype=A.dtype, format="csr")) * scale
    return H.tocsr(), AffineEnergyMap(scale, shift)


def velocity(A: sp.spmatrix, sites: SiteList, p: int) -> sp.csr_matrix:
    """Velocity operator along in-plane direction p in {1, 2}.

    M_p[i, j] = 1j * (pos_j - pos_i)_p * A[i, j]; equals the commutator
    1j * (A X_p - X_p A) with X_p the diagonal of p-coordinates.
    """
    if p not in (1, 2):
        raise ValueError("direction p must be 1 or 2")
    if A.shape[0] != len(sites):
        raise ValueError(f"operator dimension {A.shape[0]} != number of sites {len(sites)}")
    C = A.tocoo()
    x = sites.positions[:, p - 1]
    data = 1j * (x[C.col] - x[C.row]) * C.data
    return sp.coo_matrix((data, (C.row, C.col)), shape=A.shape).tocsr()


def is_hermitian(A: sp.spmatrix, tol: float = 1e-14) -> bool:
    d = A - A.conj().T
    return d.nnz == 0 or np.max(np.abs(d.data)) <= tol


def save_matrix_market(A: sp.spmatrix, path) -> None:
    """Debug export in Matrix Market coordinate format."""
    from scipy.io import mmwrite

    mmwrite(path, A.tocoo())
