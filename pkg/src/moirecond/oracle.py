"""Dense-diagonalization references and brute-force coefficient oracles.

Everything here favors transparency over speed and is used to validate the
linear-scaling paths; the conductivity kernel is evaluated with the same
stable branches as the fast code so that differences isolate truncation error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .confunc import ConductivityParams, F_zeta

__all__ = [
    "EigenDecomposition",
    "dense_eig",
    "local_conductivity_exact",
    "local_conductivity_exact_tensor",
    "global_conductivity_exact",
    "cheb_coeffs_bruteforce",
]

DEFAULT_SIZE_GUARD = 5000


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns; real array when the operator is real

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def dense_eig(A: sp.spmatrix, size_guard: int = DEFAULT_SIZE_GUARD) -> EigenDecomposition:
    """Full Hermitian eigendecomposition; exploits real-symmetric input."""
    n = A.shape[0]
    if n > size_guard:
        raise ValueError(f"dense path guard: n = {n} > {size_guard}")
    M = A.toarray() if sp.issparse(A) else np.asarray(A)
    if np.iscomplexobj(M) and np.abs(M.imag).max() == 0.0:
        M = M.real
    w, V = np.linalg.eigh(M)
    return EigenDecomposition(w, V)


def _real_aware_matmul(V: np.ndarray, C: np.ndarray) -> np.ndarray:
    # keep the big GEMM in real arithmetic when the eigenvectors are real
    if not np.iscomplexobj(V) and np.iscomplexobj(C):
        return V @ C.real + 1j * (V @ C.imag)
    return V @ C


def local_conductivity_exact(H: sp.spmatrix, M_p: sp.spmatrix, M_pp: sp.spmatrix,
                             params: ConductivityParams, seed: int,
                             eig: EigenDecomposition | None = None,
                             size_guard: int = DEFAULT_SIZE_GUARD) -> complex:
    """Seed-site local conductivity by the double eigensum."""
    if eig is None:
        eig = dense_eig(H, size_guard)
    w, V = eig.eigenvalues, eig.eigenvectors
    n = eig.n
    Fm = F_zeta(w[:, None], w[None, :], params)
    u = V[seed, :]
    e = np.zeros(n, dtype=np.complex128)
    e[seed] = 1.0
    b = V.conj().T @ (M_pp @ e)
    W = _real_aware_matmul(V, np.conj(u[:, None] * Fm))
    MpV = M_p @ V
    col = np.einsum("ij,ij->j", W.conj(), MpV)
    return complex(col @ b)


def local_conductivity_exact_tensor(H, M1, M2, params: ConductivityParams, seed: int,
                                    size_guard: int = DEFAULT_SIZE_GUARD) -> np.ndarray:
    """All four (p, p') entries sharing one decomposition and one kernel GEMM."""
    eig = dense_eig(H, size_guard)
    w, V = eig.eigenvalues, eig.eigenvectors
    n = eig.n
    Fm = F_zeta(w[:, None], w[None, :], params)
    u = V[seed, :]
    e = np.zeros(n, dtype=np.complex128)
    e[seed] = 1.0
    W = _real_aware_matmul(V, np.conj(u[:, None] * Fm))
    Ms = {1: M1, 2: M2}
    cols = {p: np.einsum("ij,ij->j", W.conj(), Ms[p] @ V) for p in (1, 2)}
    bs = {q: V.conj().T @ (Ms[q] @ e) for q in (1, 2)}
    out = np.empty((2, 2), dtype=np.complex128)
    for p in (1, 2):
        for q in (1, 2):
            out[p - 1, q - 1] = cols[p] @ bs[q]
    return out


def global_conductivity_exact(H: sp.spmatrix, M1, M2, params: ConductivityParams,
                              size_guard: int = DEFAULT_SIZE_GUARD) -> np.ndarray:
    """Whole-domain conductivity tensor (1/n) sum F(e_i, e_i') G_p[i,i'] G_p'[i',i]."""
    eig = dense_eig(H, size_guard)
    w, V = eig.eigenvalues, eig.eigenvectors
    n = eig.n
    Fm = F_zeta(w[:, None], w[None, :], params)
    Ms = {1: M1, 2: M2}
    G = {p: V.conj().T @ (Ms[p] @ V) for p in (1, 2)}
    out = np.empty((2, 2), dtype=np.complex128)
    for p in (1, 2):
        for q in (1, 2):
            out[p - 1, q - 1] = np.sum(Fm * G[p] * G[q].T) / n
    return out


def cheb_coeffs_bruteforce(f, k1: int, k2: int, n_quad: int) -> complex:
    """Single bivariate Chebyshev coefficient by Gauss-Chebyshev quadrature.

    Independent of the cosine-transform path; requires n_quad > 2 max(k1, k2).
    """
    if n_quad <= 2 * max(k1, k2):
        raise ValueError("n_quad must exceed 2 max(k1, k2)")
    theta = math.pi * (np.arange(n_quad) + 0.5) / n_quad
    x = np.cos(theta)
    vals = f(x[:, None], x[None, :])
    w1 = np.cos(k1 * theta)
    w2 = np.cos(k2 * theta)
    scale = (2 - (k1 == 0)) * (2 - (k2 == 0)) / n_quad**2
    return complex(scale * (w1 @ vals @ w2))
