"""Linear-scaling local conductivity via truncated bivariate Chebyshev series.

Both evaluation orders compute, for a kept index set K,

    sigma = sum_{(k1,k2) in K} c_{k1 k2} <v_{k1} | w_{k2}>,
    v_{k1} = M_p T_{k1}(H) |e>,   w_{k2} = T_{k2}(H) M_p' |e>,

with |e> the unit vector at the seed site. Accumulation runs ascending in
(k2, k1) so results are bit-stable for a fixed build.

Counter conventions: ``matvecs`` counts applications of H inside Chebyshev
recurrences (velocity and resolvent-seed products are not counted),
``inner_products`` counts the |K| scalar products, ``peak_cached_vectors``
tracks the largest number of simultaneously held state vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cheb2d import IndexSet

__all__ = [
    "OpCounters",
    "LocalConductivityResult",
    "cheb_apply_sequence",
    "local_conductivity",
    "local_conductivity_lowmem",
    "weighted_local_conductivity",
    "conductivity_tensor",
    "seed_vector",
]


@dataclass
class OpCounters:
    matvecs: int = 0
    inner_products: int = 0
    resolvent_solves: int = 0
    peak_cached_vectors: int = 0
    _cached: int = 0

    def hold(self, k: int = 1):
        self._cached += k
        if self._cached > self.peak_cached_vectors:
            self.peak_cached_vectors = self._cached

    def release(self, k: int = 1):
        self._cached -= k

    def merge(self, other: "OpCounters"):
        self.matvecs += other.matvecs
        self.inner_products += other.inner_products
        self.resolvent_solves += other.resolvent_solves
        self.peak_cached_vectors = max(self.peak_cached_vectors, other.peak_cached_vectors)

    def as_dict(self) -> dict:
        return {
            "matvecs": self.matvecs,
            "inner_products": self.inner_products,
            "resolvent_solves": self.resolvent_solves,
            "peak_cached_vectors": self.peak_cached_vectors,
        }


@dataclass(frozen=True)
class LocalConductivityResult:
    """2x2 local conductivity tensor plus run accounting."""

    sigma: np.ndarray
    counters: OpCounters
    truncation_mass_dropped: float = 0.0


def seed_vector(n: int, seed: int) -> np.ndarray:
    if not 0 <= seed < n:
        raise ValueError(f"seed index {seed} out of range for dimension {n}")
    e = np.zeros(n, dtype=np.complex128)
    e[seed] = 1.0
    return e


def cheb_apply_sequence(H: sp.spmatrix, v0: np.ndarray, kmax: int,
                        counters: OpCounters | None = None):
    """Yield T_k(H) v0 for k = 0..kmax via the three-term recurrence.

    Exactly k matvecs have been consumed after k+1 yields.
    """
    if H.shape[1] != v0.shape[0]:
        raise ValueError("dimension mismatch between operator and vector")
    prev = v0
    yield prev
    if kmax == 0:
        return
    cur = H @ v0
    if counters is not None:
        counters.matvecs += 1
    yield cur
    for _ in range(2, kmax + 1):
        nxt = 2.0 * (H @ cur) - prev
        if counters is not None:
            counters.matvecs += 1
        prev, cur = cur, nxt
        yield cur


def _gather_side_vectors(H, seed_vec, needed, post_op, counters):
    """Cache post_op(T_k(H) seed_vec) for every k in ``needed``."""
    needed = set(int(k) for k in needed)
    kmax = max(needed)
    out = {}
    counters.hold(2)  # live recurrence pair
    for k, tk in enumerate(cheb_apply_sequence(H, seed_vec, kmax, counters)):
        if k in needed:
            out[k] = post_op(tk) if post_op is not None else tk.copy()
            counters.hold()
    counters.release(2)
    return out


def _accumulate(coeffs, K: IndexSet, v_cache, w_cache, counters) -> complex:
    total = 0.0 + 0.0j
    for k1, k2 in K.pairs:  # ascending (k2, k1)
        total += coeffs[k1, k2] * np.vdot(v_cache[k1], w_cache[k2])
    counters.inner_products += len(K)
    return total


def local_conductivity(H: sp.spmatrix, M_p: sp.spmatrix, M_pp: sp.spmatrix,
                       coeffs: np.ndarray, K: IndexSet, seed: int,
                       counters: OpCounters | None = None) -> complex:
    """One tensor entry by the direct two-sided algorithm (all vectors cached)."""
    if len(K) == 0:
        raise ValueError("empty truncation set")
    counters = counters if counters is not None else OpCounters()
    e = seed_vector(H.shape[0], seed)
    v_cache = _gather_side_vectors(H, e, K.k1_values, lambda t: M_p @ t, counters)
    w_cache = _gather_side_vectors(H, M_pp @ e, K.k2_values, None, counters)
    total = _accumulate(coeffs, K, v_cache, w_cache, counters)
    counters.release(len(v_cache) + len(w_cache))
    return total


def local_conductivity_lowmem(H: sp.spmatrix, M_p: sp.spmatrix, M_pp: sp.spmatrix,
                              coeffs: np.ndarray, K: IndexSet, seed: int,
                              counters: OpCounters | None = None) -> complex:
    """Same value as :func:`local_conductivity`, streaming both recurrences.

    w vectors stream in ascending k2 as in the memory-optimised algorithm;
    v vectors are produced on the fly and discarded once no remaining k2
    needs them, which keeps the cache at the band width of wedge-shaped K.
    """
    if len(K) == 0:
        raise ValueError("empty truncation set")
    counters = counters if counters is not None else OpCounters()
    e = seed_vector(H.shape[0], seed)

    last_use = {}  # k1 -> largest k2 that pairs with it
    for k1, k2 in K.pairs:
        last_use[int(k1)] = max(last_use.get(int(k1), -1), int(k2))
    v_top = int(K.pairs[:, 0].max())

    v_cache = {}
    v_iter = cheb_apply_sequence(H, e, v_top, counters)
    v_next = 0
    v_live = True
    counters.hold(2)  # v recurrence pair

    def advance_v(upto):
        nonlocal v_next, v_live
        while v_next <= upto:
            tk = next(v_iter)
            if v_next in last_use:
                v_cache[v_next] = M_p @ tk
                counters.hold()
            v_next += 1
        if v_live and v_next > v_top:
            counters.release(2)
            v_live = False

    total = 0.0 + 0.0j
    k2_list = [int(k) for k in K.k2_values]
    w_iter = cheb_apply_sequence(H, M_pp @ e, k2_list[-1], counters)
    w_started = False
    k2_cur = -1
    w_cur = None
    for k2 in k2_list:
        k1s = K.k1_for_k2(k2)
        advance_v(int(k1s.max()))
        if not w_started:
            counters.hold(3)  # w recurrence pair plus the vector being formed
            w_started = True
        while k2_cur < k2:
            w_cur = next(w_iter)
            k2_cur += 1
        for k1 in k1s:
            total += coeffs[k1, k2] * np.vdot(v_cache[k1], w_cur)
        counters.inner_products += len(k1s)
        # drop v vectors no later k2 will pair with
        for k1 in [k for k, last in last_use.items() if last == k2]:
            del v_cache[k1]
            del last_use[k1]
            counters.release()
    counters.release(3)
    if v_live:
        counters.release(2)
    return total


def weighted_local_conductivity(H: sp.spmatrix, M_p: sp.spmatrix, M_pp: sp.spmatrix,
                                coeffs: np.ndarray, K: IndexSet, seed: int,
                                z: complex, resolvent_tol: float,
                                counters: OpCounters | None = None,
                                resolvent=None) -> complex:
    """Series evaluation with resolvent-weighted basis T_k(E)/(E - z) per side.

    Exactly evaluates sum c_{k1 k2} <e| (H-z)^-1 T_{k1}(H) M_p (H-z)^-1
    T_{k2}(H) M_p' |e>: the bra chain is seeded with (H - conj(z))^-1 |e>
    (so the bra reads <e|(H-z)^-1) and the ket chain with (H-z)^-1 M_p' |e>.
    One resolvent application per side.
    """
    from .poles import resolvent_apply

    if len(K) == 0:
        raise ValueError("empty truncation set")
    counters = counters if counters is not None else OpCounters()
    apply_res = resolvent if resolvent is not None else (
        lambda zz, vec: resolvent_apply(H, zz, vec, resolvent_tol, counters))
    e = seed_vector(H.shape[0], seed)
    u = apply_res(np.conj(z), e)
    v_cache = _gather_side_vectors(H, u, K.k1_values, lambda t: M_p @ t, counters)
    wseed = apply_res(z, M_pp @ e)
    w_cache = _gather_side_vectors(H, wseed, K.k2_values, None, counters)
    total = _accumulate(coeffs, K, v_cache, w_cache, counters)
    counters.release(len(v_cache) + len(w_cache))
    return total


def conductivity_tensor(H: sp.spmatrix, M1: sp.spmatrix, M2: sp.spmatrix,
                        coeffs: np.ndarray, K: IndexSet, seed: int,
                        lowmem: bool = True,
                        truncation_mass_dropped: float = 0.0) -> LocalConductivityResult:
    """All four (p, p') entries with aggregated counters."""
    counters = OpCounters()
    entry = local_conductivity_lowmem if lowmem else local_conductivity
    Ms = {1: M1, 2: M2}
    sigma = np.empty((2, 2), dtype=np.complex128)
    for p in (1, 2):
        for q in (1, 2):
            sigma[p - 1, q - 1] = entry(H, Ms[p], Ms[q], coeffs, K, seed, counters)
    return LocalConductivityResult(sigma, counters, truncation_mass_dropped)
