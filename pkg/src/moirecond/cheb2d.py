"""Bivariate Chebyshev coefficients, truncation index sets, series evaluation.

Coefficient grids are plain complex (kmax+1) x (kmax+1) arrays with c[k1, k2]
multiplying T_{k1}(E1) T_{k2}(E2). Sampling happens on the tensor
Chebyshev-Lobatto grid x_j = cos(pi j / kmax), descending from 1 to -1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .confunc import ConductivityParams, DecayRates, F_zeta

__all__ = [
    "IndexSet",
    "lobatto_points",
    "transform2d",
    "sample_to_coeffs",
    "coeffs_of_F",
    "coeffs_of_relaxation_factor",
    "truncation_set_rate",
    "truncation_set_greedy",
    "tau_for_eps",
    "eval_series",
    "coeff_bound",
    "DEFAULT_KMAX",
]

#: default coefficient grid degree
DEFAULT_KMAX = 500


@dataclass(frozen=True, eq=False)
class IndexSet:
    """Finite set of kept (k1, k2) indices, ordered ascending by (k2, k1).

    The (k2, k1) ordering is the deterministic accumulation order used by the
    evaluation algorithms.
    """

    pairs: np.ndarray

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((pairs[:, 0], pairs[:, 1]))
        pairs = pairs[order]
        pairs.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "_members", {(int(a), int(b)) for a, b in pairs})

    def __len__(self) -> int:
        return self.pairs.shape[0]

    def __contains__(self, pair) -> bool:
        return (int(pair[0]), int(pair[1])) in self._members

    @property
    def k1_values(self) -> np.ndarray:
        """Sorted distinct k1 appearing in the set."""
        return np.unique(self.pairs[:, 0])

    @property
    def k2_values(self) -> np.ndarray:
        return np.unique(self.pairs[:, 1])

    def k1_for_k2(self, k2: int) -> np.ndarray:
        sel = self.pairs[self.pairs[:, 1] == k2, 0]
        return np.sort(sel)

    def max_degree_sum(self) -> int:
        return int((self.pairs[:, 0] + self.pairs[:, 1]).max())

    def mask(self, shape) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        m[self.pairs[:, 0], self.pairs[:, 1]] = True
        return m


def lobatto_points(n: int) -> np.ndarray:
    """Chebyshev-Lobatto points cos(pi j / n), j = 0..n (descending)."""
    return np.cos(np.pi * np.arange(n + 1) / n)


def transform2d(samples: np.ndarray) -> np.ndarray:
    """Coefficients of the bivariate Chebyshev interpolant of Lobatto samples.

    Exact (to roundoff) for polynomials of degree <= n per variable. Uses the
    type-I cosine transform along each axis with the usual halving of the
    first and last rows and columns.
    """
    samples = np.asarray(samples)
    if samples.ndim != 2 or samples.shape[0] != samples.shape[1] or samples.shape[0] < 2:
        raise ValueError("samples must be a square (n+1) x (n+1) grid with n >= 1")
    if not np.all(np.isfinite(samples)):
        raise ValueError("samples contain non-finite values")
    n = samples.shape[0] - 1
    c = scipy.fft.dct(scipy.fft.dct(samples, type=1, axis=0), type=1, axis=1)
    c /= n * n
    c[0, :] *= 0.5
    c[n, :] *= 0.5
    c[:, 0] *= 0.5
    c[:, n] *= 0.5
    return c


def sample_to_coeffs(f, kmax: int) -> np.ndarray:
    """Sample a bivariate callable on the Lobatto grid and transform."""
    x = lobatto_points(kmax)
    return transform2d(f(x[:, None], x[None, :]))


def coeffs_of_F(params: ConductivityParams, kmax: int = DEFAULT_KMAX) -> np.ndarray:
    """Chebyshev coefficients of the conductivity kernel on a kmax grid."""
    return sample_to_coeffs(lambda E1, E2: F_zeta(E1, E2, params), kmax)


def coeffs_of_relaxation_factor(params: ConductivityParams, kmax: int) -> np.ndarray:
    """Coefficients of the factor 1/(E1 - E2 + omega + i eta)."""
    s = params.omega + 1j * params.eta
    return sample_to_coeffs(lambda E1, E2: 1.0 / (E1 - E2 + s), kmax)


def coeff_bound(rates: DecayRates, k1, k2):
    """Predicted normalized coefficient bound exp(-a_diag (k1+k2) - a_anti |k1-k2|)."""
    k1 = np.asarray(k1)
    k2 = np.asarray(k2)
    out = np.exp(-rates.alpha_diag * (k1 + k2) - rates.alpha_anti * np.abs(k1 - k2))
    return float(out) if out.ndim == 0 else out


def truncation_set_rate(rates: DecayRates, tau: float) -> IndexSet:
    """Indices whose predicted bound is >= tau."""
    if tau <= 0:
        raise ValueError("tau must be in (0, 1)")
    if tau >= 1:
        return IndexSet(np.array([[0, 0]]))
    if rates.alpha_diag <= 0:
        raise ValueError("truncation by rate requires alpha_diag > 0")
    L = -math.log(tau)
    ad, aa = rates.alpha_diag, rates.alpha_anti
    kcap = int(math.floor(L / (2.0 * ad)))
    pairs = []
    for k1 in range(kcap + 1):
        # upper-triangle branch k2 >= k1: ad (k1 + k2) + aa (k2 - k1) <= L
        hi = int(math.floor((L - (ad - aa) * k1) / (ad + aa)))
        if hi >= k1:
            k2s = np.arange(k1, hi + 1)
            pairs.append(np.stack([np.full_like(k2s, k1), k2s], axis=1))
    up = np.vstack(pairs)
    down = up[up[:, 0] != up[:, 1]][:, ::-1]
    return IndexSet(np.vstack([up, down]))


def truncation_set_greedy(coeffs: np.ndarray, eps: float):
    """Drop smallest-magnitude coefficients while the dropped mass stays <= eps.

    Ties in magnitude break by ascending (k1 + k2, k1). Returns the kept
    IndexSet and the total dropped mass.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    a = np.abs(coeffs)
    kmax = coeffs.shape[0] - 1
    k1, k2 = np.meshgrid(np.arange(kmax + 1), np.arange(kmax + 1), indexing="ij")
    order = np.lexsort((k1.ravel(), (k1 + k2).ravel(), a.ravel()))
    sorted_abs = a.ravel()[order]
    csum = np.cumsum(sorted_abs)
    ndrop = int(np.searchsorted(csum, eps, side="right"))
    kept_flat = order[ndrop:]
    dropped_mass = float(csum[ndrop - 1]) if ndrop > 0 else 0.0
    pairs = np.stack([k1.ravel()[kept_flat], k2.ravel()[kept_flat]], axis=1)
    return IndexSet(pairs), dropped_mass


def tau_for_eps(rates: DecayRates, eps: float) -> float:
    """Truncation level tau achieving a target series error eps.

    Solves tau |log tau| ~ a_diag a_anti eps via the first-order inverse
    tau = a / |log a|. When alpha_anti is zero (temperature-constrained),
    alpha_diag substitutes for it to keep the level finite.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    aa = rates.alpha_anti if rates.alpha_anti > 0 else rates.alpha_diag
    a = rates.alpha_diag * aa * eps
    if a >= 1 / math.e:
        return min(a, 0.5)
    return a / abs(math.log(a))


def eval_series(coeffs: np.ndarray, K: IndexSet, E1, E2):
    """Evaluate the truncated series sum_{K} c_{k1 k2} T_{k1}(E1) T_{k2}(E2).

    Clenshaw recurrences per axis via numpy's chebval2d on the masked grid.
    """
    km1 = int(K.pairs[:, 0].max()) if len(K) else 0
    km2 = int(K.pairs[:, 1].max()) if len(K) else 0
    c = np.zeros((km1 + 1, km2 + 1), dtype=coeffs.dtype)
    c[K.pairs[:, 0], K.pairs[:, 1]] = coeffs[K.pairs[:, 0], K.pairs[:, 1]]
    return np.polynomial.chebyshev.chebval2d(E1, E2, c)
