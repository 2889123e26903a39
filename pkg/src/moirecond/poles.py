"""Low-temperature pole expansion of the conductivity kernel.

Removing the 2k Fermi-Dirac poles nearest the real axis splits the kernel as

    F(E1, E2) = (sum_{z} (1/beta) / ((E1 - z)(E2 - z)) + R_k(E1, E2))
                / (E1 - E2 + omega + i eta)

with R_k analytic well beyond the removed poles, so the remainder series is
cheap while each pole term uses the resolvent-weighted basis T_k(E)/(E - z).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from . import cheb2d
from .cheb2d import IndexSet, lobatto_points, transform2d, truncation_set_greedy
from .confunc import ConductivityParams, DecayRates, decay_rates, f_temp
from .kpm import (LocalConductivityResult, OpCounters, cheb_apply_sequence,
                  local_conductivity_lowmem, weighted_local_conductivity)

__all__ = [
    "PoleSet",
    "PolePlan",
    "ResolventError",
    "pole_set",
    "remainder_eval",
    "optimal_k",
    "resolvent_apply",
    "group_poles",
    "group_stability_ratio",
    "build_pole_plan",
    "local_conductivity_via_poles",
    "pole_conductivity_tensor",
]

log = logging.getLogger(__name__)

#: group weights with max/min magnitude ratio beyond this are rejected
STABILITY_RATIO_MAX = 1e12
_RATIO_GRID = 1001
_DEFAULT_RESOLVENT_TOL = 1e-8


class ResolventError(RuntimeError):
    """Polynomial resolvent application failed to reach its residual target."""


@dataclass(frozen=True)
class PoleSet:
    """The 2k Fermi-Dirac poles nearest the real axis."""

    k: int
    poles: tuple

    def __len__(self) -> int:
        return len(self.poles)


def pole_set(k: int, params: ConductivityParams) -> PoleSet:
    """Poles E_F + i l pi / beta for odd l in [-2k+1, 2k-1]."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > 0 and params.beta == 0:
        raise ValueError("pole expansion requires beta > 0")
    ls = range(-2 * k + 1, 2 * k, 2)
    poles = tuple(params.e_fermi + 1j * l * math.pi / params.beta for l in ls) if k else ()
    return PoleSet(k, poles)


def remainder_eval(E1, E2, params: ConductivityParams, k: int):
    """Analytic remainder after subtracting the 2k nearest pole terms.

    R_k = f_temp(E1, E2) - sum_z (1/beta) / ((E1 - z)(E2 - z)); the diagonal
    uses the derivative limit inside f_temp.
    """
    E1 = np.asarray(E1)
    E2 = np.asarray(E2)
    out = np.asarray(f_temp(E1, E2, params), dtype=complex).copy()
    for z in pole_set(k, params).poles:
        out -= (1.0 / params.beta) / ((E1 - z) * (E2 - z))
    return complex(out) if out.ndim == 0 else out


def optimal_k(params: ConductivityParams) -> int:
    """Pole count minimizing the inner-product cost, unit proportionality constants."""
    beta, eta = params.beta, params.eta
    if beta * math.sqrt(eta) <= 0.5:
        return 0
    if beta <= eta ** -0.5:
        return 1
    if beta <= eta ** -1.5:
        return max(1, round(math.sqrt(beta) * eta ** 0.25))
    return max(1, round(beta ** (2.0 / 3.0) * math.sqrt(eta)))


def _inv_joukowsky(z: complex) -> complex:
    w = np.sqrt(complex(z) * complex(z) - 1.0)
    return z + w if abs(z + w) >= abs(z - w) else z - w


def _resolvent_coeffs(z: complex, tol: float, cap: int):
    """Closed-form Chebyshev coefficients of x -> 1/(x - z) on [-1, 1].

    Truncates when the coefficient tail falls below tol, clipped to cap.
    """
    u = _inv_joukowsky(z)
    du = u - 1.0 / u
    q = 1.0 / abs(u)
    # tail sum: 4 q^(m+1) / (|du| (1 - q)) <= tol
    need = 4.0 * q / (abs(du) * (1.0 - q))
    if need <= tol:
        m = 1
    else:
        m = int(math.ceil(math.log(need / tol) / (-math.log(q)))) + 1
    m = min(max(m, 1), cap)
    k = np.arange(m + 1)
    c = -4.0 * u ** (-k.astype(float)) / du
    c[0] = -2.0 / du
    return c


def _apply_cheb_poly(H, coeffs, v, counters: OpCounters | None):
    out = np.zeros_like(v)
    for k, tk in enumerate(cheb_apply_sequence(H, v, len(coeffs) - 1, counters)):
        out += coeffs[k] * tk
    return out


def resolvent_apply(H: sp.spmatrix, z: complex, v: np.ndarray, tol: float,
                    counters: OpCounters | None = None) -> np.ndarray:
    """Approximate (H - z)^-1 v by a Chebyshev polynomial of H.

    Requires Im(z) != 0 and spectrum(H) within [-1, 1]. The relative residual
    must come out <= 10 tol, otherwise ResolventError is raised (the degree is
    capped at 20 ceil(1 / |Im z|)).
    """
    if z.imag == 0:
        raise ValueError("resolvent shift must have nonzero imaginary part")
    cap = 20 * math.ceil(1.0 / abs(z.imag))
    coeffs = _resolvent_coeffs(z, tol, cap)
    x = _apply_cheb_poly(H, coeffs, v.astype(np.complex128), counters)
    if counters is not None:
        counters.resolvent_solves += 1
    resid = np.linalg.norm(H @ x - z * x - v) / np.linalg.norm(v)
    if resid > 10.0 * tol:
        raise ResolventError(
            f"resolvent residual {resid:.3e} > {10 * tol:.3e} at degree cap {cap}")
    return x


def _cheb_coeffs_1d(vals: np.ndarray) -> np.ndarray:
    """1D Chebyshev interpolation coefficients from Lobatto samples."""
    import scipy.fft

    n = len(vals) - 1
    c = scipy.fft.dct(vals, type=1) / n
    c[0] *= 0.5
    c[n] *= 0.5
    return c


def _weight_coeffs(poles, tol: float, cap: int):
    """Chebyshev coefficients of q(x) = prod (x - z)^-1 by adaptive sampling."""
    if len(poles) == 1:
        return _resolvent_coeffs(poles[0], tol, cap)

    def q(x):
        out = np.ones_like(x, dtype=complex)
        for z in poles:
            out = out / (x - z)
        return out

    m = 64
    while True:
        c = _cheb_coeffs_1d(q(lobatto_points(m)))
        tail = np.abs(c[-max(4, m // 16):]).sum()
        if tail <= tol * max(1.0, np.abs(c).max()) or m >= cap:
            break
        m *= 2
    nz = np.nonzero(np.abs(c) > tol * 1e-3 * max(1.0, np.abs(c).max()))[0]
    mkeep = min(int(nz[-1]) + 1 if nz.size else 1, cap)
    return c[: mkeep + 1]


def _weight_envelope(poles):
    """(max|q|, min|q|) of the group weight over [-1, 1] on a fine grid."""
    x = np.linspace(-1.0, 1.0, _RATIO_GRID)
    logq = np.zeros(_RATIO_GRID)
    for z in poles:
        logq -= np.log(np.abs(x - z))
    return float(np.exp(logq.max())), float(np.exp(logq.min()))


def group_stability_ratio(poles) -> float:
    """max|q| / min|q| of the group weight over [-1, 1] on a fine grid."""
    qmax, qmin = _weight_envelope(poles)
    return qmax / qmin


def group_poles(ps: PoleSet, max_group: int) -> list:
    """Split into conjugate-pair-preserving groups with bounded weight ratio.

    Groups are contiguous in |Im z| and each keeps the stability ratio
    max|q|/min|q| <= 1e12; violating pairs fall back to singletons.
    """
    if max_group < 1:
        raise ValueError("max_group must be >= 1")
    if max_group == 1 or ps.k == 0:
        return [[z] for z in ps.poles]
    # conjugate pairs ordered by distance from the real axis
    by_height = {}
    for z in ps.poles:
        by_height.setdefault(round(abs(z.imag), 15), []).append(z)
    pairs = [by_height[h] for h in sorted(by_height)]
    groups = []
    current: list = []
    for pair in pairs:
        candidate = current + pair
        if len(candidate) <= max_group and group_stability_ratio(candidate) <= STABILITY_RATIO_MAX:
            current = candidate
        else:
            if current:
                groups.append(current)
            if group_stability_ratio(pair) <= STABILITY_RATIO_MAX and len(pair) <= max_group:
                current = list(pair)
            else:
                groups.extend([[z] for z in pair])
                current = []
    if current:
        groups.append(current)
    return groups


@dataclass(frozen=True)
class PolePlan:
    """Everything needed to run the pole-expansion evaluation."""

    params: ConductivityParams
    pole_set: PoleSet
    groups: tuple
    remainder_rates: DecayRates
    series_eps: float
    resolvent_tol: float

    def validate(self):
        for g in self.groups:
            r = group_stability_ratio(g)
            if r > STABILITY_RATIO_MAX:
                raise ValueError(f"pole group stability ratio {r:.3e} exceeds 1e12")


def build_pole_plan(params: ConductivityParams, k: int | None = None,
                    group_size: int = 1, eps: float = 1e-3,
                    resolvent_tol: float = _DEFAULT_RESOLVENT_TOL) -> PolePlan:
    """Assemble a plan: pole set, grouping, remainder decay data, tolerances.

    The global series budget eps splits evenly between the remainder series
    and the shared pole-term coefficient set.
    """
    if k is None:
        k = optimal_k(params)
    ps = pole_set(k, params)
    groups = tuple(tuple(g) for g in group_poles(ps, group_size))
    rates = decay_rates(params, pole_multiplier=2 * k + 1)
    return PolePlan(params, ps, groups, rates, series_eps=eps / 2,
                    resolvent_tol=resolvent_tol)


def _kmax_for_rates(rates: DecayRates, eps: float, kmax_cap: int = cheb2d.DEFAULT_KMAX) -> int:
    """Grid degree comfortably past the last coefficient above eps * 1e-3."""
    ad = max(rates.alpha_diag, 1e-3)
    k = int(math.ceil(-math.log(min(eps, 1.0) * 1e-3) / (2.0 * ad))) + 8
    return int(min(max(k, 32), kmax_cap))


def remainder_coeffs(params: ConductivityParams, k: int, kmax: int) -> np.ndarray:
    """Chebyshev coefficients of R_k(E1, E2) / (E1 - E2 + omega + i eta)."""
    x = lobatto_points(kmax)
    E1, E2 = x[:, None], x[None, :]
    denom = E1 - E2 + params.omega + 1j * params.eta
    return transform2d(remainder_eval(E1, E2, params, k) / denom)


def _group_kernel_coeffs(params: ConductivityParams, group, kmax: int) -> np.ndarray:
    """Coefficients of the grouped pole term in the q-weighted basis.

    The group term sum_z (1/beta)/((E1-z)(E2-z)(E1-E2+s)) equals
    q(E1) q(E2) g(E1, E2) with g = sum_z prod_{z' != z} (E1-z')(E2-z')
    / (beta (E1-E2+s)), a function with relaxation-only singularities.
    """
    x = lobatto_points(kmax)
    E1, E2 = x[:, None], x[None, :]
    s = params.omega + 1j * params.eta
    acc = np.zeros((kmax + 1, kmax + 1), dtype=complex)
    for z in group:
        acc += 1.0 / ((E1 - z) * (E2 - z))
    prod1 = np.ones(kmax + 1, dtype=complex)
    for z in group:
        prod1 = prod1 * (x - z)
    g = acc * prod1[:, None] * prod1[None, :] / (params.beta * (E1 - E2 + s))
    return transform2d(g)


def local_conductivity_via_poles(H: sp.spmatrix, M_p: sp.spmatrix, M_pp: sp.spmatrix,
                                 params: ConductivityParams, plan: PolePlan, seed: int,
                                 counters: OpCounters | None = None,
                                 kmax: int | None = None) -> complex:
    """One tensor entry: remainder series plus resolvent-weighted pole terms."""
    plan.validate()
    counters = counters if counters is not None else OpCounters()
    k = plan.pole_set.k

    kmax_rem = kmax if kmax is not None else _kmax_for_rates(plan.remainder_rates, plan.series_eps)
    crem = remainder_coeffs(params, k, kmax_rem)
    Krem, _ = truncation_set_greedy(crem, plan.series_eps)
    total = local_conductivity_lowmem(H, M_p, M_pp, crem, Krem, seed, counters)

    if k == 0:
        return total

    relax_rates = decay_rates(replace(params, beta=0.0))
    kmax_z = kmax if kmax is not None else _kmax_for_rates(relax_rates, plan.series_eps)
    cz = cheb2d.coeffs_of_relaxation_factor(params, kmax_z)
    Kz, _ = truncation_set_greedy(cz, plan.series_eps)

    _warn_if_solves_dominate(plan, params, Kz)

    for group in sorted(plan.groups, key=lambda g: min(z.imag for z in g)):
        if len(group) == 1:
            # weighted basis T_k(E)/(E - z); coefficients are those of the
            # relaxation factor, scaled by the 1/beta residue weight
            term = weighted_local_conductivity(
                H, M_p, M_pp, cz, Kz, seed, group[0], plan.resolvent_tol,
                counters) / params.beta
        else:
            qmax, _ = _weight_envelope(group)
            log.info("pole group of %d, stability ratio %.3e",
                     len(group), group_stability_ratio(group))
            cap = 20 * math.ceil(1.0 / min(abs(z.imag) for z in group)) * len(group)
            wq = _weight_coeffs(tuple(group), plan.resolvent_tol, cap)

            def apply_group(zz, vec, _wq=wq):
                # conjugate-closed group: the bra-side weight equals q as well
                out = _apply_cheb_poly(H, _wq, vec.astype(np.complex128), counters)
                counters.resolvent_solves += 1
                return out

            cg = _group_kernel_coeffs(params, group, kmax_z)
            # the weighted basis carries sup norm ~ max|q| per side, so the
            # dropped mass must shrink accordingly to keep the error budget
            Kg, _ = truncation_set_greedy(cg, plan.series_eps / max(1.0, qmax**2))
            term = weighted_local_conductivity(
                H, M_p, M_pp, cg, Kg, seed, group[0], plan.resolvent_tol,
                counters, resolvent=apply_group)
        total += term
    return total


def _warn_if_solves_dominate(plan: PolePlan, params: ConductivityParams, Kz: IndexSet):
    # cost assumption behind the pole expansion: one solve cheaper than the
    # eta^(-3/2) inner products of the relaxation-constrained series
    degree_est = 20 * math.ceil(params.beta / math.pi)
    if degree_est > params.eta ** -1.5 and degree_est > len(Kz):
        log.warning(
            "resolvent degree ~%d exceeds the eta^-3/2 inner-product budget (%d); "
            "pole expansion may not pay off at these parameters",
            degree_est, int(params.eta ** -1.5))


def pole_conductivity_tensor(H, M1, M2, params: ConductivityParams, plan: PolePlan,
                             seed: int, kmax: int | None = None) -> LocalConductivityResult:
    counters = OpCounters()
    Ms = {1: M1, 2: M2}
    sigma = np.empty((2, 2), dtype=np.complex128)
    for p in (1, 2):
        for q in (1, 2):
            sigma[p - 1, q - 1] = local_conductivity_via_poles(
                H, Ms[p], Ms[q], params, plan, seed, counters, kmax=kmax)
    return LocalConductivityResult(sigma, counters, 0.0)
