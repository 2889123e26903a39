"""Conductivity kernel F and its Chebyshev decay analysis.

The kernel

    F(E1, E2) = (f(E1 - E_F) - f(E2 - E_F)) / ((E1 - E2) (E1 - E2 + omega + i eta))

is analytic off two singular families: the line E1 - E2 + omega + i eta = 0
(relaxation) and the Fermi poles E_F + i pi k / beta, k odd (temperature).
Its bivariate Chebyshev coefficients obey

    |c_{k1 k2}| <~ exp(-alpha_diag (k1 + k2) - alpha_anti |k1 - k2|)

where the rates come from the largest pair of Bernstein ellipses avoiding the
singularities. This module evaluates F stably and computes those rates from
the ellipse geometry, including the signed ellipse parameter across the
deformed branch cut that arises when the first ellipse, shifted by
omega + i eta, penetrates below the real axis.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConductivityParams",
    "ParamClass",
    "DecayRates",
    "fermi",
    "f_temp",
    "F_zeta",
    "alpha_param",
    "alpha_relax",
    "alpha_pole",
    "alpha_max",
    "alpha_min_xstar",
    "classify",
    "decay_rates",
]

#: spacing below which the difference quotient switches to the derivative limit
_DIAG_SWITCH = 1e-6
#: relative tolerance used to resolve ties in the classification inequalities
_CLASS_TOL = 1e-9
#: boundary discretization for the x* search
_XSTAR_SAMPLES = 2048
_XSTAR_THETA_TOL = 1e-10


@dataclass(frozen=True)
class ConductivityParams:
    """Physical parameters (inverse temperature, inverse relaxation time,
    frequency, Fermi level), all in rescaled spectral units."""

    beta: float
    eta: float
    omega: float = 0.0
    e_fermi: float = 0.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")


class ParamClass(enum.Enum):
    RELAXATION = "relaxation"
    MIXED = "mixed"
    TEMPERATURE = "temperature"


@dataclass(frozen=True)
class DecayRates:
    """Chebyshev decay data of the kernel for one parameter point."""

    alpha_diag: float
    alpha_anti: float
    alpha_max: float
    alpha_min: float
    klass: ParamClass
    x_star: complex
    lam: float  # min(eta, 1/beta), the analyticity width driving r-convergence


def fermi(E, params: ConductivityParams):
    """Fermi-Dirac occupation 1/(1 + exp(beta (E - E_F))), overflow-safe."""
    x = np.asarray(E, dtype=float)
    out = 0.5 * (1.0 - np.tanh(0.5 * params.beta * (x - params.e_fermi)))
    return float(out) if out.ndim == 0 else out


def _fermi_c(E, params: ConductivityParams):
    # tanh form continues analytically; poles sit at E_F + i pi k/beta, k odd
    return 0.5 * (1.0 - np.tanh(0.5 * params.beta * (np.asarray(E) - params.e_fermi)))


def f_temp(E1, E2, params: ConductivityParams):
    """Divided difference of the Fermi-Dirac factor.

    Returns (f(E1) - f(E2)) / (E1 - E2), switching to the derivative
    -beta/4 sech^2(beta (E - E_F)/2) at the midpoint when |E1 - E2| < 1e-6.
    """
    E1 = np.asarray(E1)
    E2 = np.asarray(E2)
    dE = E1 - E2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        quot = (_fermi_c(E1, params) - _fermi_c(E2, params)) / dE
        mid = 0.5 * (E1 + E2)
        ch = np.cosh(0.5 * params.beta * (mid - params.e_fermi))
        lim = -0.25 * params.beta / (ch * ch)
    out = np.where(np.abs(dE) < _DIAG_SWITCH, lim, quot)
    return complex(out) if out.ndim == 0 else out


def F_zeta(E1, E2, params: ConductivityParams):
    """The conductivity kernel F(E1, E2)."""
    denom = np.asarray(E1) - np.asarray(E2) + params.omega + 1j * params.eta
    out = f_temp(E1, E2, params) / denom
    return complex(out) if np.ndim(out) == 0 else out


def alpha_param(x):
    """Bernstein ellipse parameter log|x + sqrt(x^2 - 1)| (branch with modulus >= 1).

    Non-negative everywhere, zero exactly on [-1, 1].
    """
    x = np.asarray(x, dtype=complex)
    w = np.sqrt(x * x - 1.0)
    mod = np.maximum(np.abs(x + w), np.abs(x - w))
    out = np.maximum(np.log(mod), 0.0)
    return float(out) if out.ndim == 0 else out


def alpha_relax(params: ConductivityParams) -> float:
    """Ellipse parameter limited by the endpoint of the shifted interval."""
    return float(alpha_param(1.0 - abs(params.omega) + 1j * params.eta))


def alpha_pole(params: ConductivityParams, pole_multiplier: int = 1) -> float:
    """Ellipse parameter limited by the Fermi pole E_F + i m pi / beta."""
    if params.beta == 0:
        return math.inf
    return float(alpha_param(params.e_fermi + 1j * pole_multiplier * math.pi / params.beta))


def alpha_max(params: ConductivityParams, pole_multiplier: int = 1) -> float:
    """Parameter of the largest first ellipse: min of the two constraints."""
    return min(alpha_relax(params), alpha_pole(params, pole_multiplier))


def _signed_alpha(x: complex) -> float:
    # Sign flip across the deformed branch cut: points of the shifted-ellipse
    # boundary below the real axis lie in the penetration region, where the
    # analytic continuation from above carries -alpha.
    a = float(alpha_param(x))
    return -a if x.imag < 0.0 else a


def alpha_min_xstar(params: ConductivityParams, pole_multiplier: int = 1):
    """Second ellipse parameter and its minimizer x*.

    Scans the boundary of E(alpha_max) shifted by omega + i eta, evaluating
    the signed ellipse parameter (negative inside the penetration region),
    refines the argmin by golden section in the boundary angle, and takes the
    minimum with the Fermi-pole constraint.
    """
    am = alpha_max(params, pole_multiplier)
    s = params.omega + 1j * params.eta
    ch, sh = math.cosh(am), math.sinh(am)

    def point(theta):
        return complex(ch * math.cos(theta) + s.real, sh * math.sin(theta) + s.imag)

    thetas = np.linspace(0.0, 2.0 * math.pi, _XSTAR_SAMPLES, endpoint=False)
    vals = np.array([_signed_alpha(point(t)) for t in thetas])
    j = int(np.argmin(vals))
    lo = thetas[j] - 2.0 * math.pi / _XSTAR_SAMPLES
    hi = thetas[j] + 2.0 * math.pi / _XSTAR_SAMPLES

    # golden-section refinement of the 1D argmin
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = _signed_alpha(point(c)), _signed_alpha(point(d))
    while b - a > _XSTAR_THETA_TOL:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _signed_alpha(point(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _signed_alpha(point(d))
    theta_star = 0.5 * (a + b)
    x_star = point(theta_star)
    geo_min = _signed_alpha(x_star)
    return min(geo_min, alpha_pole(params, pole_multiplier)), x_star


def classify(params: ConductivityParams, pole_multiplier: int = 1) -> ParamClass:
    """Classify which singularity family limits the ellipse pair.

    Ties (within 1e-9 relative) resolve in the order relaxation, temperature.
    """
    return decay_rates(params, pole_multiplier).klass


def decay_rates(params: ConductivityParams, pole_multiplier: int = 1) -> DecayRates:
    """Full decay data; ``pole_multiplier`` m replaces the first Fermi pole
    height pi/beta by m pi/beta (used for pole-expansion remainders whose
    nearest surviving pole is the (2k+1)-th)."""
    if pole_multiplier < 1 or pole_multiplier % 2 == 0:
        raise ValueError("pole_multiplier must be an odd integer >= 1")
    ar = alpha_relax(params)
    ap = alpha_pole(params, pole_multiplier)
    am = min(ar, ap)
    amin, x_star = alpha_min_xstar(params, pole_multiplier)
    geo = _signed_alpha(x_star)
    tol = _CLASS_TOL * max(1.0, abs(ar), 0.0 if math.isinf(ap) else abs(ap))
    if ar <= ap + tol:
        klass = ParamClass.RELAXATION
    elif ap <= geo + tol:
        klass = ParamClass.TEMPERATURE
    else:
        klass = ParamClass.MIXED
    lam = params.eta if params.beta == 0 else min(params.eta, 1.0 / params.beta)
    return DecayRates(
        alpha_diag=0.5 * (am + amin),
        alpha_anti=0.5 * (am - amin),
        alpha_max=am,
        alpha_min=amin,
        klass=klass,
        x_star=x_star,
        lam=lam,
    )
