"""Kubo conductivity of incommensurate twisted bilayers.

Linear-scaling local conductivities via adaptively truncated bivariate
Chebyshev series, a low-temperature pole expansion, and periodic trapezoidal
quadrature over configuration space, all verified against dense references.
"""

from .confunc import (ConductivityParams, DecayRates, ParamClass, F_zeta,
                      alpha_param, classify, decay_rates, f_temp, fermi)
from .geometry import (BilayerGeometry, BravaisLattice, ConfigShift, Disc,
                       Parallelogram, SiteList, enumerate_sites,
                       hexagonal_lattice, make_twisted_pair, square_lattice,
                       wrap_to_cell)
from .hamiltonian import (AffineEnergyMap, HamiltonianModel, SpectralWindow,
                          assemble, coupling, rescale, spectral_bounds, velocity)
from .cheb2d import (IndexSet, coeff_bound, coeffs_of_F, eval_series,
                     tau_for_eps, transform2d, truncation_set_greedy,
                     truncation_set_rate)
from .kpm import (LocalConductivityResult, OpCounters, cheb_apply_sequence,
                  conductivity_tensor, local_conductivity,
                  local_conductivity_lowmem, weighted_local_conductivity)
from .poles import (PolePlan, PoleSet, ResolventError, build_pole_plan,
                    group_poles, local_conductivity_via_poles, optimal_k,
                    pole_set, remainder_eval, resolvent_apply)
from .quadrature import ConductivityTensor, QuadGrid, conductivity_integral, trapezoid_grid
from . import oracle

__version__ = "0.1.0"
