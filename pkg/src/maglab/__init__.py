"""Magnetic geodesic laboratory on the genus-2 octagon surface.

Marked magnetic action spectra, tensor X-ray transforms along closed
magnetic geodesics, the coupled potential/divergence operators, and the
numerical rigidity experiments built on them.
"""

from .domain import FundamentalDomain, QuadratureResult, domain_quadrature
from .dynamics import (IntegratorSettings, MagneticSystem, PhasePoint,
                       SolverSettings, constant_b_system, crit_b_margin,
                       crit_dp, deck_normalize, dp_k, flow, lorentz_force,
                       magnetic_sectional)
from .errors import (ConstructionError, InputError, MaglabError,
                     NumericalError, RefinementError, ResourceError,
                     StagnationError)
from .fields import (ConformalMetric, OneFormField, ScalarField,
                     SymTensorField, averaged_bump, christoffel, exact_one_form,
                     exterior_derivative, gaussian_curvature, inner_product,
                     lower_index, raise_index)
from .orbits import (ClosedOrbit, DiscreteLoop, Spectrum, discrete_action,
                     initial_loop, marked_spectrum, minimize_action,
                     refine_orbits, solve_class)
from .surface import (FuchsianGroup, MobiusTransform, Word, canonical_class,
                      cyclic_reduce, enumerate_group, hyperbolic_distance,
                      mobius_apply, shortest_words, standard_group,
                      translation_length)
from .xray import (PotentialPair, TensorPair, c1_norm_oneform, c1_norm_scalar,
                   d_mu, d_mu_star, flow_identity_check, solenoidal_defect,
                   xray_I1, xray_I2)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
