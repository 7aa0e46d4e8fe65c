"""Stochastic analysis on finite Poisson spaces.

Simulation of Poisson random measures on atomized spaces, pathwise multiple
integrals and Malliavin operators, an exact moment oracle for small
instances, Stein-method distances and the fourth-moment bound checks built
on top of them.
"""

from .chaos import ChaosError, ChaosFunctional, Estimate, TruncationError, estimate_moments, extract_kernel
from .kernels import KernelError, SymKernel, inner, norm, symmetrize, sym_tensor_product, tensor_product
from .oracle import CountPolynomial, InstanceTooLarge, exact_moment, to_polynomial
from .space import DiscreteSpace, PointConfig, SpaceError, mecke_check, sample_poisson
from .stein import Target, d2_lower_bound, ks_distance, stein_g, stein_g_prime, w1_distance

__version__ = "0.1.0"

__all__ = [
    "ChaosError",
    "ChaosFunctional",
    "CountPolynomial",
    "DiscreteSpace",
    "Estimate",
    "InstanceTooLarge",
    "KernelError",
    "PointConfig",
    "SpaceError",
    "SymKernel",
    "Target",
    "TruncationError",
    "d2_lower_bound",
    "estimate_moments",
    "exact_moment",
    "extract_kernel",
    "inner",
    "ks_distance",
    "mecke_check",
    "norm",
    "sample_poisson",
    "stein_g",
    "stein_g_prime",
    "sym_tensor_product",
    "symmetrize",
    "tensor_product",
    "to_polynomial",
    "w1_distance",
]
