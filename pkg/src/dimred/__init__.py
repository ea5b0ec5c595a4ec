"""Numerical checks of dimension reduction for thin domains and two-level models.

Modules
-------
numkernel
    Sturm bisection, Lanczos, operator norms, banded LU solves.
certificates
    Gate coefficients and certified resolvent bounds.
toymodel
    Finite-dimensional instances of the abstract reduction.
geometry
    Curvature profiles and tubular weights.
born_oppenheimer
    Two-level fiber model in the semiclassical limit.
dirichlet_layer, robin_shell, ns_robin_layer
    Thin-layer models with Dirichlet, real Robin and complex Robin data.
cli
    Batch sweeps with CSV and plot output.
"""

__version__ = "0.1.0"
