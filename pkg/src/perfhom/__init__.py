"""Numerical laboratory for the Poisson equation on perforated 2-D domains.

Subpackages cover the perforation geometry, the embedded-boundary grid
discretization, sparse solvers, cell-problem correctors, the two-scale
convergence studies, and Poincare-constant measurements.
"""

__version__ = "0.1.0"
