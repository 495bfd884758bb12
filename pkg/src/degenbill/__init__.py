"""Numerical laboratory for billiard-like geodesic flows of metrics g/phi.

The metric G = g/phi degenerates on the boundary {phi = 0}; its geodesic
flow, regularized through a Levi-Civita collar chart, induces a billiard map
on the boundary cotangent bundle.  This package integrates the regularized
flow, computes the billiard map and its normal-form approximations, and
checks invariant circles, caustics, and conserved quantities.
"""

__version__ = "0.1.0"
