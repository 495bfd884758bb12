"""Built-in example domains.

The four presets cover the reference situations used throughout the test
suite: a rotation-invariant disk, the exactly solvable flat half-cylinder,
a separable square (Liouville-integrable, corners excluded), and a concave
quartic perturbation of the disk.
"""

from __future__ import annotations

import math

import numpy as np

from .fields import parse_expression
from .geometry import (
    CircleBoundary,
    Domain,
    LineBoundary,
    MetricField,
    QuarticBoundary,
    SegmentBoundary,
)

__all__ = ["PRESETS", "make_preset", "preset_names"]


def _box(*bounds):
    return np.array(bounds, dtype=float)


def make_disk():
    """Unit disk, phi = (1 - |x|^2)/2, Euclidean g.  SO(2)-invariant."""
    phi = parse_expression("0.5*(1 - x1^2 - x2^2)", 2)
    return Domain(
        n=2,
        metric=MetricField.euclidean(2),
        phi=phi,
        boundary=[CircleBoundary((0.0, 0.0), 1.0)],
        collar_eps=0.025,  # 0.05 * max phi
        name="disk",
        interior_point=(0.0, 0.0),
        box=_box((-1.05, 1.05), (-1.05, 1.05)),
        so_invariant=True,
        collar_nq=96,
        collar_nr=17,
    )


def make_flat_cylinder():
    """Half cylinder with G = (ds^2 + dq^2)/s: phi = x2, x1 periodic mod 2 pi.

    The collar chart is the identity and the billiard map has the closed form
    of the constant-coefficient model; there is no outer boundary, so shots
    with zero tangential momentum escape upward.
    """
    phi = parse_expression("x2", 2)
    return Domain(
        n=2,
        metric=MetricField.euclidean(2),
        phi=phi,
        boundary=[LineBoundary(0.0, 2.0 * math.pi)],
        collar_eps=0.05,  # phi is unbounded; fixed width
        name="flat_cylinder",
        interior_point=(0.0, 1.0),
        box=_box((-np.inf, np.inf), (-0.01, 8.0)),
        collar_nq=32,
        collar_nr=13,
    )


_SQ_PHI = (
    "(0.5*(1 - x1^2)) * (0.5*(1 - x2^2)) / (0.5*(1 - x1^2) + 0.5*(1 - x2^2))"
)


def make_separable_square():
    """Separable square: phi = (1/phi1 + 1/phi2)^(-1), phi_i = (1 - x_i^2)/2.

    The boundary has corners, so the collar consists of four per-edge patches
    trimmed away from them; billiard-map level operations are per edge only.
    """
    phi = parse_expression(_SQ_PHI, 2)
    span = 0.9  # edges kept clear of the corner singularities
    edges = [
        SegmentBoundary((1.0, -span), (1.0, span)),
        SegmentBoundary((-span, 1.0), (span, 1.0)),
        SegmentBoundary((-1.0, -span), (-1.0, span)),
        SegmentBoundary((-span, -1.0), (span, -1.0)),
    ]
    return Domain(
        n=2,
        metric=MetricField.euclidean(2),
        phi=phi,
        boundary=edges,
        collar_eps=0.0125,  # 0.05 * phi(0,0)
        name="separable_square",
        interior_point=(0.0, 0.0),
        box=_box((-1.02, 1.02), (-1.02, 1.02)),
        separable_phis=[
            parse_expression("0.5*(1 - x1^2)", 2),
            parse_expression("0.5*(1 - x2^2)", 2),
        ],
        collar_nq=48,
        collar_nr=15,
        collar_q_margin=0.08,
    )


def make_concave_quartic():
    """Concave quartic domain: phi = (1 - x1^2 - x2^2 - 0.1 x1^4)/2.

    The Hessian of phi is negative definite everywhere, so the billiard map
    is a globally defined twist map.
    """
    phi = parse_expression("0.5*(1 - x1^2 - x2^2 - 0.1*x1^4)", 2)
    return Domain(
        n=2,
        metric=MetricField.euclidean(2),
        phi=phi,
        boundary=[QuarticBoundary(0.1)],
        collar_eps=0.025,
        name="concave_quartic",
        interior_point=(0.0, 0.0),
        box=_box((-1.05, 1.05), (-1.05, 1.05)),
        collar_nq=192,
        collar_nr=19,
    )


PRESETS = {
    "disk": make_disk,
    "flat_cylinder": make_flat_cylinder,
    "separable_square": make_separable_square,
    "concave_quartic": make_concave_quartic,
}


def preset_names():
    return sorted(PRESETS)


def make_preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset '{name}'; expected one of {preset_names()}") from None
