"""Independent oracles used by the tests (kept separate from the library)."""

import math

import numpy as np
from scipy.integrate import quad


def disk_advance_quadrature(p):
    """Disk chord angular advance at momentum p, by radial quadrature.

    Polar reduction of H = phi(r)(p_r^2 + p_th^2/r^2) = 1 with p_th = p and
    turning radius r0^2 = p^2/(p^2 + 2); the sqrt singularity at r0 is removed
    by r = r0 + u^2.
    """
    r0 = math.sqrt(p * p / (p * p + 2.0))

    def integrand_u(u):
        r = r0 + u * u
        phi = 0.5 * (1 - r * r)
        pr2 = 1.0 / phi - p * p / (r * r)
        return (p / (r * r)) / math.sqrt(pr2) * 2 * u

    val, _ = quad(integrand_u, 0, math.sqrt(1 - r0), limit=400,
                  epsabs=1e-14, epsrel=1e-14)
    return 2 * val


def disk_distance_to_boundary(r):
    """G-distance from radius r to the unit circle: integral of sqrt(2/(1-u^2))."""
    return math.sqrt(2.0) * math.acos(r)


def disk_caustic_radius(eps):
    """Radius of the disk level set {rho = eps} (inverse of the above)."""
    return math.cos(eps / math.sqrt(2.0))


def brioschi_gauss_curvature(phi_expr, x, h=1e-4):
    """Gauss curvature of (dx^2 + dy^2)/phi by the Brioschi formula with
    finite differences of E = G = 1/phi, F = 0."""
    def E(x1, x2):
        return 1.0 / phi_expr.value((x1, x2))

    x1, x2 = x
    e0 = E(x1, x2)
    ex = (E(x1 + h, x2) - E(x1 - h, x2)) / (2 * h)
    ey = (E(x1, x2 + h) - E(x1, x2 - h)) / (2 * h)
    exx = (E(x1 + h, x2) - 2 * e0 + E(x1 - h, x2)) / h ** 2
    eyy = (E(x1, x2 + h) - 2 * e0 + E(x1, x2 - h)) / h ** 2
    # conformal metric E = G, F = 0: K = -(Delta log E) / (2 E)
    lap_log = (exx + eyy) / e0 - (ex ** 2 + ey ** 2) / e0 ** 2
    return -lap_log / (2 * e0)


def gauss_legendre_arclength(domain, m_panels=512, order=10):
    """Composite Gauss-Legendre g0-arclength of a closed boundary (oracle)."""
    comp = domain.boundary[0]
    lo, hi = comp.t_range
    nodes, weights = np.polynomial.legendre.leggauss(order)
    total = 0.0
    edges = np.linspace(lo, hi, m_panels + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        for xi, wi in zip(nodes, weights):
            t = mid + half * xi
            x = comp.point(t)
            v = comp.tangent(t)
            sp = math.sqrt(float(v @ v)) if domain.metric.is_euclidean else math.sqrt(
                float(v @ domain.metric.mat(x) @ v)
            )
            total += wi * half * sp / math.sqrt(domain.grad_norm_g_sq(x))
    return total
