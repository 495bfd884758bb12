"""Domain geometry: metric fields, boundaries, boundary arclength, curvature.

A :class:`Domain` bundles the ambient metric g = <A(x)dx, dx>, the barrier
function phi (positive inside, zero on the boundary), and a parametrized
boundary.  The degenerate metric of interest is G = g/phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from .fields import FieldExpr, parse_expression

__all__ = [
    "GeometryError",
    "MetricField",
    "Domain",
    "CircleBoundary",
    "QuarticBoundary",
    "SegmentBoundary",
    "LineBoundary",
    "StarBoundary",
    "ArclengthTable",
    "BoundaryMetric",
    "boundary_metric",
    "arclength_table",
    "gauss_curvature",
    "sectional_curvature",
]


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Metric fields.

@dataclass
class MetricField:
    """Riemannian metric g = <A(x)dx, dx> with entries given by field expressions.

    kind: 'euclidean' (A = I), 'diagonal', or 'general'.  Entries must define a
    symmetric positive definite matrix wherever queried.
    """

    kind: str
    n: int
    entries: Optional[list] = None  # diagonal: [FieldExpr]*n; general: n x n nested list

    @classmethod
    def euclidean(cls, n):
        return cls("euclidean", n)

    @classmethod
    def diagonal(cls, exprs: Sequence[FieldExpr]):
        return cls("diagonal", len(exprs), list(exprs))

    @classmethod
    def general(cls, exprs):
        n = len(exprs)
        return cls("general", n, [list(row) for row in exprs])

    @property
    def is_euclidean(self):
        return self.kind == "euclidean"

    def mat(self, x):
        if self.kind == "euclidean":
            return np.eye(self.n)
        if self.kind == "diagonal":
            return np.diag([e.value(x) for e in self.entries])
        return np.array([[e.value(x) for e in row] for row in self.entries])

    def inv(self, x):
        if self.kind == "euclidean":
            return np.eye(self.n)
        if self.kind == "diagonal":
            return np.diag([1.0 / e.value(x) for e in self.entries])
        return np.linalg.inv(self.mat(x))

    def dmat(self, x):
        """d[k] = dA/dx_k as an (n, n, n) array."""
        n = self.n
        d = np.zeros((n, n, n))
        if self.kind == "euclidean":
            return d
        if self.kind == "diagonal":
            for i, e in enumerate(self.entries):
                _, g = e.value_grad(x)
                for k in range(n):
                    d[k, i, i] = g[k]
            return d
        for i in range(n):
            for j in range(n):
                _, g = self.entries[i][j].value_grad(x)
                for k in range(n):
                    d[k, i, j] = g[k]
        return d

    def check_spd(self, x, tol=0.0):
        a = self.mat(x)
        if not np.allclose(a, a.T, atol=1e-12):
            raise GeometryError(f"metric not symmetric at {x}")
        w = np.linalg.eigvalsh(a)
        if w.min() <= tol:
            raise GeometryError(f"metric not positive definite at {x}: min eigenvalue {w.min()}")
        return w.min()


# ---------------------------------------------------------------------------
# Boundary components (n = 2).  Each provides point(theta), tangent(theta),
# a parameter range, and whether the parametrization closes up periodically.

@dataclass
class CircleBoundary:
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    periodic: bool = True
    t_range: tuple = (0.0, 2.0 * math.pi)

    def point(self, t):
        c, s = np.cos(t), np.sin(t)
        return np.array([self.center[0] + self.radius * c, self.center[1] + self.radius * s])

    def tangent(self, t):
        c, s = np.cos(t), np.sin(t)
        return np.array([-self.radius * s, self.radius * c])


@dataclass
class QuarticBoundary:
    """Level curve x1^2 + x2^2 + coeff*x1^4 = 1, parametrized by polar angle."""

    coeff: float = 0.1
    periodic: bool = True
    t_range: tuple = (0.0, 2.0 * math.pi)

    def _rho2(self, t):
        c = self.coeff * np.cos(t) ** 4
        # root of c*u^2 + u - 1 = 0, written without cancellation for small c
        return 2.0 / (1.0 + np.sqrt(1.0 + 4.0 * c))

    def point(self, t):
        rho = np.sqrt(self._rho2(t))
        return np.array([rho * np.cos(t), rho * np.sin(t)])

    def tangent(self, t):
        rho = math.sqrt(self._rho2(t))
        ct, st = math.cos(t), math.sin(t)
        # implicit differentiation of rho^2 + coeff*rho^4*cos^4 t = 1
        num = 4.0 * self.coeff * rho ** 4 * ct ** 3 * st
        den = 2.0 * rho + 4.0 * self.coeff * rho ** 3 * ct ** 4
        drho = num / den
        return np.array([drho * ct - rho * st, drho * st + rho * ct])


@dataclass
class SegmentBoundary:
    """Straight boundary piece from a to b (open edge, not periodic)."""

    a: tuple
    b: tuple
    periodic: bool = False

    @property
    def t_range(self):
        return (0.0, 1.0)

    def point(self, t):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        return a + np.multiply.outer(np.asarray(t, dtype=float), b - a) if np.ndim(t) else a + t * (b - a)

    def tangent(self, t):
        return np.asarray(self.b, dtype=float) - np.asarray(self.a, dtype=float)


@dataclass
class LineBoundary:
    """Horizontal boundary line x2 = height, periodic in x1 with given period."""

    height: float = 0.0
    period: float = 2.0 * math.pi
    periodic: bool = True

    @property
    def t_range(self):
        return (0.0, self.period)

    def point(self, t):
        return np.array([float(t), self.height])

    def tangent(self, t):
        return np.array([1.0, 0.0])


@dataclass
class StarBoundary:
    """Boundary of a star-shaped {phi = 0} level set, found along rays from a center."""

    phi: FieldExpr
    center: tuple = (0.0, 0.0)
    rho_max: float = 10.0
    periodic: bool = True
    t_range: tuple = (0.0, 2.0 * math.pi)

    def _rho(self, t):
        from scipy.optimize import brentq

        c = np.asarray(self.center, dtype=float)
        d = np.array([math.cos(t), math.sin(t)])

        def f(rho):
            return self.phi.value(c + rho * d)

        lo = 1e-9
        hi = self.rho_max
        # expand/shrink until a sign change brackets the boundary
        if f(lo) <= 0:
            raise GeometryError(f"center {self.center} is not interior along direction {t}")
        step = 0.25
        rho = step
        while rho < hi and f(rho) > 0:
            rho += step
        if rho >= hi:
            raise GeometryError(f"no boundary found along direction {t} within rho_max")
        return brentq(f, rho - step, min(rho, hi), xtol=1e-14, rtol=8.8e-16)

    def point(self, t):
        rho = self._rho(t)
        return np.asarray(self.center, dtype=float) + rho * np.array([math.cos(t), math.sin(t)])

    def tangent(self, t):
        x = self.point(t)
        c = np.asarray(self.center, dtype=float)
        d = x - c
        rho = np.linalg.norm(d)
        d /= rho
        dperp = np.array([-d[1], d[0]])
        _, g = self.phi.value_grad(x)
        g = np.asarray(g)
        # rho'(t) from phi(c + rho e(t)) = 0
        drho = -rho * float(g @ dperp) / float(g @ d)
        return drho * d + rho * dperp


# ---------------------------------------------------------------------------
# Domain.

@dataclass
class Domain:
    """Domain Omega = {phi > 0} with metric g and parametrized boundary.

    Immutable after construction (the collar chart is cached lazily; safe for
    concurrent reads once built).
    """

    n: int
    metric: MetricField
    phi: FieldExpr
    boundary: list
    collar_eps: float
    name: str = "custom"
    interior_point: tuple = (0.0, 0.0)
    box: Optional[np.ndarray] = None  # (n, 2) bounds; None entries -> +-inf
    so_invariant: bool = False
    separable_phis: Optional[list] = None  # [FieldExpr] per coordinate
    collar_nq: int = 128
    collar_nr: int = 17
    collar_q_margin: float = 0.0  # trimmed length at each end of open components
    tol: float = 1e-10
    max_time: float = 1000.0
    _collar: object = field(default=None, repr=False, compare=False)
    _tables: object = field(default=None, repr=False, compare=False)

    # -- phi evaluation ------------------------------------------------------
    def phi_value(self, x):
        return self.phi.value(x)

    def phi_value_grad(self, x):
        v, g = self.phi.value_grad(x)
        return v, np.asarray(g)

    def phi_jet(self, x):
        from .fields import evaluate_jet

        return evaluate_jet(self.phi, x)

    def grad_norm_g_sq(self, x):
        """||grad_g phi||_g^2 = <phi_x, A^{-1} phi_x>."""
        _, g = self.phi.value_grad(x)
        g = np.asarray(g)
        if self.metric.is_euclidean:
            return float(g @ g)
        return float(g @ self.metric.inv(x) @ g)

    # -- cached geometry -----------------------------------------------------
    def tables(self):
        """Arclength tables, one per boundary component."""
        if self._tables is None:
            self._tables = [ArclengthTable.build(self, i) for i in range(len(self.boundary))]
        return self._tables

    def collar(self):
        if self._collar is None:
            from .collar import build_collar

            self._collar = build_collar(self, self.collar_eps)
        return self._collar

    def in_box(self, x):
        if self.box is None:
            return True
        lo, hi = self.box[:, 0], self.box[:, 1]
        return bool(np.all(x >= lo) and np.all(x <= hi))

    # -- validation ----------------------------------------------------------
    def validate(self, n_boundary=64, grad_floor=1e-6):
        """Check the standing assumptions on sampled points; raise on failure."""
        x0 = np.asarray(self.interior_point, dtype=float)
        if self.phi_value(x0) <= 0:
            raise GeometryError(f"interior point {x0} has phi <= 0")
        self.metric.check_spd(x0)
        for ci, comp in enumerate(self.boundary):
            lo, hi = comp.t_range
            ts = np.linspace(lo, hi, n_boundary, endpoint=not comp.periodic)
            if not comp.periodic:
                ts = ts[1:-1]  # stay off open endpoints
            for t in ts:
                x = comp.point(t)
                v = self.phi_value(x)
                if abs(v) > 1e-10:
                    raise GeometryError(f"boundary component {ci}: phi({x}) = {v:.3e} not 0")
                if self.grad_norm_g_sq(x) < grad_floor ** 2:
                    raise GeometryError(f"boundary component {ci}: degenerate grad phi at {x}")
        return True


# ---------------------------------------------------------------------------
# Boundary arclength in the metric g0 = g|_Gamma / ||grad phi||_g^2.

def _g0_speed(domain, comp, t):
    """d(arclength)/dt of the boundary in g0 at parameter t."""
    x = comp.point(t)
    v = comp.tangent(t)
    if domain.metric.is_euclidean:
        sp = math.sqrt(float(v @ v))
    else:
        sp = math.sqrt(float(v @ domain.metric.mat(x) @ v))
    return sp / math.sqrt(domain.grad_norm_g_sq(x))


@dataclass
class ArclengthTable:
    """Monotone map between a boundary parameter and g0-arclength q.

    Periodic components use a Fourier antiderivative of the speed, open ones a
    Chebyshev antiderivative; both are spectrally accurate for smooth data.
    """

    component: int
    periodic: bool
    t_lo: float
    t_hi: float
    L: float
    _mean: float
    _coef: np.ndarray  # Fourier coefficients of speed (periodic) or Chebyshev coeffs of cumulative (open)
    m_samples: int = 0

    M_PERIODIC = 1024
    M_OPEN = 257

    @classmethod
    def build(cls, domain, component, m=None):
        comp = domain.boundary[component]
        lo, hi = comp.t_range
        if comp.periodic:
            m = int(m or cls.M_PERIODIC)
            ts = lo + (hi - lo) * np.arange(m) / m
            sp = np.array([_g0_speed(domain, comp, t) for t in ts])
            coef = np.fft.rfft(sp) / m
            L = coef[0].real * (hi - lo)
            return cls(component, True, lo, hi, L, coef[0].real, coef, m)
        m = int(m or cls.M_OPEN)
        k = np.arange(m)
        xhat = -np.cos(np.pi * k / (m - 1))  # ascending in [-1, 1]
        ts = lo + (hi - lo) * (xhat + 1.0) / 2.0
        sp = np.array([_g0_speed(domain, comp, t) for t in ts])
        c_speed = _cheb.chebfit(xhat, sp, m - 1)
        c_cum = _cheb.chebint(c_speed, lbnd=-1.0) * (hi - lo) / 2.0
        L = float(_cheb.chebval(1.0, c_cum))
        return cls(component, False, lo, hi, L, 0.0, c_cum, m)

    # -- forward map ---------------------------------------------------------
    def _weights(self):
        m = len(self._coef)
        w = np.full(m, 2.0)
        w[0] = 1.0
        if self.m_samples % 2 == 0:
            w[-1] = 1.0
        return w

    def q_of_theta(self, t):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.periodic:
            span = self.t_hi - self.t_lo
            w = 2.0 * np.pi * (t - self.t_lo) / span
            mi = np.arange(1, len(self._coef))
            c = self._coef[1:] * self._weights()[1:]
            ph = np.exp(1j * np.outer(w, mi))
            # antiderivative of Re(c e^{i m w}) dt, dt = span/(2 pi) dw
            osc = (ph - 1.0) / (1j * mi) @ c
            q = self._mean * (t - self.t_lo) + (span / (2.0 * np.pi)) * osc.real
        else:
            xhat = 2.0 * (t - self.t_lo) / (self.t_hi - self.t_lo) - 1.0
            q = _cheb.chebval(xhat, self._coef)
        return float(q[0]) if scalar else q

    def speed_of_theta(self, t):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.periodic:
            span = self.t_hi - self.t_lo
            w = 2.0 * np.pi * (t - self.t_lo) / span
            mi = np.arange(len(self._coef))
            c = self._coef * self._weights()
            s = (np.exp(1j * np.outer(w, mi)) @ c).real
        else:
            xhat = 2.0 * (t - self.t_lo) / (self.t_hi - self.t_lo) - 1.0
            dc = _cheb.chebder(self._coef) * 2.0 / (self.t_hi - self.t_lo)
            s = _cheb.chebval(xhat, dc)
        return float(s[0]) if scalar else s

    # -- inverse map ---------------------------------------------------------
    def theta_of_q(self, q):
        scalar = np.ndim(q) == 0
        qs = np.atleast_1d(np.asarray(q, dtype=float))
        out = np.empty_like(qs)
        for i, qi in enumerate(qs):
            if self.periodic:
                wraps, qi = divmod(qi, self.L)
            else:
                wraps = 0.0
                if not -1e-9 <= qi <= self.L + 1e-9:
                    raise GeometryError(f"arclength {qi} outside [0, {self.L}]")
            t = self.t_lo + (self.t_hi - self.t_lo) * qi / self.L
            for _ in range(60):
                f = self.q_of_theta(t) - qi
                if abs(f) < 1e-13 * max(1.0, self.L):
                    break
                t -= f / self.speed_of_theta(t)
            out[i] = t + wraps * (self.t_hi - self.t_lo)
        return float(out[0]) if scalar else out


def arclength_table(domain, m=None):
    """Total g0-length of the boundary and the parameter <-> arclength table.

    Only n = 2 with a single closed boundary component is supported; the
    optional ``m`` overrides the sampling resolution.
    """
    if domain.n != 2:
        raise GeometryError("arclength_table requires n = 2")
    if len(domain.boundary) != 1 or not domain.boundary[0].periodic:
        raise GeometryError("arclength_table requires a single closed boundary component")
    if m is not None:
        table = ArclengthTable.build(domain, 0, m=m)
        return table.L, table
    table = domain.tables()[0]
    return table.L, table


# ---------------------------------------------------------------------------
# Boundary metric g0 and curvature of G = g/phi.

@dataclass
class BoundaryMetric:
    """g0 at a boundary point: the ambient g scaled by 1/||grad phi||_g^2."""

    factor: float
    amat: np.ndarray

    def norm_sq(self, v):
        v = np.asarray(v, dtype=float)
        return self.factor * float(v @ self.amat @ v)

    def inner(self, v, w):
        return self.factor * float(np.asarray(v) @ self.amat @ np.asarray(w))


def boundary_metric(domain, x):
    """Boundary metric g0 = g|_Gamma / ||grad phi||_g^2 at a point of Gamma."""
    x = np.asarray(x, dtype=float)
    v = domain.phi_value(x)
    if abs(v) > 1e-10:
        raise GeometryError(f"point not on the boundary: phi = {v:.3e}")
    gn2 = domain.grad_norm_g_sq(x)
    if gn2 < 1e-12:
        raise GeometryError(f"degenerate grad phi at boundary point {x}")
    return BoundaryMetric(1.0 / gn2, domain.metric.mat(x))


def gauss_curvature(domain, x):
    """Gauss curvature of G = g/phi for Euclidean g, n = 2: (Delta phi - |grad phi|^2/phi)/2."""
    if domain.n != 2:
        raise GeometryError("gauss_curvature requires n = 2")
    if not domain.metric.is_euclidean:
        raise GeometryError("gauss_curvature formula applies to Euclidean g only")
    x = np.asarray(x, dtype=float)
    v, g, h = domain.phi_jet(x)
    if v <= 0:
        raise GeometryError(f"point not interior: phi = {v:.3e}")
    return 0.5 * (np.trace(h) - float(g @ g) / v)


def sectional_curvature(domain, x, v, w):
    """Sectional curvature of G = g/phi on the plane of g-orthonormal v, w.

    Standard conformal-change formula; reduces to :func:`gauss_curvature`
    for n = 2 with Euclidean g.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    amat = domain.metric.mat(x)
    if (
        abs(v @ amat @ v - 1.0) > 1e-8
        or abs(w @ amat @ w - 1.0) > 1e-8
        or abs(v @ amat @ w) > 1e-8
    ):
        raise GeometryError("v, w must be g-orthonormal")
    pv, g, h = domain.phi_jet(x)
    if pv <= 0:
        raise GeometryError(f"point not interior: phi = {pv:.3e}")
    hv = float(v @ h @ v)
    hw = float(w @ h @ w)
    dv = float(g @ v)
    dw = float(g @ w)
    if domain.metric.is_euclidean:
        gn2 = float(g @ g)
    else:
        gn2 = float(g @ np.linalg.inv(amat) @ g)
    return 0.5 * hv + 0.5 * hw - dv ** 2 / (4.0 * pv) - dw ** 2 / (4.0 * pv) - gn2 / (4.0 * pv)
