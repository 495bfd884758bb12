"""Invariant circles, caustics, action variables, and conserved quantities.

Near the boundary the billiard map is a nearly integrable twist map; long
orbits at large |p| trace invariant circles p^{-1} = eps + (3/8) k(q) eps^3 +
O(eps^5) whose flights are tangent to a caustic at G-distance ~ 2 eps from
the boundary.  The integrable presets admit exact conservation checks
(angular momenta; a separable Liouville integral).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .billiard import billiard_orbit, fly
from .flow import (
    COLLAR,
    INTERIOR,
    FlowError,
    SectionPoint,
    _advance,
    _collar_rhs,
    interior_state,
)
from .normalform import averaged_hamiltonian

__all__ = [
    "InvariantsError",
    "ResonanceDetected",
    "RotationNumber",
    "rotation_number",
    "InvariantCircleFit",
    "fit_invariant_circle",
    "caustic_curve",
    "action_variables",
    "noether_drift",
    "LiouvilleDrift",
    "liouville_integral_drift",
    "distance_to_boundary",
    "flight_min_distance",
    "tangency_fraction",
]


class InvariantsError(RuntimeError):
    pass


class ResonanceDetected(InvariantsError):
    """Orbit q-values cluster (near-resonant rotation number); fit refused."""


# ---------------------------------------------------------------------------
# Rotation numbers.

@dataclass
class RotationNumber:
    value: float
    std: float
    n: int


def rotation_number(orbit, n_blocks=10):
    """Birkhoff average of lifted q-increments divided by L.

    Reported with the standard deviation of block partial averages.
    """
    if orbit.L is None:
        raise InvariantsError("rotation number needs a closed boundary component")
    if len(orbit) < 101:
        raise InvariantsError("orbit too short: need >= 100 bounces")
    L = orbit.L
    qs = orbit.qs()
    dq = np.diff(qs)
    dq = (dq + 0.5 * L) % L - 0.5 * L
    nu = float(np.mean(dq)) / L
    blocks = np.array_split(dq, n_blocks)
    means = np.array([np.mean(b) for b in blocks]) / L
    return RotationNumber(value=nu, std=float(np.std(means)), n=len(dq))


# ---------------------------------------------------------------------------
# Invariant circle fitting.

@dataclass
class InvariantCircleFit:
    """Fourier fit of p^{-1} along a billiard orbit, as a graph over q.

    eps is the circle label (the level of the averaged invariant -N);
    eps_launch = 1/p0 includes the first Lazutkin correction so that
    -N(q0, p0) = eps + O(eps^5).
    """

    eps: float
    eps_launch: float
    eps_invariant: float
    L: float
    coeffs: np.ndarray  # [a0, a1..aM, b1..bM]
    modes: int
    rotation: float
    rotation_std: float
    residual: float
    deviation: float
    orbit_len: int
    min_p: float
    max_gap_frac: float

    def series(self, q):
        q = np.asarray(q, dtype=float)
        w = 2.0 * np.pi * q / self.L
        m = self.modes
        out = np.full(q.shape, self.coeffs[0])
        for mi in range(1, m + 1):
            out = out + self.coeffs[mi] * np.cos(mi * w) + self.coeffs[m + mi] * np.sin(mi * w)
        return out

    def to_dict(self):
        return {
            "epsilon": self.eps,
            "epsilon_launch": self.eps_launch,
            "epsilon_invariant": self.eps_invariant,
            "L": self.L,
            "fourier_modes": self.coeffs.tolist(),
            "n_modes": self.modes,
            "rotation_number": self.rotation,
            "rotation_number_std": self.rotation_std,
            "residual": self.residual,
            "deviation": self.deviation,
            "orbit_len": self.orbit_len,
            "min_p": self.min_p,
        }


def _design(qs, L, modes):
    w = 2.0 * np.pi * qs / L
    cols = [np.ones_like(qs)]
    for m in range(1, modes + 1):
        cols.append(np.cos(m * w))
    for m in range(1, modes + 1):
        cols.append(np.sin(m * w))
    return np.column_stack(cols)


def fit_invariant_circle(domain, nf, eps, orbit_len=None, q0=0.0, modes=16,
                         tol=None, gap_frac=0.08):
    """Fit the invariant circle with label eps from a long billiard orbit.

    The launch momentum is 1/(eps + (3/8) k(q0) eps^3), so eps labels the
    level of the averaged invariant.  Raises :class:`ResonanceDetected` when
    the orbit's q-values cluster instead of filling the boundary.
    """
    L = nf.L
    k0 = float(nf.k(q0))
    p0 = 1.0 / (eps + 0.375 * k0 * eps ** 3)
    if orbit_len is None:
        rot = math.pi / (p0 ** 2 * L)
        orbit_len = int(min(4000, max(256, math.ceil(2.2 / rot))))
    sp = SectionPoint(float(q0), p0, 1, 1.0)
    orbit = billiard_orbit(domain, sp, orbit_len, tol=tol)
    if orbit.trapped:
        raise InvariantsError(
            f"orbit escaped the collar regime (p too small?): {orbit.trapped_reason}"
        )
    qs = orbit.qs()
    ps = orbit.ps()
    if ps.min() <= 0:
        raise InvariantsError("orbit left the p > 0 graph regime")

    gaps = np.diff(np.sort(qs))
    max_gap = max(float(gaps.max()) if len(gaps) else L,
                  float(L - np.sort(qs)[-1] + np.sort(qs)[0]))
    if max_gap > gap_frac * L:
        raise ResonanceDetected(
            f"q-values cluster: max gap {max_gap:.3g} of L = {L:.3g}; "
            "rotation number near-resonant, circle not fitted"
        )

    u = 1.0 / ps
    a = _design(qs, L, modes)
    coeffs, *_ = np.linalg.lstsq(a, u, rcond=None)
    fit = InvariantCircleFit(
        eps=float(eps),
        eps_launch=1.0 / p0,
        eps_invariant=-averaged_hamiltonian(nf, q0, p0),
        L=L,
        coeffs=coeffs,
        modes=modes,
        rotation=0.0,
        rotation_std=0.0,
        residual=float(np.abs(u - a @ coeffs).max()),
        deviation=0.0,
        orbit_len=len(orbit) - 1,
        min_p=float(ps.min()),
        max_gap_frac=max_gap / L,
    )
    rot = rotation_number(orbit) if len(orbit) >= 101 else None
    if rot is not None:
        fit.rotation = rot.value
        fit.rotation_std = rot.std
    eps_n = fit.eps_invariant
    qf = L * np.arange(512) / 512
    predicted = eps_n + 0.375 * np.asarray(nf.k(qf)) * eps_n ** 3
    fit.deviation = float(np.abs(fit.series(qf) - predicted).max())
    return fit


# ---------------------------------------------------------------------------
# Caustics.

def caustic_curve(domain, eps, m_points=128, rtol=1e-12):
    """The level curve {rho(x, Gamma) = eps} via the orthogonal-geodesic fan.

    Each point is reached after flow time eps/2 (h = 1) along the geodesic
    launched g-orthogonally from a boundary sample; its depth is s = eps^2/4.
    Returns an (m_points, 2) closed polyline.
    """
    chart = domain.collar()
    patch = chart.patches[0]
    if len(chart.patches) != 1 or not patch.periodic:
        raise InvariantsError("caustic_curve requires a single closed boundary")
    L = patch.length
    rhs = _collar_rhs(domain, patch)
    t_end = 0.5 * eps
    pts = np.empty((m_points, 2))
    for i in range(m_points):
        qi = L * i / m_points
        a0, _, _ = patch.coeffs2(domain.metric, qi, 0.0)
        sol = solve_ivp(rhs, (0.0, t_end), [qi, 0.0, 0.0, math.sqrt(2.0 / a0)],
                        method="DOP853", rtol=rtol, atol=1e-14)
        if not sol.success:
            raise InvariantsError(f"orthogonal geodesic from q={qi:.6g} failed")
        qf, _, xif, _ = sol.y[:, -1]
        rf = 0.5 * xif * xif
        if rf > 0.97 * chart.eps:
            raise InvariantsError(
                f"caustic depth s = {rf:.4g} outside the collar (eps too large)"
            )
        pts[i] = patch.chart(float(qf), float(rf))
    return pts


# ---------------------------------------------------------------------------
# Action variables.

def action_variables(domain, fit: InvariantCircleFit, tol=None, n_quad=4096):
    """Action pair (I1, I2) of the invariant 2-torus over a fitted circle.

    I2 = loop integral of p dq around the circle; I1 = Levi-Civita loop
    integral of eta d(xi) over a single flight at the fitted circle.
    """
    L = fit.L
    qg = L * np.arange(n_quad) / n_quad
    pg = 1.0 / fit.series(qg)
    i2 = float(np.mean(pg) * L)

    q0 = 0.0
    p0 = float(1.0 / fit.series(q0))
    flight = fly(domain, SectionPoint(q0, p0, 1, 1.0), tol=tol)
    i1 = 0.0
    for seg in flight.trajectory.segments:
        if seg.chart != COLLAR:
            raise InvariantsError(
                "flight left the collar; I1 loop integral needs the circle regime"
            )
        ts = np.linspace(seg.t0, seg.t1, 4001)
        y = seg.sol(ts)
        i1 += float(np.trapezoid(y[3], x=y[2]))
    return i1, i2


# ---------------------------------------------------------------------------
# Conserved quantities of the integrable presets.

def _collar_momentum(domain, pt):
    patch = domain.collar().patches[pt.patch]
    r = 0.5 * pt.xi * pt.xi
    x, x_q, _, x_r, _, _ = patch.eval_all(pt.q, r)
    pr = pt.eta / pt.xi
    det = x_q[0] * x_r[1] - x_q[1] * x_r[0]
    px0 = (x_r[1] * pt.pq - x_q[1] * pr) / det
    px1 = (-x_r[0] * pt.pq + x_q[0] * pr) / det
    return x, np.array([px0, px1])


def noether_drift(domain, trajectory):
    """Max drift of the angular momentum x ^ p along a trajectory (SO(2))."""
    if not domain.so_invariant:
        raise InvariantsError(f"domain '{domain.name}' is not rotation-invariant")
    vals = []
    for pt in trajectory.points:
        if pt.chart == INTERIOR:
            x, p = pt.x, pt.p
        else:
            if abs(pt.xi) < 1e-3:
                continue  # base momentum blows up at the section
            x, p = _collar_momentum(domain, pt)
        vals.append(x[0] * p[1] - x[1] * p[0])
    vals = np.asarray(vals)
    if len(vals) < 2:
        raise InvariantsError("trajectory has too few usable samples")
    return float(np.abs(vals - vals[0]).max())


@dataclass
class LiouvilleDrift:
    drift: float
    n_samples: int
    n_corner_excluded: int
    corner_proximity: bool


def liouville_integral_drift(domain, trajectory, corner_margin=0.02):
    """Drift of the separable Liouville integral along interior samples.

    F = (chi2(x2) p1^2 - chi1(x1) p2^2) / (chi1 + chi2) with chi_i = 1/phi_i;
    samples with min_i(1 - |x_i|) < corner_margin are reported and excluded.
    """
    if not domain.separable_phis:
        raise InvariantsError(f"domain '{domain.name}' is not flagged separable")
    phi1, phi2 = domain.separable_phis
    vals = []
    n_corner = 0
    for pt in trajectory.points:
        if pt.chart != INTERIOR:
            continue
        x, p = pt.x, pt.p
        if min(1.0 - abs(x[0]), 1.0 - abs(x[1])) < corner_margin:
            n_corner += 1
            continue
        c1 = 1.0 / phi1.value(x)
        c2 = 1.0 / phi2.value(x)
        vals.append((c2 * p[0] ** 2 - c1 * p[1] ** 2) / (c1 + c2))
    vals = np.asarray(vals)
    if len(vals) < 2:
        raise InvariantsError("trajectory has too few usable interior samples")
    return LiouvilleDrift(
        drift=float(np.abs(vals - vals[0]).max()),
        n_samples=len(vals),
        n_corner_excluded=n_corner,
        corner_proximity=n_corner > 0,
    )


# ---------------------------------------------------------------------------
# Distances and tangency.

def distance_to_boundary(domain, x, halfwidth=0.6, xatol=1e-5, tol=1e-10):
    """G-distance to the boundary by shooting geodesics and minimizing over
    the launch direction (the minimizer hits Gamma g-orthogonally)."""
    x = np.asarray(x, dtype=float)
    v, g = domain.phi.value_grad(x)
    if v <= 0:
        raise InvariantsError("distance_to_boundary needs an interior point")
    g = np.asarray(g)
    if domain.metric.is_euclidean:
        d0 = -g
        amat = None
    else:
        amat = domain.metric.mat(x)
        d0 = -np.linalg.solve(amat, g)
    alpha0 = math.atan2(d0[1], d0[0])

    def hit_time(alpha):
        d = np.array([math.cos(alpha), math.sin(alpha)])
        add = float(d @ amat @ d) if amat is not None else 1.0
        p = (amat @ d if amat is not None else d) / math.sqrt(v * add)
        state = interior_state(x, p)
        traj, reason = _advance(domain, state, domain.max_time, tol=tol,
                                stop_at_crossing=True, record=False)
        if reason != "crossing":
            return np.inf
        return traj.events[-1].t

    res = minimize_scalar(hit_time, bounds=(alpha0 - halfwidth, alpha0 + halfwidth),
                          method="bounded", options={"xatol": xatol})
    return 2.0 * float(res.fun)


def flight_min_distance(domain, flight):
    """Minimum G-distance to the boundary along one billiard flight."""
    best_r = -1.0
    best = None
    for seg in flight.trajectory.segments:
        if seg.chart == COLLAR:
            ts = np.linspace(seg.t0, seg.t1, 513)
            y = seg.sol(ts)
            r = 0.5 * y[2] ** 2
            i = int(np.argmax(r))
            if r[i] > best_r:
                best_r = float(r[i])
                patch = domain.collar().patches[seg.patch]
                best = patch.chart(float(y[0, i]), float(r[i]))
        else:
            ts = np.linspace(seg.t0, seg.t1, 513)
            y = seg.sol(ts)
            phis = np.array([domain.phi_value(y[:2, j]) for j in range(y.shape[1])])
            i = int(np.argmax(phis))
            if phis[i] > best_r:
                best_r = float(phis[i])
                best = np.array(y[:2, i])
    if best is None:
        raise InvariantsError("flight has no recorded segments")
    return distance_to_boundary(domain, best)


def tangency_fraction(domain, eps, n_flights=32, rel_tol=0.05, nf=None, tol=None):
    """Fraction of orbit flights whose minimum boundary distance is within
    rel_tol of the caustic level eps, for the circle labeled eps/2."""
    k0 = float(nf.k(0.0)) if nf is not None else 0.0
    eps_circ = 0.5 * eps
    p0 = 1.0 / (eps_circ + 0.375 * k0 * eps_circ ** 3)
    sp = SectionPoint(0.0, p0, 1, 1.0)
    hits = 0
    for _ in range(n_flights):
        flight = fly(domain, sp, tol=tol)
        rho = flight_min_distance(domain, flight)
        if abs(rho - eps) <= rel_tol * eps:
            hits += 1
        sp = flight.end
    return hits / n_flights
