"""Regularized geodesic flow of G = g/phi with collar chart switching.

The interior chart integrates the Hamiltonian phi(x) <A^-1 p, p>; inside the
collar the Levi-Civita variables (q, p, xi, eta) regularize the boundary
contact, the section {xi = 0} carries the billiard map, and the sheet sign
tracks which copy of the doubled domain the trajectory is on.  Chart switches
use hysteresis (in at phi = 0.8 eps, out at phi = eps) to avoid chattering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .collar import CollarError
from .geometry import Domain

__all__ = [
    "FlowError",
    "TrappedError",
    "DomainExitError",
    "PhasePoint",
    "Trajectory",
    "Segment",
    "SectionPoint",
    "interior_state",
    "collar_state",
    "hamiltonian",
    "levi_civita_forward",
    "levi_civita_back",
    "integrate",
    "project_to_base",
    "detect_section_crossing",
    "section_state",
]

SWITCH_IN_FRAC = 0.8  # interior -> collar threshold as a fraction of eps

INTERIOR = "interior"
COLLAR = "collar"


class FlowError(RuntimeError):
    pass


class TrappedError(FlowError):
    """No boundary return within the configured max time (possibly trapped)."""


class DomainExitError(FlowError):
    """Trajectory left the configured bounding box."""


class ChartChangeError(FlowError):
    """Levi-Civita chart change attempted on the regularized section (xi = 0)."""


# ---------------------------------------------------------------------------
# States.

@dataclass
class PhasePoint:
    """Chart-tagged phase-space state with sheet sign.

    interior: position x and momentum p in T*Omega.
    collar:   (q, pq, xi, eta) in a collar patch; r = xi^2/2.
    """

    chart: str
    sheet: int
    x: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    q: float = 0.0
    pq: float = 0.0
    xi: float = 0.0
    eta: float = 0.0
    patch: int = 0


def interior_state(x, p, sheet=1):
    return PhasePoint(INTERIOR, int(sheet), x=np.asarray(x, dtype=float),
                      p=np.asarray(p, dtype=float))


def collar_state(q, pq, xi, eta, patch=0, sheet=None):
    if sheet is None:
        sheet = 1 if xi >= 0 else -1
    return PhasePoint(COLLAR, int(sheet), q=float(q), pq=float(pq),
                      xi=float(xi), eta=float(eta), patch=int(patch))


@dataclass
class SectionPoint:
    """Point of the billiard section: (q, p) in T*Gamma with sheet sign.

    q is g0-arclength (mod L on closed components); the conjugate eta on the
    section is sheet * sqrt(2h / a(q, 0)).
    """

    q: float
    p: float
    sheet: int
    h: float = 1.0
    component: int = 0


@dataclass
class Segment:
    chart: str
    patch: int
    t0: float
    t1: float
    sol: object  # scipy OdeSolution (dense output over [t0, t1])
    sheet0: int


@dataclass
class Event:
    kind: str  # 'switch' | 'crossing'
    t: float
    data: dict


@dataclass
class Trajectory:
    h: float
    times: list = field(default_factory=list)
    points: list = field(default_factory=list)
    events: list = field(default_factory=list)
    segments: list = field(default_factory=list)

    def final(self):
        return self.points[-1]


# ---------------------------------------------------------------------------
# Hamiltonian and chart changes.

def hamiltonian(domain, point):
    """Energy of a phase point; the value is chart-independent."""
    if point.chart == INTERIOR:
        v = domain.phi_value(point.x)
        p = point.p
        if domain.metric.is_euclidean:
            return v * float(p @ p)
        return v * float(p @ domain.metric.inv(point.x) @ p)
    patch = domain.collar().patches[point.patch]
    a, b, c = patch.coeffs2(domain.metric, point.q, 0.5 * point.xi * point.xi)
    return (
        0.5 * a * point.eta ** 2
        + b * point.pq * point.xi * point.eta
        + 0.5 * c * point.pq ** 2 * point.xi ** 2
    )


def levi_civita_forward(r, p_r, sheet=1):
    """(r, p_r) -> (xi, eta) on the chosen sheet: r = xi^2/2, p_r = eta/xi."""
    if r <= 0:
        raise ChartChangeError(f"levi_civita_forward requires r > 0, got {r}")
    xi = sheet * math.sqrt(2.0 * r)
    return xi, xi * p_r


def levi_civita_back(xi, eta):
    """(xi, eta) -> (r, p_r); undefined on the section xi = 0."""
    if xi == 0.0:
        raise ChartChangeError(
            "chart change undefined on the regularized section xi = 0"
        )
    return 0.5 * xi * xi, eta / xi


def section_state(domain, sp: SectionPoint, patch=None):
    """Collar phase point on the section S_h for a billiard section point."""
    chart = domain.collar()
    idx = sp.component if patch is None else patch
    pat = chart.patches[idx]
    a0, _, _ = pat.coeffs2(domain.metric, sp.q, 0.0)
    eta = sp.sheet * math.sqrt(2.0 * sp.h / a0)
    return collar_state(sp.q, sp.p, 0.0, eta, patch=idx, sheet=sp.sheet)


def _interior_to_collar(domain, x, p, sheet):
    chart = domain.collar()
    v = domain.phi_value(x)
    idx, q, r = chart.locate(x, phi_val=v)
    patch = chart.patches[idx]
    _, x_q, _, x_r, _, _ = patch.eval_all(q, r)
    pq = float(x_q @ p)
    pr = float(x_r @ p)
    xi = sheet * math.sqrt(2.0 * max(r, 0.0))
    return collar_state(q, pq, xi, xi * pr, patch=idx, sheet=sheet)


def _collar_to_interior(domain, point):
    patch = domain.collar().patches[point.patch]
    r, pr = levi_civita_back(point.xi, point.eta)
    x, x_q, _, x_r, _, _ = patch.eval_all(point.q, r)
    det = x_q[0] * x_r[1] - x_q[1] * x_r[0]
    # p_x solves J^T p_x = (pq, pr)
    px0 = (x_r[1] * point.pq - x_q[1] * pr) / det
    px1 = (-x_r[0] * point.pq + x_q[0] * pr) / det
    sheet = 1 if point.xi > 0 else -1
    return interior_state(np.array([x[0], x[1]]), np.array([px0, px1]), sheet=sheet)


def project_to_base(domain, point):
    """Base point in the closure of Omega (forgets the sheet)."""
    if point.chart == INTERIOR:
        return np.array(point.x, dtype=float)
    patch = domain.collar().patches[point.patch]
    return patch.chart(point.q, 0.5 * point.xi * point.xi)


# ---------------------------------------------------------------------------
# Right-hand sides.

def _interior_rhs(domain):
    phi = domain.phi
    if domain.metric.is_euclidean:
        def rhs(_t, y):
            x0, x1, p0, p1 = y
            v, (g0, g1) = phi.value_grad((x0, x1))
            pp = p0 * p0 + p1 * p1
            tv = 2.0 * v
            return (tv * p0, tv * p1, -pp * g0, -pp * g1)
        return rhs

    metric = domain.metric

    def rhs(_t, y):
        x = y[:2]
        p = y[2:]
        v, g = phi.value_grad(x)
        g = np.asarray(g)
        ainv = metric.inv(x)
        w = ainv @ p
        pp = float(p @ w)
        dmat = metric.dmat(x)
        pdot = np.empty(2)
        for k in range(2):
            dainv = -ainv @ dmat[k] @ ainv
            pdot[k] = -g[k] * pp - v * float(p @ dainv @ p)
        return np.concatenate([2.0 * v * w, pdot])

    return rhs


def _collar_rhs(domain, patch):
    metric = domain.metric
    coeffs2 = patch.coeffs2

    def rhs(_t, y):
        q, pq, xi, eta = y
        r = 0.5 * xi * xi
        (a, b, c), (aq, bq, cq), (ar, br, cr) = coeffs2(metric, q, r, derivs=True)
        qdot = xi * eta * b + xi * xi * c * pq
        pdot = -(0.5 * eta * eta * aq + pq * xi * eta * bq + 0.5 * pq * pq * xi * xi * cq)
        xidot = a * eta + b * pq * xi
        etadot = -(
            0.5 * ar * xi * eta * eta
            + br * pq * xi * xi * eta
            + 0.5 * cr * pq * pq * xi ** 3
            + b * pq * eta
            + c * pq * pq * xi
        )
        return (qdot, pdot, xidot, etadot)

    return rhs


# ---------------------------------------------------------------------------
# Advancing engine.

def _tolerances(domain, tol):
    # the drift budget tol maps to a much tighter local step tolerance; the
    # 8th-order pair makes the extra digits cheap
    tol = domain.tol if tol is None else float(tol)
    rtol = min(max(1e-13, 1e-3 * tol), 1e-8)
    return tol, rtol, 0.01 * rtol


def _box_event(domain):
    box = domain.box
    if box is None:
        return None
    finite = np.isfinite(box)

    def margin(_t, y):
        m = np.inf
        for i in range(domain.n):
            if finite[i, 0]:
                m = min(m, y[i] - box[i, 0])
            if finite[i, 1]:
                m = min(m, box[i, 1] - y[i])
        return m

    margin.terminal = True
    margin.direction = -1
    return margin


def _advance(domain, point, t_end, tol=None, *, t0=0.0, stop_at_crossing=False,
             record=True, traj=None, max_segments=100000):
    """March a phase point forward, switching charts as needed.

    Returns (trajectory, reason) with reason 'time' or 'crossing'.
    """
    if domain.n != 2:
        raise FlowError("the regularized flow is implemented for n = 2")
    _, rtol, atol = _tolerances(domain, tol)
    chart = domain.collar()
    eps = chart.eps
    h = hamiltonian(domain, point)
    if h <= 0:
        raise FlowError(f"hamiltonian must be positive, got {h}")
    if traj is None:
        traj = Trajectory(h=h)

    state = point
    t = t0
    # a start already inside the switch-in band belongs to the collar chart
    if state.chart == INTERIOR and domain.phi_value(state.x) < SWITCH_IN_FRAC * eps:
        state = _interior_to_collar(domain, state.x, state.p, state.sheet)
    elif state.chart == COLLAR and 0.5 * state.xi ** 2 > eps * (1.0 + 1e-9):
        raise FlowError(
            f"collar state has r = {0.5 * state.xi ** 2:.4g} outside the collar "
            f"[0, {eps}]; use interior coordinates"
        )

    box_ev = _box_event(domain)
    first_segment = True

    for _ in range(max_segments):
        if t >= t_end - 1e-13 * max(1.0, abs(t_end)):
            return traj, "time"
        if state.chart == INTERIOR:
            events = []

            def switch_in(_t, y):
                return domain.phi_value(y[:2]) - SWITCH_IN_FRAC * eps

            switch_in.terminal = True
            switch_in.direction = -1
            events.append(switch_in)
            if box_ev is not None:
                events.append(box_ev)
            y0 = np.concatenate([state.x, state.p])
            sol = solve_ivp(
                _interior_rhs(domain), (t, t_end), y0, method="DOP853",
                events=events, dense_output=True, rtol=rtol, atol=atol,
            )
            if sol.status == -1:
                raise FlowError(f"integrator failed in the interior chart: {sol.message}")
            seg = Segment(INTERIOR, -1, t, sol.t[-1], sol.sol, state.sheet)
            traj.segments.append(seg)
            if record:
                skip = 0 if first_segment else 1
                for ti, yi in zip(sol.t[skip:], sol.y.T[skip:]):
                    traj.times.append(ti)
                    traj.points.append(interior_state(yi[:2], yi[2:], state.sheet))
            first_segment = False
            if sol.status == 0:
                t = t_end
                continue
            if box_ev is not None and len(sol.t_events[1]) > 0:
                raise DomainExitError(
                    f"trajectory left the bounding box at t = {sol.t_events[1][0]:.6g}"
                )
            te = sol.t_events[0][0]
            ye = sol.y_events[0][0]
            new_state = _interior_to_collar(domain, ye[:2], ye[2:], state.sheet)
            traj.events.append(Event("switch", te, {
                "from": INTERIOR, "to": COLLAR, "patch": new_state.patch,
            }))
            state = new_state
            t = te
        else:
            patch = chart.patches[state.patch]
            sheet = state.sheet

            def crossing(_t, y):
                return y[2]

            crossing.terminal = bool(stop_at_crossing)
            # starting exactly on the section with a terminal crossing event
            # would fire at t0; the first real crossing is opposite the sheet
            if stop_at_crossing and state.xi == 0.0:
                crossing.direction = -sheet
            else:
                crossing.direction = 0

            def switch_out(_t, y):
                return 0.5 * y[2] * y[2] - eps

            switch_out.terminal = True
            switch_out.direction = 1
            events = [crossing, switch_out]
            if not patch.periodic:
                lo = patch.q_lo + patch.runtime_margin
                hi = patch.q_hi - patch.runtime_margin

                def patch_exit(_t, y):
                    return min(y[0] - lo, hi - y[0])

                patch_exit.terminal = True
                patch_exit.direction = -1
                events.append(patch_exit)
            y0 = np.array([state.q, state.pq, state.xi, state.eta])
            sol = solve_ivp(
                _collar_rhs(domain, patch), (t, t_end), y0, method="DOP853",
                events=events, dense_output=True, rtol=rtol, atol=atol,
            )
            if sol.status == -1:
                raise FlowError(f"integrator failed in the collar chart: {sol.message}")
            seg = Segment(COLLAR, state.patch, t, sol.t[-1], sol.sol, sheet)
            traj.segments.append(seg)
            # crossings flip the sheet; list them in order
            t_cross = [tc for tc in sol.t_events[0] if tc > t + 1e-13 * max(1.0, abs(t))]
            for tc in t_cross:
                yc = sol.sol(tc)
                eta_c = yc[3]
                sheet_after = -1 if eta_c < 0 else 1
                traj.events.append(Event("crossing", tc, {
                    "q": patch.wrap_q(float(yc[0])), "p": float(yc[1]),
                    "sheet": sheet_after, "patch": state.patch,
                }))
            if record:
                skip = 0 if first_segment else 1
                for ti, yi in zip(sol.t[skip:], sol.y.T[skip:]):
                    s_i = sheet if yi[2] == 0.0 else (1 if yi[2] > 0 else -1)
                    traj.times.append(ti)
                    traj.points.append(collar_state(yi[0], yi[1], yi[2], yi[3],
                                                    patch=state.patch, sheet=s_i))
            first_segment = False
            if stop_at_crossing and len(t_cross) > 0:
                return traj, "crossing"
            if sol.status == 0:
                t = t_end
                continue
            if len(sol.t_events) > 2 and len(sol.t_events[2]) > 0:
                raise FlowError(
                    f"trajectory left the collar patch range at t = {sol.t_events[2][0]:.6g}"
                )
            te = sol.t_events[1][0]
            ye = sol.y_events[1][0]
            n_flips = sum(1 for tc in t_cross if tc <= te)
            cur_sheet = sheet * (-1) ** n_flips
            col = collar_state(ye[0], ye[1], ye[2], ye[3], patch=state.patch, sheet=cur_sheet)
            new_state = _collar_to_interior(domain, col)
            traj.events.append(Event("switch", te, {
                "from": COLLAR, "to": INTERIOR, "patch": state.patch,
            }))
            state = new_state
            t = te
    raise FlowError("segment limit exceeded (chart switch chattering?)")


def integrate(domain, point, t_end, tol=None):
    """Integrate the regularized flow for time t_end (chart switches included)."""
    if t_end <= 0:
        raise FlowError("t_end must be positive")
    traj, _ = _advance(domain, point, t_end, tol=tol, record=True)
    return traj


def detect_section_crossing(domain, segment):
    """Locate xi = 0 inside a collar segment by bracketed root finding.

    Returns (SectionPoint, t_cross); raises FlowError when xi does not change
    sign on the segment.
    """
    if segment.chart != COLLAR:
        raise FlowError("section crossings live in the collar chart")
    patch = domain.collar().patches[segment.patch]
    sol = segment.sol

    def xi_of(t):
        return float(sol(t)[2])

    ts = np.linspace(segment.t0, segment.t1, 257)
    xis = np.array([xi_of(t) for t in ts])
    idx = np.nonzero(np.sign(xis[:-1]) * np.sign(xis[1:]) < 0)[0]
    if len(idx) == 0:
        raise FlowError("no sign change of xi in the segment")
    i = idx[0]
    t_star = brentq(xi_of, ts[i], ts[i + 1], xtol=1e-15, rtol=8.9e-16)
    y = sol(t_star)
    q = patch.wrap_q(float(y[0]))
    p = float(y[1])
    eta = float(y[3])
    a0, _, _ = patch.coeffs2(domain.metric, q, 0.0)
    h = 0.5 * a0 * eta * eta
    sp = SectionPoint(q=q, p=p, sheet=1 if eta > 0 else -1, h=h,
                      component=patch.component)
    return sp, t_star
