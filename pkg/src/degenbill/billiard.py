"""The boundary billiard map: first return of the regularized flow to xi = 0.

All reflections of G = g/phi geodesics are g-orthogonal to the boundary; the
return map acts on (q, p) in T*Gamma, is symplectic, and swaps the two sheets
of the section.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .flow import (
    COLLAR,
    FlowError,
    SectionPoint,
    TrappedError,
    _advance,
    hamiltonian,
    section_state,
)

__all__ = [
    "BilliardError",
    "Flight",
    "BilliardOrbit",
    "billiard_step",
    "billiard_orbit",
    "jacobian",
    "find_two_periodic",
]


class BilliardError(RuntimeError):
    pass


@dataclass
class Flight:
    """One boundary-to-boundary flight: endpoint, time, length, trajectory."""

    start: SectionPoint
    end: SectionPoint
    time: float
    length: float
    trajectory: object


@dataclass
class BilliardOrbit:
    """Iterated section points with flight lengths (geodesic actions).

    Sheets alternate along the orbit; ``trapped`` is set when a flight failed
    to return and the orbit is partial.
    """

    points: list
    lengths: list
    L: Optional[float] = None
    trapped: bool = False
    trapped_reason: str = ""

    def qs(self):
        return np.array([sp.q for sp in self.points])

    def ps(self):
        return np.array([sp.p for sp in self.points])

    def __len__(self):
        return len(self.points)


def _period(domain, component=0):
    patch = domain.collar().patches[component]
    return patch.length if patch.periodic else None


def fly(domain, sp: SectionPoint, tol=None, max_time=None):
    """Integrate one flight from the section to the next crossing."""
    state = section_state(domain, sp)
    budget = domain.max_time if max_time is None else float(max_time)
    traj, reason = _advance(domain, state, budget, tol=tol,
                            stop_at_crossing=True, record=False)
    if reason != "crossing":
        raise TrappedError(
            f"possibly trapped: no section return within t = {budget}"
        )
    ev = traj.events[-1]
    assert ev.kind == "crossing"
    patch = domain.collar().patches[ev.data["patch"]]
    q_out = ev.data["q"]
    p_out = ev.data["p"]
    sheet_out = ev.data["sheet"]
    if sheet_out != -sp.sheet:
        raise FlowError("section sheets failed to alternate across a flight")
    # eta on the section determines the energy; verify consistency
    a0, _, _ = patch.coeffs2(domain.metric, q_out, 0.0)
    eta_expect = math.sqrt(2.0 * sp.h / a0)
    seg = traj.segments[-1]
    eta_found = abs(float(seg.sol(ev.t)[3]))
    if abs(eta_found - eta_expect) > 1e-8 * max(1.0, eta_expect):
        raise FlowError(
            f"section eta mismatch: {eta_found} vs sqrt(2h/a0) = {eta_expect}"
        )
    out = SectionPoint(q=q_out, p=p_out, sheet=sheet_out, h=sp.h,
                       component=patch.component)
    tau = ev.t
    return Flight(start=sp, end=out, time=tau,
                  length=2.0 * math.sqrt(sp.h) * tau, trajectory=traj)


def billiard_step(domain, sp: SectionPoint, tol=None, max_time=None):
    """One application of the billiard map: (next section point, flight length)."""
    f = fly(domain, sp, tol=tol, max_time=max_time)
    return f.end, f.length


def billiard_orbit(domain, sp: SectionPoint, m, tol=None, max_time=None):
    """m billiard steps; a trapped flight ends the orbit early (partial orbit)."""
    if m < 1:
        raise BilliardError("bounce count must be >= 1")
    pts = [sp]
    lengths = []
    cur = sp
    trapped = False
    reason = ""
    for _ in range(m):
        try:
            cur, ell = billiard_step(domain, cur, tol=tol, max_time=max_time)
        except FlowError as e:
            trapped = True
            reason = str(e)
            break
        pts.append(cur)
        lengths.append(ell)
    return BilliardOrbit(points=pts, lengths=lengths, L=_period(domain, sp.component),
                         trapped=trapped, trapped_reason=reason)


def _wrap(dq, L):
    if L is None:
        return dq
    return (dq + 0.5 * L) % L - 0.5 * L


def jacobian(domain, sp: SectionPoint, delta=1e-5, tol=None):
    """Central finite-difference Jacobian of (q, p) -> (q+, p+); symplectic."""
    L = _period(domain, sp.component)

    def step(q, p):
        out, _ = billiard_step(
            domain, SectionPoint(q, p, sp.sheet, sp.h, sp.component), tol=tol
        )
        return out.q, out.p

    qp, pp = step(sp.q + delta, sp.p)
    qm, pm = step(sp.q - delta, sp.p)
    dq_dq = _wrap(qp - qm, L) / (2 * delta)
    dp_dq = (pp - pm) / (2 * delta)
    qp, pp = step(sp.q, sp.p + delta)
    qm, pm = step(sp.q, sp.p - delta)
    dq_dp = _wrap(qp - qm, L) / (2 * delta)
    dp_dp = (pp - pm) / (2 * delta)
    return np.array([[dq_dq, dq_dp], [dp_dq, dp_dp]])


def find_two_periodic(domain, q_init, tol=1e-8, flight_tol=None, max_iter=30):
    """Two-periodic orbit: launch g-orthogonally from q, require p+ = 0.

    Newton (secant) on the one-dimensional shooting residual p+(q); by time
    reversal a root gives T(q, 0) = (q', 0) and T(q', 0) = (q, 0).  Returns
    (orbit, residual); raises BilliardError with the best residual on
    divergence and propagates trapped flights.
    """
    L = _period(domain)
    h = 1.0

    def p_plus(q):
        out, _ = billiard_step(domain, SectionPoint(q, 0.0, 1, h), tol=flight_tol)
        return out.p, out.q

    q = float(q_init[0]) if np.ndim(q_init) else float(q_init)
    best = (np.inf, q)
    g0, _ = p_plus(q)
    if abs(g0) > tol:
        dq = 1e-4 * (L or 1.0)
        g1, _ = p_plus(q + dq)
        for _ in range(max_iter):
            slope = (g1 - g0) / dq
            if slope == 0:
                break
            step = -g0 / slope
            step = max(-0.1 * (L or 1.0), min(0.1 * (L or 1.0), step))
            qn = q + step
            gn, _ = p_plus(qn)
            if abs(gn) < best[0]:
                best = (abs(gn), qn)
            g0, g1, dq = gn, g0, q - qn
            q = qn
            if abs(gn) < tol:
                break
        else:
            raise BilliardError(
                f"two-periodic Newton did not converge; best residual {best[0]:.3e} at q = {best[1]:.6g}"
            )
        if abs(g0) > tol:
            raise BilliardError(
                f"two-periodic Newton did not converge; best residual {best[0]:.3e} at q = {best[1]:.6g}"
            )
    sp0 = SectionPoint(q, 0.0, 1, h)
    orbit = billiard_orbit(domain, sp0, 2, tol=flight_tol)
    if orbit.trapped:
        raise TrappedError(f"two-periodic flight trapped: {orbit.trapped_reason}")
    p1 = orbit.points[1].p
    p2 = orbit.points[2].p
    dq_back = abs(_wrap(orbit.points[2].q - q, L))
    residual = max(abs(p1), abs(p2), dq_back)
    return orbit, residual
