"""Near-boundary normal form: boundary jets, averaged Hamiltonian, model map.

In semigeodesic coordinates (q, s) the metric is G = (ds^2 + B(q,s) dq^2)/s;
expanding C = 1/B at s = 0 gives the quadratic forms K0 = p^2 (arclength q)
and K1 = k(q) p^2 that drive the averaged Hamiltonian

    N(q, p) = -K0^(-1/2) + (3/8) K1 / K0^(5/2),

whose pi-time flow approximates the billiard map for large |p|.  The jets are
estimated numerically from fans of boundary-orthogonal geodesics.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .billiard import billiard_orbit, billiard_step
from .flow import SectionPoint, _collar_rhs, section_state
from .geometry import GeometryError

__all__ = [
    "NormalFormError",
    "NormalFormData",
    "estimate_boundary_jets",
    "averaged_hamiltonian",
    "averaged_full",
    "flow_N",
    "model_map",
    "cycloid_state",
    "compare_T_vs_N",
    "CompareResult",
    "adiabatic_drift",
]

DEFAULT_SEED_ENV = "DEGENBILL_SEED"


class NormalFormError(RuntimeError):
    pass


def _default_seed():
    return int(os.environ.get(DEFAULT_SEED_ENV, "0"))


@dataclass
class NormalFormData:
    """Boundary length, curvature samples, and jet evaluators (n = 2).

    K0(q, p) = p^2 exactly in the g0-arclength parametrization (the fitted
    intercept B(q, 0) only checks that normalization); K1(q, p) = k(q) p^2
    with k interpolated periodically from a uniform grid.
    """

    L: float
    q_grid: np.ndarray  # uniform, length n_grid, in [0, L)
    k_values: np.ndarray
    s_window: tuple
    fit_b0: np.ndarray = field(default_factory=lambda: np.array([]))
    fit_residuals: np.ndarray = field(default_factory=lambda: np.array([]))
    q_samples: np.ndarray = field(default_factory=lambda: np.array([]))
    k_samples: np.ndarray = field(default_factory=lambda: np.array([]))
    meta: dict = field(default_factory=dict)
    _spline: object = field(default=None, repr=False, compare=False)

    def _k_spline(self):
        if self._spline is None:
            qs = np.append(self.q_grid, self.q_grid[0] + self.L)
            ks = np.append(self.k_values, self.k_values[0])
            self._spline = CubicSpline(qs, ks, bc_type="periodic")
        return self._spline

    def k(self, q):
        return self._k_spline()(np.asarray(q) % self.L)

    def dk(self, q):
        return self._k_spline()(np.asarray(q) % self.L, 1)

    def k0(self, q, p):
        return float(p) ** 2

    def k1(self, q, p):
        return float(self.k(q)) * float(p) ** 2

    def to_dict(self):
        return {
            "L": self.L,
            "q_grid": self.q_grid.tolist(),
            "k_values": self.k_values.tolist(),
            "s_window": list(self.s_window),
            "fit_b0": self.fit_b0.tolist(),
            "fit_residuals": self.fit_residuals.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            L=float(d["L"]),
            q_grid=np.asarray(d["q_grid"], dtype=float),
            k_values=np.asarray(d["k_values"], dtype=float),
            s_window=tuple(d["s_window"]),
            fit_b0=np.asarray(d.get("fit_b0", []), dtype=float),
            fit_residuals=np.asarray(d.get("fit_residuals", []), dtype=float),
            meta=d.get("meta", {}),
        )


def _fd_weights(offsets):
    """First-derivative weights on arbitrary nodes (exact interpolation rule)."""
    m = len(offsets)
    v = np.vander(offsets, m, increasing=True).T  # v[k, j] = offsets[j]^k
    rhs = np.zeros(m)
    rhs[1] = 1.0
    return np.linalg.solve(v, rhs)


def estimate_boundary_jets(
    domain,
    m_q=192,
    s_window=(1e-3, 1e-2),
    n_s=10,
    n_grid=128,
    jitter=0.15,
    seed=None,
    rtol=1e-12,
    b0_tol=5e-3,
    residual_tol=5e-4,
):
    """Estimate the boundary jets of a domain from orthogonal-geodesic fans.

    From each boundary sample q_i a geodesic is launched g-orthogonally at
    h = 1; along it s = t^2 exactly, and B(q_i, s) = (s/phi) |df/dq|_g^2 is
    formed by differencing neighboring geodesics at equal s.  A linear fit of
    B over s in s_window gives the intercept check B0 ~ 1 and the curvature
    k = -B1/B0^2.
    """
    if domain.n != 2:
        raise NormalFormError("jet estimation is implemented for n = 2")
    if len(domain.boundary) != 1 or not domain.boundary[0].periodic:
        raise NormalFormError("jet estimation requires a single closed boundary")
    chart = domain.collar()
    patch = chart.patches[0]
    L = patch.length

    rng = np.random.default_rng(_default_seed() if seed is None else seed)
    dq = L / m_q
    # smooth low-mode sample jitter: the difference-stencil truncation then
    # perturbs the fitted k(q) coherently on boundary scale, not grid scale
    n_modes = 4
    amps = rng.uniform(0.5, 1.0, n_modes)
    phases = rng.uniform(0.0, 2.0 * math.pi, n_modes)
    ii = np.arange(m_q)
    u = np.zeros(m_q)
    for m in range(n_modes):
        u += amps[m] * np.sin(2.0 * math.pi * (m + 1) * ii / m_q + phases[m])
    if np.abs(u).max() > 0:
        u /= np.abs(u).max()
    qs = (ii + jitter * u) * dq

    s_lo, s_hi = s_window
    s_grid = np.linspace(s_lo, s_hi, n_s)
    t_grid = np.sqrt(s_grid)

    rhs = _collar_rhs(domain, patch)
    X = np.empty((m_q, n_s, 2))
    phi_vals = np.empty((m_q, n_s))
    r_max = 0.0
    for i, qi in enumerate(qs):
        a0, _, _ = patch.coeffs2(domain.metric, qi, 0.0)
        eta0 = math.sqrt(2.0 / a0)
        sol = solve_ivp(
            rhs, (0.0, t_grid[-1] * 1.0001), [qi, 0.0, 0.0, eta0],
            method="DOP853", t_eval=t_grid, rtol=rtol, atol=1e-14,
        )
        if not sol.success:
            raise NormalFormError(f"orthogonal geodesic from q={qi:.6g} failed")
        r_ray = 0.5 * sol.y[2] ** 2
        r_max = max(r_max, float(r_ray.max()))
        if r_ray.max() > 0.97 * chart.eps:
            raise NormalFormError(
                f"orthogonal geodesic from q={qi:.6g} leaves the collar inside s_window"
            )
        for j in range(n_s):
            x = patch.chart(float(sol.y[0, j]), float(r_ray[j]))
            X[i, j] = x
            phi_vals[i, j] = domain.phi_value(x)

    euclid = domain.metric.is_euclidean
    b0 = np.empty(m_q)
    b1 = np.empty(m_q)
    resid = np.empty(m_q)
    design = np.column_stack([np.ones(n_s), s_grid])
    secular = patch.secular
    for i in range(m_q):
        idx = [(i + k) % m_q for k in (-1, 0, 1)]
        offs = np.array([(qs[j] - qs[i] + 0.5 * L) % L - 0.5 * L for j in idx])
        w = _fd_weights(offs)
        # unwrap winding components across the q = 0 seam
        stencil = np.array(
            [X[j] + secular[None, :] * (qs[i] + off - qs[j]) for j, off in zip(idx, offs)]
        )
        dfdq = np.tensordot(w, stencil, axes=(0, 0))  # (n_s, 2)
        if euclid:
            nrm2 = np.einsum("jk,jk->j", dfdq, dfdq)
        else:
            nrm2 = np.array(
                [float(dfdq[j] @ domain.metric.mat(X[i, j]) @ dfdq[j]) for j in range(n_s)]
            )
        B = s_grid / phi_vals[i] * nrm2
        coef, *_ = np.linalg.lstsq(design, B, rcond=None)
        b0[i], b1[i] = coef
        resid[i] = float(np.abs(B - design @ coef).max())

    if np.abs(b0 - 1.0).max() > b0_tol:
        raise NormalFormError(
            f"arclength normalization check failed: max |B0 - 1| = {np.abs(b0 - 1.0).max():.3e}"
        )
    if resid.max() > residual_tol:
        raise NormalFormError(f"jet fit residual {resid.max():.3e} above threshold")

    k_samples = -b1 / b0 ** 2

    order = np.argsort(qs)
    qs_sorted = qs[order]
    ks_sorted = k_samples[order]
    sp = CubicSpline(
        np.append(qs_sorted, qs_sorted[0] + L),
        np.append(ks_sorted, ks_sorted[0]),
        bc_type="periodic",
    )
    q_grid = L * np.arange(n_grid) / n_grid
    k_values = sp(q_grid)

    return NormalFormData(
        L=L,
        q_grid=q_grid,
        k_values=np.asarray(k_values),
        s_window=(s_lo, s_hi),
        fit_b0=b0,
        fit_residuals=resid,
        q_samples=qs,
        k_samples=k_samples,
        meta={
            "domain": domain.name,
            "m_q": m_q,
            "n_s": n_s,
            "jitter": jitter,
            "r_max": r_max,
        },
    )


# ---------------------------------------------------------------------------
# Averaged Hamiltonian and its flow.

def averaged_hamiltonian(nf, q, p):
    """N(q, p) = -K0^(-1/2) + (3/8) K1 / K0^(5/2); for n = 2 with arclength q
    this is -1/|p| + (3/8) k(q) / |p|^3."""
    if p == 0:
        raise NormalFormError("averaged Hamiltonian undefined at p = 0")
    ap = abs(float(p))
    return -1.0 / ap + 0.375 * float(nf.k(q)) / ap ** 3


def averaged_full(nf, q, p, j):
    """Diagnostic two-variable average J K0^(1/2) + (3 J^2/8) K1/K0."""
    k0 = nf.k0(q, p)
    return j * math.sqrt(k0) + 0.375 * j * j * nf.k1(q, p) / k0


def flow_N(nf, q, p, dphi, tol=1e-12):
    """Hamiltonian flow of N for 'angle time' dphi (the billiard step is pi)."""
    if p == 0:
        raise NormalFormError("flow of N undefined at p = 0")

    def rhs(_t, y):
        qq, pp = y
        if pp == 0:
            raise NormalFormError("p crossed 0 during the averaged flow")
        sgn = 1.0 if pp > 0 else -1.0
        ap = abs(pp)
        k = float(nf.k(qq))
        dk = float(nf.dk(qq))
        qdot = sgn / ap ** 2 - sgn * 1.125 * k / ap ** 4
        pdot = -0.375 * dk / ap ** 3
        return (qdot, pdot)

    sol = solve_ivp(rhs, (0.0, dphi), [float(q), float(p)], method="DOP853",
                    rtol=max(tol, 1e-13), atol=1e-14)
    if not sol.success:
        raise NormalFormError(f"averaged flow failed: {sol.message}")
    qf, pf = sol.y[:, -1]
    return float(qf), float(pf)


def model_map(q, p, h=1.0, C=None):
    """Constant-coefficient model billiard map (q, p) -> (q + pi h <Cp,p>^{-3/2} Cp, p)."""
    if np.ndim(p) == 0:
        if p == 0:
            raise NormalFormError("model map undefined at p = 0")
        c = 1.0 if C is None else float(C)
        cpp = c * p * p
        return q + math.pi * h * cpp ** (-1.5) * c * p, p
    p = np.asarray(p, dtype=float)
    if not p.any():
        raise NormalFormError("model map undefined at p = 0")
    cmat = np.eye(len(p)) if C is None else np.asarray(C, dtype=float)
    cp = cmat @ p
    cpp = float(p @ cp)
    return np.asarray(q, dtype=float) + math.pi * h * cpp ** (-1.5) * cp, p


def cycloid_state(t, q0, p, h=1.0, C=None):
    """Exact collar-model trajectory through the apex at t = 0.

    Returns (q, s, p_s) with s = (h/k^2) cos^2(kt), p_s = -k tan(kt),
    k = sqrt(<Cp, p>); defined for |t| < pi/(2k).
    """
    scalar = np.ndim(p) == 0
    pvec = np.atleast_1d(np.asarray(p, dtype=float))
    cmat = np.eye(len(pvec)) if C is None else np.atleast_2d(np.asarray(C, dtype=float))
    cp = cmat @ pvec
    k = math.sqrt(float(pvec @ cp))
    if k == 0:
        raise NormalFormError("cycloid undefined at p = 0")
    if abs(t) >= 0.5 * math.pi / k:
        raise NormalFormError(f"|t| must be < pi/(2k) = {0.5 * math.pi / k:.6g}")
    q = np.atleast_1d(np.asarray(q0, dtype=float)) + (h / k ** 2) * (
        t + math.sin(2.0 * k * t) / (2.0 * k)
    ) * cp
    s = (h / k ** 2) * math.cos(k * t) ** 2
    p_s = -k * math.tan(k * t)
    if scalar:
        return float(q[0]), s, p_s
    return q, s, p_s


# ---------------------------------------------------------------------------
# Map comparisons.

@dataclass
class CompareResult:
    p_list: np.ndarray
    q_errors: np.ndarray
    p_errors: np.ndarray
    q_slope: float
    p_slope: float

    def rows(self):
        return [
            (float(p), float(qe), float(pe))
            for p, qe, pe in zip(self.p_list, self.q_errors, self.p_errors)
        ]


def _wrap(dq, L):
    return (dq + 0.5 * L) % L - 0.5 * L


def compare_T_vs_N(domain, nf, p_list, samples=8, tol=1e-11):
    """Max |q|- and |p|-errors between the billiard map and the pi-time
    averaged flow, with least-squares log-log slopes over p_list."""
    L = nf.L
    q0s = L * (np.arange(samples) + 0.3) / samples
    q_err = np.empty(len(p_list))
    p_err = np.empty(len(p_list))
    for i, p in enumerate(p_list):
        eq = ep = 0.0
        for q0 in q0s:
            out, _ = billiard_step(domain, SectionPoint(float(q0), float(p), 1, 1.0), tol=tol)
            qn, pn = flow_N(nf, q0, p, math.pi, tol=1e-13)
            eq = max(eq, abs(_wrap(out.q - qn % L, L)))
            ep = max(ep, abs(out.p - pn))
        q_err[i] = eq
        p_err[i] = ep
    lp = np.log(np.asarray(p_list, dtype=float))
    q_slope = float(np.polyfit(lp, np.log(np.maximum(q_err, 1e-300)), 1)[0])
    p_slope = float(np.polyfit(lp, np.log(np.maximum(p_err, 1e-300)), 1)[0])
    return CompareResult(np.asarray(p_list, dtype=float), q_err, p_err, q_slope, p_slope)


def adiabatic_drift(domain, nf, sp: SectionPoint, m, c_floor=1.0, tol=None):
    """max_j |N(T^j(sp)) - N(sp)| over m bounces, m <= c_floor * p^2."""
    if m > c_floor * sp.p ** 2:
        raise NormalFormError(
            f"bounce count {m} exceeds c_floor * p^2 = {c_floor * sp.p ** 2:.6g}"
        )
    orbit = billiard_orbit(domain, sp, m, tol=tol)
    if orbit.trapped:
        raise NormalFormError(f"orbit trapped during drift run: {orbit.trapped_reason}")
    n0 = averaged_hamiltonian(nf, orbit.points[0].q, orbit.points[0].p)
    return max(
        abs(averaged_hamiltonian(nf, sp_j.q, sp_j.p) - n0) for sp_j in orbit.points[1:]
    )
