"""Collar (tubular-neighborhood) charts near the boundary.

The chart chi(q, r) follows the normalized g-gradient flow of phi from the
boundary point at g0-arclength q, so phi(chi(q, r)) = r holds by construction
(dphi/dtau = 1 along the flow).  Each boundary component gets one patch whose
chart is stored as a Fourier x Chebyshev (closed component) or Chebyshev x
Chebyshev (open component) series, fitted to near-machine-precision rays.

All collar Hamiltonian coefficients and momentum transforms are assembled
from the *same* series Jacobian, so the interior Hamiltonian phi <A^-1 p, p>
and the collar one agree to roundoff at chart switches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import chebyshev as _cheb
from scipy.integrate import solve_ivp

from .geometry import Domain, GeometryError

__all__ = [
    "CollarError",
    "CollarPatch",
    "CollarChart",
    "build_collar",
    "collar_hamiltonian_coeffs",
]


class CollarError(RuntimeError):
    pass


def _cheb_nodes(lo, hi, m):
    """Chebyshev-Lobatto nodes, ascending, endpoints included."""
    k = np.arange(m)
    xhat = -np.cos(np.pi * k / (m - 1))
    return lo + (hi - lo) * (xhat + 1.0) / 2.0, xhat


def _chebvec(xhat, m):
    t = np.empty(m)
    t[0] = 1.0
    if m > 1:
        t[1] = xhat
    for i in range(2, m):
        t[i] = 2.0 * xhat * t[i - 1] - t[i - 2]
    return t


def _chebder_tensor(tensor, axis, scale):
    """Apply d/dx to Chebyshev coefficients along ``axis`` (x scaled by ``scale``)."""
    moved = np.moveaxis(tensor, axis, 0)
    out = np.zeros_like(moved)
    der = _cheb.chebder(np.eye(moved.shape[0]), axis=0)  # (m-1, m) map
    out[: der.shape[0]] = np.tensordot(der, moved, axes=(1, 0))
    return np.moveaxis(out, 0, axis) * scale


@dataclass
class CollarPatch:
    """One collar patch: chart series, coefficient assembly, Newton inverse."""

    component: int
    periodic: bool
    eps: float
    q_lo: float
    q_hi: float
    secular: np.ndarray  # x ~ secular*q + periodic part (flat-cylinder style winding)
    tensors: np.ndarray  # (6, n, kr, mq): [val, dq, dqq, dr, dqdr, drr]
    freqs: Optional[np.ndarray]  # Fourier frequencies (periodic) or None
    q_nodes: np.ndarray
    boundary_points: np.ndarray  # chart ray feet, for inverse initial guesses
    runtime_margin: float = 0.0
    quality: dict = field(default_factory=dict)

    @property
    def length(self):
        return self.q_hi - self.q_lo

    # -- basis vectors -------------------------------------------------------
    def _qvec(self, q):
        if self.periodic:
            return np.exp(1j * self.freqs * q)
        xhat = 2.0 * (q - self.q_lo) / (self.q_hi - self.q_lo) - 1.0
        return _chebvec(xhat, self.tensors.shape[3])

    def _rvec(self, r):
        xhat = 2.0 * r / self.eps - 1.0
        return _chebvec(xhat, self.tensors.shape[2])

    def _flat(self):
        # (mq, 6*n*kr) layout so the large q-contraction is a single gemv
        cache = getattr(self, "_flat_cache", None)
        if cache is None:
            s, n, kr, mq = self.tensors.shape
            cache = np.ascontiguousarray(
                self.tensors.transpose(3, 0, 1, 2).reshape(mq, s * n * kr)
            )
            self._flat_cache = cache
        return cache

    def eval_all(self, q, r):
        """Chart point, Jacobian columns, and second derivatives at (q, r).

        Returns (x, x_q, x_qq, x_r, x_qr, x_rr), each an (n,) array.
        """
        s, n, kr, _ = self.tensors.shape
        tq = self._qvec(q)
        tr = self._rvec(r)
        tmp = tq @ self._flat()
        out = tmp.reshape(s * n, kr) @ tr
        if out.dtype.kind == "c":
            out = out.real
        out = out.reshape(s, n)
        x, x_q, x_qq, x_r, x_qr, x_rr = out
        x = x + self.secular * q
        x_q = x_q + self.secular
        return x, x_q, x_qq, x_r, x_qr, x_rr

    def chart(self, q, r):
        return self.eval_all(q, r)[0]

    def jac(self, q, r):
        _, x_q, _, x_r, _, _ = self.eval_all(q, r)
        return np.column_stack([x_q, x_r])

    def wrap_q(self, q):
        return self.q_lo + (q - self.q_lo) % self.length if self.periodic else q

    def q_in_range(self, q, slack=0.0):
        if self.periodic:
            return True
        return self.q_lo - slack <= q <= self.q_hi + slack

    # -- collar Hamiltonian coefficients (n = 2 fast path) ---------------------
    def coeffs2(self, metric, q, r, derivs=False):
        """(a, b, c) of H = r(a p_r^2 + 2 b p p_r + c p^2), optionally with
        their q- and r-derivatives.  Scalars; n = 2 only."""
        x, x_q, x_qq, x_r, x_qr, x_rr = self.eval_all(q, r)
        q0, q1 = x_q
        r0, r1 = x_r
        if metric.is_euclidean:
            Cb = q0 * q0 + q1 * q1
            Bb = q0 * r0 + q1 * r1
            Ab = r0 * r0 + r1 * r1
        else:
            A = metric.mat(x)
            aq = A @ x_q
            ar = A @ x_r
            Cb = float(x_q @ aq)
            Bb = float(x_q @ ar)
            Ab = float(x_r @ ar)
        det = Ab * Cb - Bb * Bb
        a = Cb / det
        b = -Bb / det
        c = Ab / det
        if not derivs:
            return a, b, c
        qq0, qq1 = x_qq
        qr0, qr1 = x_qr
        rr0, rr1 = x_rr
        if metric.is_euclidean:
            Cq = 2.0 * (q0 * qq0 + q1 * qq1)
            Bq = qq0 * r0 + qq1 * r1 + q0 * qr0 + q1 * qr1
            Aq = 2.0 * (r0 * qr0 + r1 * qr1)
            Cr = 2.0 * (q0 * qr0 + q1 * qr1)
            Br = qr0 * r0 + qr1 * r1 + q0 * rr0 + q1 * rr1
            Ar = 2.0 * (r0 * rr0 + r1 * rr1)
        else:
            dA = metric.dmat(x)
            dAq = np.tensordot(dA, x_q, axes=(0, 0))
            dAr = np.tensordot(dA, x_r, axes=(0, 0))
            Cq = 2.0 * float(x_qq @ A @ x_q) + float(x_q @ dAq @ x_q)
            Bq = float(x_qq @ A @ x_r) + float(x_q @ A @ x_qr) + float(x_q @ dAq @ x_r)
            Aq = 2.0 * float(x_qr @ A @ x_r) + float(x_r @ dAq @ x_r)
            Cr = 2.0 * float(x_qr @ A @ x_q) + float(x_q @ dAr @ x_q)
            Br = float(x_qr @ A @ x_r) + float(x_q @ A @ x_rr) + float(x_q @ dAr @ x_r)
            Ar = 2.0 * float(x_rr @ A @ x_r) + float(x_r @ dAr @ x_r)
        det_q = Aq * Cb + Ab * Cq - 2.0 * Bb * Bq
        det_r = Ar * Cb + Ab * Cr - 2.0 * Bb * Br
        inv = 1.0 / det
        a_q = Cq * inv - Cb * det_q * inv * inv
        b_q = -(Bq * inv - Bb * det_q * inv * inv)
        c_q = Aq * inv - Ab * det_q * inv * inv
        a_r = Cr * inv - Cb * det_r * inv * inv
        b_r = -(Br * inv - Bb * det_r * inv * inv)
        c_r = Ar * inv - Ab * det_r * inv * inv
        return (a, b, c), (a_q, b_q, c_q), (a_r, b_r, c_r)

    def a0(self, q):
        return self.coeffs2(self._metric, q, 0.0)[0] if hasattr(self, "_metric") else None

    # -- inverse chart ---------------------------------------------------------
    def invert(self, x, q0=None, r0=None, tol=1e-13):
        """Newton solve of chi(q, r) = x; returns (q, r)."""
        x = np.asarray(x, dtype=float)
        if q0 is None:
            d = self.boundary_points + np.outer(self.q_nodes, self.secular) - x
            i = int(np.argmin(np.einsum("ij,ij->i", d, d)))
            q0 = float(self.q_nodes[i])
        q, r = float(q0), float(0.0 if r0 is None else r0)
        r = min(max(r, 0.0), self.eps)
        scale = max(1.0, float(np.abs(x).max()))
        for _ in range(60):
            xx, x_q, _, x_r, _, _ = self.eval_all(q, r)
            f0 = xx[0] - x[0]
            f1 = xx[1] - x[1]
            if abs(f0) + abs(f1) < tol * scale:
                if self.periodic:
                    q = self.wrap_q(q)
                return q, r
            det = x_q[0] * x_r[1] - x_q[1] * x_r[0]
            dq = (x_r[1] * f0 - x_r[0] * f1) / det
            dr = (-x_q[1] * f0 + x_q[0] * f1) / det
            # keep iterates inside the fitted strip
            q -= dq
            r = min(max(r - dr, -0.1 * self.eps), 1.1 * self.eps)
            if not self.periodic and not self.q_in_range(q, slack=0.2 * self.length):
                raise CollarError("inverse chart left the patch range")
        raise CollarError(f"inverse chart Newton did not converge near {x}")


@dataclass
class CollarChart:
    """Collar charts for every boundary component of a domain."""

    eps: float
    patches: list

    def locate(self, x, phi_val=None):
        """Find (patch_index, q, r) for a point in the collar."""
        x = np.asarray(x, dtype=float)
        order = sorted(
            range(len(self.patches)),
            key=lambda i: float(
                np.min(
                    np.sum(
                        (self.patches[i].boundary_points
                         + np.outer(self.patches[i].q_nodes, self.patches[i].secular)
                         - x) ** 2,
                        axis=1,
                    )
                )
            ),
        )
        err = None
        for i in order:
            patch = self.patches[i]
            try:
                q, r = patch.invert(x, r0=phi_val)
            except CollarError as e:
                err = e
                continue
            if patch.q_in_range(q, slack=0.0 if patch.periodic else patch.runtime_margin):
                return i, q, r
        raise CollarError(f"no collar patch contains {x}" + (f" ({err})" if err else ""))


# ---------------------------------------------------------------------------
# Construction.

def _grad_flow_rhs(domain):
    metric = domain.metric
    phi = domain.phi

    if metric.is_euclidean:
        def rhs(_t, x):
            _, g = phi.value_grad(x)
            g0, g1 = g
            n2 = g0 * g0 + g1 * g1
            if n2 < 1e-16:
                raise CollarError("degenerate grad phi inside the collar")
            return (g0 / n2, g1 / n2)
        return rhs

    def rhs(_t, x):
        _, g = phi.value_grad(x)
        g = np.asarray(g)
        w = metric.inv(x) @ g
        n2 = float(g @ w)
        if n2 < 1e-16:
            raise CollarError("degenerate grad phi inside the collar")
        return w / n2

    return rhs


def _build_patch(domain, component, eps, nq, nr, rtol):
    comp = domain.boundary[component]
    table = domain.tables()[component]
    L = table.L
    n = domain.n

    if comp.periodic:
        q_nodes = L * np.arange(nq) / nq
        delta = np.asarray(comp.point(comp.t_range[1]), dtype=float) - np.asarray(
            comp.point(comp.t_range[0]), dtype=float
        )
        secular = delta / L
        q_lo, q_hi = 0.0, L
    else:
        q_nodes, _ = _cheb_nodes(0.0, L, nq)
        secular = np.zeros(n)
        q_lo, q_hi = 0.0, L

    r_nodes, rhat = _cheb_nodes(0.0, eps, nr)
    rhs = _grad_flow_rhs(domain)

    feet = np.empty((nq, n))
    data = np.empty((nq, nr, n))
    for i, qi in enumerate(q_nodes):
        x0 = np.asarray(comp.point(table.theta_of_q(qi)), dtype=float)
        feet[i] = x0
        sol = solve_ivp(
            rhs, (0.0, eps), x0, method="DOP853", t_eval=r_nodes,
            rtol=rtol, atol=1e-15, first_step=eps / 8.0,
        )
        if not sol.success:
            raise CollarError(
                f"collar ray from q={qi:.6g} failed before r={eps}: {sol.message}"
            )
        data[i] = sol.y.T
        v_end = domain.phi_value(data[i, -1])
        if abs(v_end - eps) > 1e-9:
            raise CollarError(
                f"collar ray from q={qi:.6g}: phi(chi(q, eps)) - eps = {v_end - eps:.2e}"
            )

    data = data - q_nodes[:, None, None] * secular[None, None, :]

    if comp.periodic:
        fq = np.fft.rfft(data, axis=0) / nq  # (mq, nr, n)
        w = np.full(fq.shape[0], 2.0)
        w[0] = 1.0
        if nq % 2 == 0:
            w[-1] = 1.0
        fq = fq * w[:, None, None]
        freqs = (2.0 * np.pi / L) * np.arange(fq.shape[0])
    else:
        _, qhat = _cheb_nodes(0.0, L, nq)
        flat = data.reshape(nq, -1)
        fq = _cheb.chebfit(qhat, flat, nq - 1).reshape(nq, nr, n).astype(complex)
        freqs = None

    # Chebyshev fit along r for each q-mode and component
    flat = np.moveaxis(fq, 1, 0).reshape(nr, -1)  # (nr, mq*n)
    cr = _cheb.chebfit(rhat, flat, nr - 1)
    base = np.moveaxis(cr.reshape(nr, fq.shape[0], n), [0, 1, 2], [1, 2, 0])  # (n, kr, mq)

    def dq(tensor, order):
        if comp.periodic:
            fac = (1j * freqs) ** order
            return tensor * fac[None, None, :]
        out = tensor
        for _ in range(order):
            out = _chebder_tensor(out, 2, 2.0 / L)
        return out

    def dr(tensor, order):
        out = tensor
        for _ in range(order):
            out = _chebder_tensor(out, 1, 2.0 / eps)
        return out

    tensors = np.stack(
        [base, dq(base, 1), dq(base, 2), dr(base, 1), dq(dr(base, 1), 1), dr(base, 2)]
    )

    margin = domain.collar_q_margin if not comp.periodic else 0.0
    return CollarPatch(
        component=component,
        periodic=comp.periodic,
        eps=eps,
        q_lo=q_lo,
        q_hi=q_hi,
        secular=secular,
        tensors=tensors,
        freqs=freqs,
        q_nodes=q_nodes,
        boundary_points=feet - q_nodes[:, None] * secular[None, :],
        runtime_margin=margin,
    )


def _validate_patch(domain, patch):
    eps = patch.eps
    L = patch.length
    if patch.periodic:
        qs = patch.q_lo + L * (np.arange(32) + 0.37) / 32
    else:
        lo = patch.q_lo + patch.runtime_margin
        hi = patch.q_hi - patch.runtime_margin
        qs = np.linspace(lo, hi, 32)
    rs = eps * (np.arange(1, 9) - 0.5) / 8

    phi_err = 0.0
    bdy_err = 0.0
    rt_err = 0.0
    a0_min = np.inf
    for q in qs:
        x0 = patch.chart(q, 0.0)
        bdy_err = max(bdy_err, abs(domain.phi_value(x0)))
        a, _, _ = patch.coeffs2(domain.metric, q, 0.0)
        a0_min = min(a0_min, a)
        for r in rs:
            x = patch.chart(q, r)
            phi_err = max(phi_err, abs(domain.phi_value(x) - r))
            qi, ri = patch.invert(x, q0=q, r0=r)
            dq = qi - q
            if patch.periodic:
                dq = (dq + L / 2) % L - L / 2
            rt_err = max(rt_err, abs(dq), abs(ri - r))
    patch.quality = {
        "phi_chart_max_err": phi_err,
        "boundary_max_err": bdy_err,
        "roundtrip_max_err": rt_err,
        "a0_min": a0_min,
    }
    if phi_err > 1e-8:
        raise CollarError(
            f"collar chart inaccurate: max |phi(chi(q,r)) - r| = {phi_err:.2e}"
        )
    if a0_min <= 0:
        raise CollarError(f"collar coefficient a(q,0) not positive (min {a0_min})")


def build_collar(domain: Domain, eps=None, nq=None, nr=None, rtol=1e-13):
    """Construct the collar chart(s) of a domain.

    eps defaults to the domain's configured collar width; the strip
    {0 <= phi <= eps} must be free of critical points of phi near each
    boundary component.
    """
    if domain.n != 2:
        raise GeometryError("collar charts are implemented for n = 2")
    eps = float(eps if eps is not None else domain.collar_eps)
    nq = int(nq or domain.collar_nq)
    nr = int(nr or domain.collar_nr)
    patches = []
    for ci in range(len(domain.boundary)):
        patch = _build_patch(domain, ci, eps, nq, nr, rtol)
        _validate_patch(domain, patch)
        patches.append(patch)
    return CollarChart(eps=eps, patches=patches)


def collar_hamiltonian_coeffs(domain, patch_or_chart, q, r):
    """(a, b, c) of the collar Hamiltonian H = r(a p_r^2 + 2 <p,b> p_r + <c p,p>).

    Returns (scalar, (n-1,) array, (n-1, n-1) array); c is positive definite.
    """
    patch = patch_or_chart
    if isinstance(patch_or_chart, CollarChart):
        patch = patch_or_chart.patches[0]
    if not -1e-12 <= r <= patch.eps * (1 + 1e-9):
        raise CollarError(f"r = {r} outside the collar [0, {patch.eps}]")
    a, b, c = patch.coeffs2(domain.metric, q, r)
    return a, np.array([b]), np.array([[c]])
