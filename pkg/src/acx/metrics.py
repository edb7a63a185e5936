"""Metric-side hessians, mean curvature of parametrized surfaces, and the
separation of hermitian from intrinsic plurisubharmonicity.

The headline computation reproduces the spherical-metric counterexample:
for the round 2-sphere through the origin of radius r (center shifted along
the first axis) and the ambient function (1/2)|X|^2 - C x, the surface
Laplacian at the origin equals 2 - 2C/r, which is negative for C > r even
though the metric hessian at the origin is the identity.  All surface
quantities are computed from an exact conformal parametrization with
centered differences; mean curvature uses the analytic Christoffel
symbols, so the origin values are second-order accurate in the
parametrization step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .algebra import standard_j
from .lattice import ScalarField, fd_jet


class MetricError(ValueError):
    pass


@dataclass
class HermitianMetric:
    """Riemannian metric with J-orthogonality, plus analytic Christoffel
    symbols indexed Gamma[n, k, i, j]."""

    dim: int
    metric: Callable[[np.ndarray], np.ndarray]
    christoffel: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def m_at(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        out = np.asarray(self.metric(pts), dtype=float)
        if out.ndim == 2:
            out = np.broadcast_to(out, (pts.shape[0],) + out.shape)
        return out

    def gamma_at(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        out = np.asarray(self.christoffel(pts), dtype=float)
        if out.ndim == 3:
            out = np.broadcast_to(out, (pts.shape[0],) + out.shape)
        return out

    def validate(self, points, j: np.ndarray | None = None,
                 tol: float = 1e-9) -> None:
        pts = np.atleast_2d(points)
        j = standard_j(self.dim // 2) if j is None else j
        m = self.m_at(pts)
        res = np.matmul(np.matmul(j.T, m), j) - m
        if np.max(np.abs(res)) > tol:
            raise MetricError("metric is not J-orthogonal at sampled points")
        gam = self.gamma_at(pts)
        if np.max(np.abs(gam - np.transpose(gam, (0, 1, 3, 2)))) > tol:
            raise MetricError("Christoffel symbols are not symmetric")


def euclidean_metric(dim: int) -> HermitianMetric:
    return HermitianMetric(
        dim,
        lambda pts: np.eye(dim),
        lambda pts: np.zeros((np.atleast_2d(pts).shape[0], dim, dim, dim)),
        name="euclidean")


def spherical_metric_r4() -> HermitianMetric:
    """Round-sphere metric on R^4 in stereographic coordinates,
    ds^2 = |dX|^2 / (1 + |X|^2)^2.  Conformal factor exp(2 psi) with
    psi = -log(1 + |X|^2); the Christoffels follow the conformal pattern
    Gamma^k_ij = delta_ik psi_j + delta_jk psi_i - delta_ij psi_k and vanish
    at the origin, where the metric is the identity."""
    dim = 4

    def metric(pts):
        pts = np.atleast_2d(pts)
        conf = 1.0 / (1.0 + (pts ** 2).sum(axis=1)) ** 2
        return conf[:, None, None] * np.eye(dim)

    def christoffel(pts):
        pts = np.atleast_2d(pts)
        psi_grad = -2.0 * pts / (1.0 + (pts ** 2).sum(axis=1))[:, None]
        nn = pts.shape[0]
        eye = np.eye(dim)
        gam = (np.einsum("ik,nj->nkij", eye, psi_grad)
               + np.einsum("jk,ni->nkij", eye, psi_grad)
               - np.einsum("ij,nk->nkij", eye, psi_grad))
        return gam.reshape(nn, dim, dim, dim)

    return HermitianMetric(dim, metric, christoffel, name="spherical-r4")


# ---------------------------------------------------------------------------
# Hessians under the metric
# ---------------------------------------------------------------------------

def riemannian_hessian(metric: HermitianMetric, u: ScalarField,
                       node: int) -> np.ndarray:
    """(Hess u)_ij = D_ij u - Gamma^k_ij D_k u from the centered jet."""
    jet = fd_jet(u, node)
    x = u.domain.node_coords[node]
    gam = metric.gamma_at(x[None])[0]
    return jet.a - np.einsum("kij,k->ij", gam, jet.p)


def hermitian_hessian(metric: HermitianMetric, j: np.ndarray, u: ScalarField,
                      node: int) -> np.ndarray:
    """J-invariant part Hess + J^T Hess J; requires a J-orthogonal metric."""
    x = u.domain.node_coords[node]
    metric.validate(x[None], j)
    hess = riemannian_hessian(metric, u, node)
    return hess + j.T @ hess @ j


def hermitian_psh_margin(metric: HermitianMetric, j: np.ndarray,
                         u: ScalarField, node: int) -> float:
    """Smallest eigenvalue of the averaged J-invariant metric hessian
    (same normalization as the intrinsic membership margins)."""
    hc = hermitian_hessian(metric, j, u, node)
    return float(np.linalg.eigvalsh(0.5 * hc)[0])


# ---------------------------------------------------------------------------
# Parametrized surfaces
# ---------------------------------------------------------------------------

@dataclass
class ParamSurface:
    """Conformally parametrized 2-surface w = (p, q) -> R^4."""

    kind: str
    point: Callable[[float, float], np.ndarray]
    params: dict

    def chart(self, w) -> np.ndarray:
        return np.asarray(self.point(float(w[0]), float(w[1])), dtype=float)


def sphere_through_origin(r: float) -> ParamSurface:
    """Round 2-sphere (x - r)^2 + s^2 + t^2 = r^2 in the y = 0 hyperplane,
    inverse-stereographic (conformal) chart with w = 0 at the origin."""
    if r <= 0:
        raise MetricError("radius must be positive")

    def point(p, q):
        den = 1.0 + p * p + q * q
        return np.array([
            r * (1.0 + (p * p + q * q - 1.0) / den),
            0.0,
            2.0 * r * p / den,
            2.0 * r * q / den,
        ])

    return ParamSurface("sphere-through-origin", point, {"r": r})


def vertical_plane(a: float) -> ParamSurface:
    """The holomorphic curve {(a, 0)} x C (second coordinate plane)."""

    def point(p, q):
        return np.array([a, 0.0, p, q])

    return ParamSurface("vertical-plane", point, {"a": a})


def coordinate_complex_line(offset=(0.0, 0.0)) -> ParamSurface:
    """The first-coordinate complex line C x {c} inside C^2."""
    c = np.asarray(offset, dtype=float)

    def point(p, q):
        return np.array([p, q, c[0], c[1]])

    return ParamSurface("complex-line", point, {"offset": tuple(c)})


def _surface_frames(metric: HermitianMetric, surface: ParamSurface, w,
                    step: float):
    """Tangents, parameter second derivatives and base point by centered
    differences in the chart."""
    p, q = float(w[0]), float(w[1])
    f = surface.point
    x0 = np.asarray(f(p, q), dtype=float)
    tp = (np.asarray(f(p + step, q)) - np.asarray(f(p - step, q))) / (2 * step)
    tq = (np.asarray(f(p, q + step)) - np.asarray(f(p, q - step))) / (2 * step)
    dpp = (np.asarray(f(p + step, q)) + np.asarray(f(p - step, q))
           - 2 * x0) / step ** 2
    dqq = (np.asarray(f(p, q + step)) + np.asarray(f(p, q - step))
           - 2 * x0) / step ** 2
    dpq = (np.asarray(f(p + step, q + step)) - np.asarray(f(p + step, q - step))
           - np.asarray(f(p - step, q + step)) + np.asarray(f(p - step, q - step))
           ) / (4 * step ** 2)
    return x0, tp, tq, dpp, dqq, dpq


def mean_curvature(metric: HermitianMetric, surface: ParamSurface, w,
                   step: float = 1e-3) -> np.ndarray:
    """Mean curvature vector: metric trace of the second fundamental form,
    computed from the chart and the analytic Christoffels.  For the round
    sphere in the euclidean metric the magnitude is 2/r with inward normal."""
    x0, tp, tq, dpp, dqq, dpq = _surface_frames(metric, surface, w, step)
    m = metric.m_at(x0[None])[0]
    gam = metric.gamma_at(x0[None])[0]

    def cov(d2, ta, tb):
        return d2 + np.einsum("kij,i,j->k", gam, ta, tb)

    tans = np.stack([tp, tq], axis=0)
    gsurf = np.array([[tp @ m @ tp, tp @ m @ tq],
                      [tq @ m @ tp, tq @ m @ tq]])
    if abs(np.linalg.det(gsurf)) < 1e-14:
        raise MetricError("degenerate tangent frame")
    ginv = np.linalg.inv(gsurf)
    second = np.stack([
        np.stack([cov(dpp, tp, tp), cov(dpq, tp, tq)], axis=0),
        np.stack([cov(dpq, tq, tp), cov(dqq, tq, tq)], axis=0),
    ], axis=0)                                    # [a, b, k]
    trace = np.einsum("ab,abk->k", ginv, second)
    # subtract the tangential part (metric-orthogonal projection)
    coeff = ginv @ (tans @ m @ trace)
    tangential = coeff @ tans
    return trace - tangential


def laplace_beltrami(metric: HermitianMetric, surface: ParamSurface,
                     phi: Callable[[np.ndarray], float], w,
                     step: float = 1e-3) -> float:
    """Surface Laplacian in a conformal chart: (phi_pp + phi_qq) / mu with
    mu the conformal factor of the induced metric (checked within
    tolerance)."""
    x0, tp, tq, _, _, _ = _surface_frames(metric, surface, w, step)
    m = metric.m_at(x0[None])[0]
    mu_p = tp @ m @ tp
    mu_q = tq @ m @ tq
    cross = tp @ m @ tq
    if abs(mu_p - mu_q) > 1e-6 * (mu_p + mu_q) or abs(cross) > 1e-6 * mu_p:
        raise MetricError("chart is not conformal at the evaluation point")
    p, q = float(w[0]), float(w[1])
    f = surface.point

    def val(pp, qq):
        return float(phi(np.asarray(f(pp, qq), dtype=float)))

    lap = (val(p + step, q) + val(p - step, q) + val(p, q + step)
           + val(p, q - step) - 4 * val(p, q)) / step ** 2
    return lap / mu_p


def directional_derivative(phi: Callable[[np.ndarray], float], x: np.ndarray,
                           v: np.ndarray, step: float = 1e-5) -> float:
    return float((phi(x + step * v) - phi(x - step * v)) / (2 * step))


def _hessian_of_callable(metric: HermitianMetric, phi, x: np.ndarray,
                         step: float) -> np.ndarray:
    d = x.size
    a = np.empty((d, d))
    grad = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        grad[i] = (phi(x + e) - phi(x - e)) / (2 * step)
        a[i, i] = (phi(x + e) + phi(x - e) - 2 * phi(x)) / step ** 2
        for j in range(i + 1, d):
            e2 = np.zeros(d)
            e2[j] = step
            a[i, j] = a[j, i] = (
                phi(x + e + e2) - phi(x + e - e2) - phi(x - e + e2)
                + phi(x - e - e2)) / (4 * step ** 2)
    gam = metric.gamma_at(x[None])[0]
    return a - np.einsum("kij,k->ij", gam, grad), grad


# ---------------------------------------------------------------------------
# The curve identity and the separation report
# ---------------------------------------------------------------------------

def curve_identity_residual(metric: HermitianMetric, acx, phi, surface:
                          ParamSurface, w, step: float = 1e-3) -> float:
    """Residual of the holomorphic-curve identity

        H(phi)(v, v) = Hess^C(phi)(v, v) + |v|^2 H_Sigma . phi

    with the three terms computed by independent numerical routes.  Only the
    preset holomorphic cases are accepted: coordinate complex lines under
    the flat structure (any point), and the origin-tangency point of the
    shifted sphere, where the left side is evaluated as the intrinsic curve
    hessian |v|^2 Delta_Sigma(phi|_Sigma)."""
    w = np.asarray(w, dtype=float)
    x0, tp, tq, _, _, _ = _surface_frames(metric, surface, w, step)
    m = metric.m_at(x0[None])[0]
    v = tp / math.sqrt(tp @ m @ tp)      # metric-unit tangent
    vnorm2 = float(v @ m @ v)

    if surface.kind == "complex-line":
        if not acx.constant_identity:
            raise MetricError("complex-line case requires the flat structure")
        hess_amb, _ = _hessian_of_callable(euclidean_metric(4), phi, x0, step)
        j0 = standard_j(2)
        lhs = float(v @ (hess_amb + j0.T @ hess_amb @ j0) @ v) / 2.0
    elif surface.kind == "sphere-through-origin":
        if np.max(np.abs(w)) > 1e-12:
            raise MetricError(
                "sphere case is validated at the origin tangency only")
        lhs = 0.5 * vnorm2 * laplace_beltrami(metric, surface, phi, w, step)
    else:
        raise MetricError("surface is not a preset holomorphic curve")

    hess, grad = _hessian_of_callable(metric, phi, x0, step)
    j0 = standard_j(metric.dim // 2)
    hc = hess + j0.T @ hess @ j0
    term1 = 0.5 * float(v @ hc @ v)
    hvec = mean_curvature(metric, surface, w, step)
    term2 = 0.5 * vnorm2 * float(hvec @ grad)
    return abs(lhs - term1 - term2)


@dataclass
class Example95Report:
    c: float
    r: float
    laplace_beltrami_origin: float
    reference_value: float
    deviation: float
    laplace_beltrami_conformal: float
    hermitian_margin: float
    hermitian_psh_near_origin: bool
    standard_psh_fails: bool
    hessian_origin: list

    def to_dict(self) -> dict:
        return {
            "c": self.c, "r": self.r,
            "laplace_beltrami_origin": self.laplace_beltrami_origin,
            "reference_value": self.reference_value,
            "deviation": self.deviation,
            "laplace_beltrami_conformal": self.laplace_beltrami_conformal,
            "hermitian_margin": self.hermitian_margin,
            "hermitian_psh_near_origin": self.hermitian_psh_near_origin,
            "standard_psh_fails": self.standard_psh_fails,
            "hessian_origin": self.hessian_origin,
        }


def example95_report(c: float, r: float, step: float | None = None) -> Example95Report:
    """Separation of hermitian and standard plurisubharmonicity on the
    spherical metric: for phi = (1/2)|X|^2 - C x the metric hessian at the
    origin is the identity (hermitian-psh nearby) while the surface
    Laplacian along the shifted sphere is 2 - 2C/r, negative for C > r."""
    if c < 0 or r <= 0:
        raise MetricError("C must be nonnegative and r positive")
    step = r / 64.0 if step is None else step
    metric = spherical_metric_r4()
    surface = sphere_through_origin(r)

    def phi(x):
        return 0.5 * float((x ** 2).sum()) - c * float(x[0])

    origin = np.zeros(4)
    hess, grad = _hessian_of_callable(metric, phi, origin, step)
    j0 = standard_j(2)
    hc = hess + j0.T @ hess @ j0
    margin = float(np.linalg.eigvalsh(0.5 * hc)[0])

    # identity route: tangential trace of the hessian plus the mean
    # curvature derivative
    _, tp, tq, _, _, _ = _surface_frames(metric, surface, (0.0, 0.0), step)
    e1 = tp / np.linalg.norm(tp)
    e2 = tq / np.linalg.norm(tq)
    tr_tan = float(e1 @ hess @ e1 + e2 @ hess @ e2)
    hvec = mean_curvature(metric, surface, (0.0, 0.0), step)
    lb_identity = tr_tan + float(hvec @ grad)

    # independent conformal-chart route
    lb_conf = laplace_beltrami(metric, surface, phi, (0.0, 0.0), step)

    ref = 2.0 - 2.0 * c / r
    # the failure witness must clear the scheme's own resolution
    noise = 20.0 * step ** 2
    return Example95Report(
        c=c, r=r,
        laplace_beltrami_origin=lb_identity,
        reference_value=ref,
        deviation=abs(lb_identity - ref),
        laplace_beltrami_conformal=lb_conf,
        hermitian_margin=margin,
        hermitian_psh_near_origin=bool(margin > noise),
        standard_psh_fails=bool(lb_identity < -noise),
        hessian_origin=hess.tolist(),
    )
