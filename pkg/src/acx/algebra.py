"""Pointwise linear algebra of almost complex structures on R^{2n}.

Coordinates are interleaved as (x_1, y_1, ..., x_n, y_n); the background
structure J0 rotates each (x_j, y_j) pair, i.e. multiplication by i on the
j-th complex coordinate.  A variable structure is described by an invertible
generator field g(x) with det g > 0 through J(x) = g(x) J0 g(x)^{-1}.

Normalization conventions pinned by oracle (see tests):

* ``hermitian_part`` carries no 1/2 factor: B^J = B + J^T B J.
* ``complexify`` is scaled so that the real hessian of |z|^2 under J0 maps
  to the identity hermitian matrix; concretely the scale is 1/4 and the
  real-determinant relation is det_R(B) = 16^n (det_C B_C)^2.
* Membership margins elsewhere in the package use the *averaged* hermitian
  part (1/2) B^J, whose smallest eigenvalue equals twice the smallest
  eigenvalue of the complexified form.

Every value here is immutable after construction and every operation is a
pure function, so unrestricted concurrent use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TOL_ALG = 1e-9

DEFAULT_FD_STEP = 1e-4  # centered-difference step for generator derivatives

_COMPLEXIFY_SCALE = 0.25


class AlgebraError(ValueError):
    pass


def standard_j(n: int) -> np.ndarray:
    """Block-diagonal rotation by +90 degrees on each coordinate pair."""
    j = np.zeros((2 * n, 2 * n))
    for k in range(n):
        j[2 * k, 2 * k + 1] = -1.0
        j[2 * k + 1, 2 * k] = 1.0
    return j


def _as_points(x, d: int) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        if pts.shape[0] != d:
            raise AlgebraError(f"point has dimension {pts.shape[0]}, expected {d}")
        return pts[None, :], True
    if pts.ndim != 2 or pts.shape[1] != d:
        raise AlgebraError(f"points must have shape (N, {d})")
    return pts, False


def check_symmetric(b: np.ndarray, tol: float = TOL_ALG) -> None:
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise AlgebraError("expected a square matrix")
    if np.max(np.abs(b - b.T)) > tol:
        raise AlgebraError("matrix is not symmetric within tolerance")


def check_complex_structure(j: np.ndarray, tol: float = TOL_ALG) -> None:
    d = j.shape[0]
    if np.max(np.abs(j @ j + np.eye(d))) > tol:
        raise AlgebraError("J^2 != -I within tolerance")


# ---------------------------------------------------------------------------
# complex <-> real matrix representations (interleaved coordinates)
# ---------------------------------------------------------------------------

def rep_complex(m: np.ndarray) -> np.ndarray:
    """Real 2n x 2n representation of the complex-linear map c -> M c."""
    n = m.shape[0]
    out = np.zeros((2 * n, 2 * n))
    re, im = m.real, m.imag
    for a in range(n):
        for b in range(n):
            out[2 * a, 2 * b] = re[a, b]
            out[2 * a, 2 * b + 1] = -im[a, b]
            out[2 * a + 1, 2 * b] = im[a, b]
            out[2 * a + 1, 2 * b + 1] = re[a, b]
    return out


def rep_antilinear(m: np.ndarray) -> np.ndarray:
    """Real representation of the complex-antilinear map c -> M conj(c)."""
    n = m.shape[0]
    conj = np.eye(2 * n)
    for a in range(n):
        conj[2 * a + 1, 2 * a + 1] = -1.0
    return rep_complex(m) @ conj


def linear_antilinear_split(g: np.ndarray, j0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decompose g = h + f1 into J0-commuting and J0-anticommuting parts."""
    h = 0.5 * (g - j0 @ g @ j0)
    f1 = 0.5 * (g + j0 @ g @ j0)
    return h, f1


def hermitian_part(b: np.ndarray, j: np.ndarray, tol: float = TOL_ALG) -> "HermitianForm":
    """J-hermitian symmetrization B + J^T B J (no 1/2 factor)."""
    b = np.asarray(b, dtype=float)
    check_symmetric(b, tol)
    check_complex_structure(j, tol)
    return HermitianForm(b + j.T @ b @ j, j)


def pullback(b: np.ndarray, g: np.ndarray) -> np.ndarray:
    """(g*B)(v, w) = B(gv, gw), i.e. g^T B g.  Rejects singular g."""
    b = np.asarray(b, dtype=float)
    g = np.asarray(g, dtype=float)
    if abs(np.linalg.det(g)) < 1e-300:
        raise AlgebraError("pullback by a singular transform")
    return g.T @ b @ g


def complexify(b: np.ndarray, tol: float = TOL_ALG) -> np.ndarray:
    """Hermitian n x n counterpart of a J0-hermitian real symmetric form.

    Only defined on J0-hermitian input; the entry formula is
    B_C[j, k] = (B[x_j, x_k] + i B[x_j, y_k]) / 4.
    """
    b = np.asarray(b, dtype=float)
    d = b.shape[0]
    n = d // 2
    j0 = standard_j(n)
    check_symmetric(b, tol)
    if np.max(np.abs(j0.T @ b @ j0 - b)) > max(tol, tol * np.max(np.abs(b))):
        raise AlgebraError("form is not J0-hermitian; complexification undefined")
    xs = np.arange(0, d, 2)
    ys = xs + 1
    out = _COMPLEXIFY_SCALE * (b[np.ix_(xs, xs)] + 1j * b[np.ix_(xs, ys)])
    return 0.5 * (out + out.conj().T)


def realify(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`complexify`: the J0-hermitian real form of M."""
    return realify_batch(np.asarray(m, dtype=complex)[None])[0]


def realify_batch(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    nn, n = m.shape[0], m.shape[1]
    out = np.zeros((nn, 2 * n, 2 * n))
    out[:, 0::2, 0::2] = m.real
    out[:, 1::2, 1::2] = m.real
    out[:, 0::2, 1::2] = m.imag
    out[:, 1::2, 0::2] = -m.imag
    return out / _COMPLEXIFY_SCALE


def complexify_batch(b: np.ndarray) -> np.ndarray:
    """Batched :func:`complexify` without the J0-hermitian guard; callers
    must supply J0-hermitian stacks (the output is re-hermitianized)."""
    out = _COMPLEXIFY_SCALE * (b[:, 0::2, 0::2] + 1j * b[:, 0::2, 1::2])
    return 0.5 * (out + np.conj(np.transpose(out, (0, 2, 1))))


def det_relation_constant(n: int) -> float:
    """Pinned constant in det_R(B) = kappa * (det_C B_C)^2."""
    return 16.0 ** n


@dataclass(frozen=True)
class HermitianForm:
    """Real symmetric form tagged with the complex structure it respects."""

    real: np.ndarray
    j: np.ndarray

    def __post_init__(self):
        check_symmetric(self.real, 1e-8)

    @property
    def dim(self) -> int:
        return self.real.shape[0]

    def hermitian_residual(self) -> float:
        return float(np.max(np.abs(self.j.T @ self.real @ self.j - self.real)))

    def is_j0(self, tol: float = TOL_ALG) -> bool:
        return np.max(np.abs(self.j - standard_j(self.dim // 2))) <= tol

    def complexified(self) -> np.ndarray:
        if not self.is_j0():
            raise AlgebraError("complex counterpart requires the standard structure")
        return complexify(self.real)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.real)[0])


# ---------------------------------------------------------------------------
# Almost complex structure fields
# ---------------------------------------------------------------------------

@dataclass
class AlmostComplexField:
    """Coordinate description of J = g J0 g^{-1} with derivative access.

    ``generator`` maps a batch of points (N, 2n) to generators (N, 2n, 2n);
    ``d_generator`` (optional, same batching plus a leading direction axis
    -> (N, 2n, 2n, 2n) indexed [node, direction, row, col]) supplies the
    coordinate derivatives of g.  Without it, centered differences with step
    ``fd_step`` are used.  ``constant_identity`` marks the flat preset so
    heavy callers can skip the E-term entirely.
    """

    n: int
    generator: Callable[[np.ndarray], np.ndarray]
    d_generator: Callable[[np.ndarray], np.ndarray] | None = None
    fd_step: float = DEFAULT_FD_STEP
    name: str = "custom"
    params: dict = field(default_factory=dict)
    constant_identity: bool = False

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise AlgebraError("supported complex dimensions are n in {1, 2, 3}")
        self.d = 2 * self.n
        self.j0 = standard_j(self.n)

    # -- batched evaluation -------------------------------------------------

    def g(self, x) -> np.ndarray:
        pts, single = _as_points(x, self.d)
        out = np.asarray(self.generator(pts), dtype=float)
        return out[0] if single else out

    def g_inv(self, x) -> np.ndarray:
        pts, single = _as_points(x, self.d)
        out = np.linalg.inv(self.generator(pts))
        return out[0] if single else out

    def j(self, x) -> np.ndarray:
        pts, single = _as_points(x, self.d)
        g = np.asarray(self.generator(pts), dtype=float)
        out = np.einsum("nab,bc,ncd->nad", g, self.j0, np.linalg.inv(g))
        return out[0] if single else out

    def dg(self, x) -> np.ndarray:
        pts, single = _as_points(x, self.d)
        if self.d_generator is not None:
            out = np.asarray(self.d_generator(pts), dtype=float)
        else:
            h = self.fd_step
            out = np.empty((pts.shape[0], self.d, self.d, self.d))
            for l in range(self.d):
                e = np.zeros(self.d)
                e[l] = h
                out[:, l] = (self.generator(pts + e) - self.generator(pts - e)) / (2 * h)
        return out[0] if single else out

    def dj(self, x) -> np.ndarray:
        """Coordinate derivatives of J, indexed [node, direction, row, col]."""
        pts, single = _as_points(x, self.d)
        g = np.asarray(self.generator(pts), dtype=float)
        ginv = np.linalg.inv(g)
        dg = self.dg(pts)
        j = np.einsum("nab,bc,ncd->nad", g, self.j0, ginv)
        # dJ = dg J0 g^{-1} - J dg g^{-1}
        t1 = np.einsum("nlab,bc,ncd->nlad", dg, self.j0, ginv)
        t2 = np.einsum("nab,nlbc,ncd->nlad", j, dg, ginv)
        out = t1 - t2
        return out[0] if single else out

    def e_form(self, x, p) -> np.ndarray:
        """Symmetric form of the first-order term, polarized from
        q(v) = <(grad_{Jv} J) v, p>; returns (N, 2n, 2n) or a single matrix."""
        pts, single = _as_points(x, self.d)
        pvec = np.asarray(p, dtype=float)
        if pvec.ndim == 1:
            pvec = np.broadcast_to(pvec, (pts.shape[0], self.d))
        if not np.all(np.isfinite(pvec)):
            raise AlgebraError("covector p must be finite")
        if self.constant_identity:
            out = np.zeros((pts.shape[0], self.d, self.d))
            return out[0] if single else out
        dj = self.dj(pts)
        j = self.j(pts)
        # D[l, m] = sum_k p_k dJ[l][k, m];  q(v) = v^T (J^T D) v
        dmat = np.einsum("nk,nlkm->nlm", pvec, dj)
        nmat = np.einsum("nsl,nlm->nsm", np.transpose(j, (0, 2, 1)), dmat)
        out = 0.5 * (nmat + np.transpose(nmat, (0, 2, 1)))
        return out[0] if single else out

    def e_tensor(self, x) -> np.ndarray:
        """E evaluated on the covector basis, indexed [node, k, row, col]."""
        pts, _ = _as_points(x, self.d)
        if self.constant_identity:
            return np.zeros((pts.shape[0], self.d, self.d, self.d))
        dj = self.dj(pts)
        j = self.j(pts)
        nmat = np.einsum("nsl,nlkm->nksm", np.transpose(j, (0, 2, 1)), dj)
        return 0.5 * (nmat + np.transpose(nmat, (0, 1, 3, 2)))

    def beta(self, x) -> np.ndarray:
        """Volume density det g(x) of the pulled-back reference volume."""
        pts, single = _as_points(x, self.d)
        out = np.linalg.det(self.generator(pts))
        return out[0] if single else out

    def validate(self, points, tol: float = TOL_ALG) -> float:
        """Largest residual of J^2 + I and det-positivity over the batch."""
        pts, _ = _as_points(points, self.d)
        g = np.asarray(self.generator(pts), dtype=float)
        det = np.linalg.det(g)
        if np.any(det <= 0):
            raise AlgebraError("generator must have positive determinant")
        j = np.einsum("nab,bc,ncd->nad", g, self.j0, np.linalg.inv(g))
        res = np.einsum("nab,nbc->nac", j, j) + np.eye(self.d)
        worst = float(np.max(np.abs(res)))
        if worst > tol:
            raise AlgebraError(f"J^2 + I residual {worst:.3e} exceeds {tol:.3e}")
        return worst


def lower_order_E(acx: AlmostComplexField, x, p) -> np.ndarray:
    return acx.e_form(x, p)


def real_hessian(acx: AlmostComplexField, x, jet) -> HermitianForm:
    """J(x)-hermitian real form of the intrinsic complex hessian:
    the J-symmetrization of A + E(p)."""
    p, a = jet.p, jet.a
    e = acx.e_form(x, p)
    return hermitian_part(a + e, acx.j(x))


def antilinear_normalize(acx: AlmostComplexField, x) -> tuple[np.ndarray, np.ndarray]:
    """Factor g(x) = (I + f) h with h complex-linear and f complex-antilinear.

    Errors if the complex-linear part is singular (chart too large).
    """
    g = acx.g(x)
    return antilinear_normalize_matrix(g, acx.j0)


def antilinear_normalize_matrix(g: np.ndarray, j0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, f1 = linear_antilinear_split(g, j0)
    if abs(np.linalg.det(h)) < 1e-12:
        raise AlgebraError(
            "complex-linear part of the generator is singular; shrink the chart"
        )
    f = f1 @ np.linalg.inv(h)
    return h, f


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def antilinear_generator(n: int, index: int) -> np.ndarray:
    """Fixed list of antilinear generators: real forms of c -> M conj(c)
    for M running through the complex matrix units and their i-multiples."""
    units = []
    for a in range(n):
        for b in range(n):
            m = np.zeros((n, n), dtype=complex)
            m[a, b] = 1.0
            units.append(m)
            m2 = np.zeros((n, n), dtype=complex)
            m2[a, b] = 1j
            units.append(m2)
    if not 0 <= index < len(units):
        raise AlgebraError(f"generator index {index} out of range (< {len(units)})")
    return rep_antilinear(units[index])


def _standard(n: int) -> AlmostComplexField:
    d = 2 * n

    def gen(pts):
        return np.broadcast_to(np.eye(d), (pts.shape[0], d, d)).copy()

    def dgen(pts):
        return np.zeros((pts.shape[0], d, d, d))

    return AlmostComplexField(
        n, gen, dgen, name="standard", constant_identity=True
    )


def _antilinear_linear_eps(n: int, eps: float = 0.1, generator: int = 0) -> AlmostComplexField:
    d = 2 * n
    f = antilinear_generator(n, generator)

    def gen(pts):
        return np.eye(d) + eps * pts[:, 0, None, None] * f

    def dgen(pts):
        out = np.zeros((pts.shape[0], d, d, d))
        out[:, 0] = eps * f
        return out

    return AlmostComplexField(
        n, gen, dgen, name="antilinear-linear-eps",
        params={"eps": eps, "generator": generator},
    )


def _antilinear_slice_compatible(n: int, m: int = 1, eps: float = 0.1) -> AlmostComplexField:
    """Antilinear perturbation whose 21-block vanishes on C^m x {0}.

    The 21-block is carried by the trailing coordinates, so the slice is an
    almost complex submanifold while the structure off the slice is generic;
    the 11-block varies along the slice to make the induced structure curved.
    """
    if not 1 <= m < n:
        raise AlgebraError("slice dimension m must satisfy 1 <= m < n")
    d = 2 * n

    def mmat(pts):
        nn = pts.shape[0]
        mm = np.zeros((nn, n, n), dtype=complex)
        trailing = pts[:, 2 * m:].sum(axis=1)
        mm[:, :m, :m] = pts[:, 0, None, None] * np.ones((m, m))
        mm[:, m:, :m] = trailing[:, None, None] * np.ones((n - m, m))
        mm[:, :m, m:] = 0.4 * pts[:, 1, None, None] * np.ones((m, n - m))
        mm[:, m:, m:] = (0.3 * pts[:, 0] + 0.2 * trailing)[:, None, None] * np.eye(n - m)
        return mm

    conj = np.eye(d)
    for a in range(n):
        conj[2 * a + 1, 2 * a + 1] = -1.0

    def to_real(mm):
        nn = mm.shape[0]
        out = np.zeros((nn, d, d))
        re, im = mm.real, mm.imag
        out[:, 0::2, 0::2] = re
        out[:, 0::2, 1::2] = -im
        out[:, 1::2, 0::2] = im
        out[:, 1::2, 1::2] = re
        return np.einsum("nab,bc->nac", out, conj)

    def gen(pts):
        return np.eye(d) + eps * to_real(mmat(pts))

    def dgen(pts):
        nn = pts.shape[0]
        out = np.empty((nn, d, d, d))
        h = 1e-6
        for l in range(d):
            e = np.zeros(d)
            e[l] = h
            out[:, l] = (to_real(mmat(pts + e)) - to_real(mmat(pts - e))) * (eps / (2 * h))
        return out

    return AlmostComplexField(
        n, gen, dgen, name="antilinear-slice-compatible",
        params={"eps": eps, "m": m},
    )


PRESETS = {
    "standard": _standard,
    "antilinear-linear-eps": _antilinear_linear_eps,
    "antilinear-slice-compatible": _antilinear_slice_compatible,
}


def make_structure(preset: str, n: int, **params) -> AlmostComplexField:
    if preset not in PRESETS:
        raise AlgebraError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
    return PRESETS[preset](n, **params)
