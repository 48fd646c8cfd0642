"""Small dense symmetric linear algebra and the index contractions used by
the relation coefficients.

Matrices and 3-tensors are plain ``numpy`` arrays; the dimension is tiny
(d <= ~20) so full storage and O(d^3) factorizations are fine.
"""
from enum import Enum

import numpy as np
from scipy import linalg

from .errors import DimMismatch, SingularMatrix, UnknownPattern

SYM_RTOL = 1e-12
PIVOT_RTOL = 1e-12


class ContractionPattern(str, Enum):
    """Index templates, with J the first matrix and K the second.

    MIXED        c^a = J^{ab} K^{cd} T_{bd,c}
    FULL         c^a = J^{ab} K^{cd} T_{bcd}
    FULL_WITH_F  c^a = J^{ab} J^{cd} K^{ef} T_{bce} F_{df}
    SANDWICH     B^{ab} = J^{ac} K^{bd} T_{cd}
    TRACE        s = J^{ab} T_{ab}
    """

    MIXED = "mixed"
    FULL = "full"
    FULL_WITH_F = "full_with_f"
    SANDWICH = "sandwich"
    TRACE = "trace"


def is_symmetric(m, rtol=SYM_RTOL):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(np.max(np.abs(m)), 1e-300)
    return bool(np.max(np.abs(m - m.T)) <= rtol * scale)


def symmetry_class(t, rtol=SYM_RTOL):
    """Return ``"full"``, ``"first_two"`` or ``None`` for a d x d x d array."""
    t = np.asarray(t, dtype=float)
    if t.ndim != 3 or len(set(t.shape)) != 1:
        raise DimMismatch(f"expected a cubic 3-tensor, got shape {t.shape}")
    scale = max(np.max(np.abs(t)), 1e-300)
    tol = rtol * scale
    if np.max(np.abs(t - t.transpose(1, 0, 2))) > tol:
        return None
    for perm in ((0, 2, 1), (2, 1, 0)):
        if np.max(np.abs(t - t.transpose(perm))) > tol:
            return "first_two"
    return "full"


def _check_square(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimMismatch(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    return m


def invert_spd(m):
    """Invert a symmetric positive definite matrix through its Cholesky factor.

    Raises :class:`SingularMatrix` when a pivot falls below
    ``1e-12 * trace(m) / d``, i.e. the point is not regular.
    """
    m = _check_square(m)
    d = m.shape[0]
    if not is_symmetric(m, rtol=1e-8):
        raise DimMismatch("invert_spd expects a symmetric matrix")
    m = 0.5 * (m + m.T)
    floor = PIVOT_RTOL * abs(np.trace(m)) / d
    try:
        factor = linalg.cholesky(m, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularMatrix("matrix is not positive definite") from exc
    pivots = np.diag(factor) ** 2
    if np.trace(m) <= 0 or np.min(pivots) <= floor:
        raise SingularMatrix(
            f"Cholesky pivot {np.min(pivots):.3e} below threshold {floor:.3e}"
        )
    inv = linalg.cho_solve((factor, True), np.eye(d))
    return 0.5 * (inv + inv.T)


def quad_form(J, u, v):
    """Evaluate ``J^{ab} u_a v_b``."""
    J = _check_square(J)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (J.shape[0],) or v.shape != (J.shape[0],):
        raise DimMismatch(f"vectors {u.shape}, {v.shape} do not match matrix {J.shape}")
    return float(u @ J @ v)


_SUBSCRIPTS = {
    ContractionPattern.MIXED: "ab,cd,bdc->a",
    ContractionPattern.FULL: "ab,cd,bcd->a",
    ContractionPattern.SANDWICH: "ac,bd,cd->ab",
    ContractionPattern.TRACE: "ab,ab->",
}


def contract_jjt(J, J2, t, pattern, F=None):
    """Contract two inverse-Hessian-like matrices against a tensor.

    ``pattern`` picks one of the fixed templates in :class:`ContractionPattern`;
    ``FULL_WITH_F`` also needs ``F``. For ``TRACE`` the second matrix is
    ignored and ``t`` is a matrix.
    """
    try:
        pattern = ContractionPattern(pattern)
    except ValueError as exc:
        raise UnknownPattern(f"unknown contraction pattern {pattern!r}") from exc
    J = _check_square(J, "J")
    d = J.shape[0]
    t = np.asarray(t, dtype=float)
    if pattern is ContractionPattern.TRACE:
        if t.shape != (d, d):
            raise DimMismatch(f"trace pattern needs a {d}x{d} matrix, got {t.shape}")
        return float(np.einsum(_SUBSCRIPTS[pattern], J, t))
    J2 = _check_square(J2, "J2")
    if J2.shape != J.shape:
        raise DimMismatch(f"J {J.shape} and J2 {J2.shape} differ")
    if pattern is ContractionPattern.SANDWICH:
        if t.shape != (d, d):
            raise DimMismatch(f"sandwich pattern needs a {d}x{d} matrix, got {t.shape}")
        return np.einsum(_SUBSCRIPTS[pattern], J, J2, t)
    if t.shape != (d, d, d):
        raise DimMismatch(f"expected a {d}x{d}x{d} tensor, got {t.shape}")
    if pattern is ContractionPattern.FULL_WITH_F:
        if F is None:
            raise DimMismatch("FULL_WITH_F needs the matrix F")
        F = _check_square(F, "F")
        if F.shape != J.shape:
            raise DimMismatch(f"F {F.shape} does not match J {J.shape}")
        return np.einsum("ab,cd,ef,bce,df->a", J, J, J2, t, F)
    return np.einsum(_SUBSCRIPTS[pattern], J, J2, t)
