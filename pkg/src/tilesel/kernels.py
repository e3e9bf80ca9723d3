"""Dense b x b tile kernels.

All floating-point work of the factorization and the inversion happens here.
The loops are compiled with numba (``nogil`` so worker threads overlap) and
never use fast-math, so every output element is accumulated in a fixed order:
ascending inner index, one rounding per multiply and per add. Results are
therefore bitwise reproducible regardless of which thread calls them.

Triangular operands are passed with an explicit ``lower`` flag; the opposite
triangle of a triangular tile is never read.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import InvalidArgumentError, NotSPDError, SingularTileError

_jit = njit(cache=True, nogil=True, fastmath=False, error_model="numpy")


@_jit
def _potrf(A, L):
    b = A.shape[0]
    for j in range(b):
        s = A[j, j]
        for p in range(j):
            s -= L[j, p] * L[j, p]
        if not s > 0.0:
            return j
        d = np.sqrt(s)
        L[j, j] = d
        for i in range(j + 1, b):
            s = A[i, j]
            for p in range(j):
                s -= L[i, p] * L[j, p]
            L[i, j] = s / d
    return -1


@_jit
def _trsm_left(T, B, lower, X):
    # Solves T X = B for triangular T; X may alias B.
    b = T.shape[0]
    m = B.shape[1]
    if lower:
        for i in range(b):
            d = T[i, i]
            if d == 0.0:
                return i
            for c in range(m):
                X[i, c] = B[i, c]
            for p in range(i):
                t = T[i, p]
                for c in range(m):
                    X[i, c] -= t * X[p, c]
            for c in range(m):
                X[i, c] = X[i, c] / d
    else:
        for i in range(b - 1, -1, -1):
            d = T[i, i]
            if d == 0.0:
                return i
            for c in range(m):
                X[i, c] = B[i, c]
            for p in range(i + 1, b):
                t = T[i, p]
                for c in range(m):
                    X[i, c] -= t * X[p, c]
            for c in range(m):
                X[i, c] = X[i, c] / d
    return -1


@_jit
def _trtri(T, lower, X):
    b = T.shape[0]
    for i in range(b):
        if T[i, i] == 0.0:
            return i
    if lower:
        # column c of the inverse: forward substitution from row c down
        for c in range(b):
            X[c, c] = 1.0 / T[c, c]
            for i in range(c + 1, b):
                s = 0.0
                for p in range(c, i):
                    s -= T[i, p] * X[p, c]
                X[i, c] = s / T[i, i]
    else:
        for c in range(b):
            X[c, c] = 1.0 / T[c, c]
            for i in range(c - 1, -1, -1):
                s = 0.0
                for p in range(i + 1, c + 1):
                    s -= T[i, p] * X[p, c]
                X[i, c] = s / T[i, i]
    return -1


@_jit
def _gemm(C, A, B, alpha):
    # C += alpha * A @ B ; each C[i, j] accumulates over k ascending
    n = C.shape[0]
    kk = A.shape[1]
    m = C.shape[1]
    for i in range(n):
        for k in range(kk):
            a = alpha * A[i, k]
            for j in range(m):
                C[i, j] += a * B[k, j]


@_jit
def _syrk_lower(C, A, out):
    # out = C - A A^T, lower computed then mirrored
    b = C.shape[0]
    kk = A.shape[1]
    for i in range(b):
        for j in range(i + 1):
            s = C[i, j]
            for k in range(kk):
                s -= A[i, k] * A[j, k]
            out[i, j] = s
    for i in range(b):
        for j in range(i + 1, b):
            out[i, j] = out[j, i]


@_jit
def _trmm_left(T, B, lower, X):
    # X = T B for triangular T (opposite triangle ignored)
    b = T.shape[0]
    m = B.shape[1]
    for i in range(b):
        for c in range(m):
            X[i, c] = 0.0
        lo = 0 if lower else i
        hi = i + 1 if lower else b
        for p in range(lo, hi):
            t = T[i, p]
            for c in range(m):
                X[i, c] += t * B[p, c]


@_jit
def _lauum(T, lower, out):
    # out = T T^T (lower computed, mirrored)
    b = T.shape[0]
    for i in range(b):
        for j in range(i + 1):
            s = 0.0
            if lower:
                for k in range(j + 1):
                    s += T[i, k] * T[j, k]
            else:
                for k in range(i, b):
                    s += T[i, k] * T[j, k]
            out[i, j] = s
    for i in range(b):
        for j in range(i + 1, b):
            out[i, j] = out[j, i]


def _f64(a):
    return np.asarray(a, dtype=np.float64)


def _square(a, name):
    a = _f64(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"{name} must be a square tile, got shape {a.shape}")
    return a


def potrf(A) -> np.ndarray:
    """Cholesky factor of a symmetric tile; only the lower triangle of ``A`` is read."""
    A = _square(A, "A")
    L = np.zeros_like(A)
    p = _potrf(A, L)
    if p >= 0:
        raise NotSPDError(p)
    return L


def trtri(T, lower: bool = True) -> np.ndarray:
    """Inverse of a triangular tile, same orientation."""
    T = _square(T, "T")
    X = np.zeros_like(T)
    p = _trtri(T, lower, X)
    if p >= 0:
        raise SingularTileError(p)
    return X


def trsm(T, B, side: str = "left", lower: bool = True, trans: bool = False) -> np.ndarray:
    """Triangular solve with multiple right-hand sides.

    Returns ``X`` with ``op(T) X = B`` for ``side="left"`` or ``X op(T) = B`` for
    ``side="right"``, where ``op(T)`` is ``T.T`` if ``trans`` else ``T``. The
    Cholesky panel update ``L_ij = A_ij L_jj^{-T}`` is ``trsm(L_jj, A_ij, "right", True, True)``.
    """
    T = _square(T, "T")
    B = _f64(B)
    if side == "left":
        if B.shape[0] != T.shape[0]:
            raise InvalidArgumentError(f"shape mismatch: T {T.shape}, B {B.shape}")
        Tv, low = (T.T, not lower) if trans else (T, lower)
        X = np.empty(B.shape)
        p = _trsm_left(Tv, B, low, X)
    elif side == "right":
        if B.shape[1] != T.shape[0]:
            raise InvalidArgumentError(f"shape mismatch: T {T.shape}, B {B.shape}")
        # X op(T) = B  <=>  op(T)^T X^T = B^T
        Tv, low = (T, lower) if trans else (T.T, not lower)
        Xt = np.empty((B.shape[1], B.shape[0]))
        p = _trsm_left(Tv, B.T, low, Xt)
        X = np.ascontiguousarray(Xt.T)
    else:
        raise InvalidArgumentError(f"side must be 'left' or 'right', got {side!r}")
    if p >= 0:
        raise SingularTileError(p)
    return X


def gemm(C, A, B, trans_a: bool = False, trans_b: bool = False, alpha: float = 1.0,
         overwrite_c: bool = False) -> np.ndarray:
    """``C + alpha * op(A) @ op(B)``; with ``overwrite_c`` the update is done in place."""
    A = _f64(A)
    B = _f64(B)
    opA = A.T if trans_a else A
    opB = B.T if trans_b else B
    C = _f64(C)
    if opA.ndim != 2 or opB.ndim != 2 or opA.shape[1] != opB.shape[0] or C.shape != (opA.shape[0], opB.shape[1]):
        raise InvalidArgumentError(f"shape mismatch: C {C.shape}, op(A) {opA.shape}, op(B) {opB.shape}")
    if not overwrite_c or not C.flags.writeable:
        C = C.copy()
    _gemm(C, opA, opB, float(alpha))
    return C


def syrk(C, A) -> np.ndarray:
    """``C - A @ A.T`` as a fully mirrored symmetric tile (lower of ``C`` is read)."""
    C = _square(C, "C")
    A = _f64(A)
    if A.ndim != 2 or A.shape[0] != C.shape[0]:
        raise InvalidArgumentError(f"shape mismatch: C {C.shape}, A {A.shape}")
    out = np.empty_like(C)
    _syrk_lower(C, A, out)
    return out


def trmm(T, B, side: str = "left", lower: bool = True, trans: bool = False) -> np.ndarray:
    """``op(T) @ B`` (``side="left"``) or ``B @ op(T)`` (``side="right"``)."""
    T = _square(T, "T")
    B = _f64(B)
    if side == "left":
        if B.shape[0] != T.shape[0]:
            raise InvalidArgumentError(f"shape mismatch: T {T.shape}, B {B.shape}")
        Tv, low = (T.T, not lower) if trans else (T, lower)
        X = np.empty(B.shape)
        _trmm_left(Tv, B, low, X)
        return X
    if side == "right":
        if B.shape[1] != T.shape[0]:
            raise InvalidArgumentError(f"shape mismatch: T {T.shape}, B {B.shape}")
        # B op(T) = (op(T)^T B^T)^T
        Tv, low = (T, lower) if trans else (T.T, not lower)
        Xt = np.empty((B.shape[1], B.shape[0]))
        _trmm_left(Tv, B.T, low, Xt)
        return np.ascontiguousarray(Xt.T)
    raise InvalidArgumentError(f"side must be 'left' or 'right', got {side!r}")


def lauum(T, lower: bool = True) -> np.ndarray:
    """``T @ T.T`` for a triangular tile, mirrored to full symmetric storage."""
    T = _square(T, "T")
    out = np.empty_like(T)
    _lauum(T, lower, out)
    return out


def mirror_lower(C) -> np.ndarray:
    """Copy the strict lower triangle of ``C`` onto its upper triangle, in place."""
    iu = np.triu_indices(C.shape[0], 1)
    C[iu] = C.T[iu]
    return C
