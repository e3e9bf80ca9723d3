"""Brute-force dense references.

Deliberately independent of the tile kernels: unblocked scalar loops only,
single threaded. Used as ground truth by the tests and the ``verify`` command.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import InvalidArgumentError, NotSPDError, OracleGuardError

MAX_ORACLE_N = 4000
REL_FLOOR = 1e-30


@njit(cache=True)
def _cholesky(A, L):
    n = A.shape[0]
    for j in range(n):
        d = A[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if not d > 0.0:
            return j
        d = np.sqrt(d)
        L[j, j] = d
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / d
    return -1


@njit(cache=True)
def _inverse_from_cholesky(L, S):
    # column c of S = L^{-T} L^{-1} e_c: forward solve L y = e_c, back solve L^T x = y
    n = L.shape[0]
    Lt = np.ascontiguousarray(L.T)
    y = np.zeros(n)
    x = np.zeros(n)
    for c in range(n):
        for i in range(c):
            y[i] = 0.0
        y[c] = 1.0 / L[c, c]
        for i in range(c + 1, n):
            s = 0.0
            for k in range(c, i):
                s -= L[i, k] * y[k]
            y[i] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = y[i]
            for k in range(i + 1, n):
                s -= Lt[i, k] * x[k]
            x[i] = s / L[i, i]
        for i in range(n):
            S[i, c] = x[i]


def _check(A):
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] > MAX_ORACLE_N:
        raise OracleGuardError(f"dense oracle refuses n={A.shape[0]} > {MAX_ORACLE_N}")
    if not np.all(np.isfinite(A)):
        raise InvalidArgumentError("matrix has non-finite entries")
    return A


def dense_cholesky_ref(A) -> np.ndarray:
    A = _check(A)
    L = np.zeros_like(A)
    p = _cholesky(A, L)
    if p >= 0:
        raise NotSPDError(p, index=p)
    return L


def dense_inverse_ref(A) -> np.ndarray:
    L = dense_cholesky_ref(A)
    S = np.zeros_like(L)
    _inverse_from_cholesky(L, S)
    return S


def max_rel_error(reference, candidate, floor: float = REL_FLOOR) -> float:
    """Largest entrywise ``|cand - ref| / max(|ref|, floor)``."""
    ref = np.asarray(reference, dtype=np.float64).ravel()
    cand = np.asarray(candidate, dtype=np.float64).ravel()
    if ref.shape != cand.shape:
        raise InvalidArgumentError(f"length mismatch: {ref.size} vs {cand.size}")
    if ref.size == 0:
        return 0.0
    return float(np.max(np.abs(cand - ref) / np.maximum(np.abs(ref), floor)))
