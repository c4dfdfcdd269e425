"""Small dense complex-matrix kernels.

Every function accepts either a single ``(M, M)`` matrix or a stack of them
with shape ``(..., M, M)`` and broadcasts over the leading axes. ``M`` is
expected to be small (at most 8); the algorithms loop over matrix indices in
Python and vectorize over the stack.
"""

import numpy as np

from .exceptions import SingularMatrix

__all__ = ["det", "adjugate", "inverse", "solve", "hermitian_outer", "PIVOT_RTOL"]

PIVOT_RTOL = 1e-13


def _as_complex_square(A):
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {A.shape}")
    return A


def _det_closed_form(A):
    M = A.shape[-1]
    if M == 1:
        return A[..., 0, 0].copy()
    if M == 2:
        return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    a, b, c = A[..., 0, 0], A[..., 0, 1], A[..., 0, 2]
    d, e, f = A[..., 1, 0], A[..., 1, 1], A[..., 1, 2]
    g, h, k = A[..., 2, 0], A[..., 2, 1], A[..., 2, 2]
    return a * (e * k - f * h) - b * (d * k - f * g) + c * (d * h - e * g)


def _det_elimination(A):
    M = A.shape[-1]
    batch_shape = A.shape[:-2]
    a = A.reshape(-1, M, M).copy()
    n_batch = a.shape[0]
    rows = np.arange(n_batch)
    out = np.ones(n_batch, dtype=np.complex128)

    for k in range(M):
        piv = k + np.argmax(np.abs(a[:, k:, k]), axis=1)
        swap = piv != k
        if np.any(swap):
            tmp = a[rows, k].copy()
            a[rows, k] = a[rows, piv]
            a[rows, piv] = tmp
            out[swap] = -out[swap]
        pivot = a[:, k, k]
        out *= pivot
        safe = np.where(pivot == 0, 1.0, pivot)
        factors = a[:, k + 1 :, k] / safe[:, None]
        a[:, k + 1 :, k:] -= factors[:, :, None] * a[:, None, k, k:]

    return out.reshape(batch_shape)


def det(A):
    """Determinant of a (stack of) small square complex matrices.

    Closed forms are used up to 3x3 and partial-pivot elimination above.
    A singular input yields 0 rather than an error.
    """
    A = _as_complex_square(A)
    if A.shape[-1] <= 3:
        return _det_closed_form(A)
    return _det_elimination(A)


def _minor(A, row, col):
    A = np.delete(A, row, axis=-2)
    return np.delete(A, col, axis=-1)


def _adjugate_by_minors(A):
    M = A.shape[-1]
    B = np.empty_like(A)
    for r in range(M):
        for c in range(M):
            sign = -1.0 if (r + c) % 2 else 1.0
            # B[c, r] is the (r, c) cofactor
            B[..., c, r] = sign * det(_minor(A, r, c))
    return B


def adjugate(A):
    """Adjugate (transposed cofactor matrix), so that ``A @ adjugate(A) = det(A) * E``.

    Column ``m`` of the result depends only on the rows of ``A`` other than
    ``m``; this is what makes the row-wise determinant expansion
    ``det(A) = A[m, :] @ adjugate(A)[:, m]`` usable in coordinate updates.
    """
    A = _as_complex_square(A)
    M = A.shape[-1]
    if M == 1:
        return np.ones_like(A)
    if M <= 4:
        return _adjugate_by_minors(A)
    try:
        return det(A)[..., None, None] * inverse(A)
    except SingularMatrix:
        return _adjugate_by_minors(A)


def _gauss_jordan(A, B):
    """Solve ``A X = B`` for stacked ``A`` (n, M, M) and ``B`` (n, M, P)."""
    n_batch, M, _ = A.shape
    a = A.copy()
    b = B.copy()
    rows = np.arange(n_batch)
    tol = PIVOT_RTOL * np.max(np.abs(A), axis=(1, 2))

    for k in range(M):
        piv = k + np.argmax(np.abs(a[:, k:, k]), axis=1)
        swap = piv != k
        if np.any(swap):
            for arr in (a, b):
                tmp = arr[rows, k].copy()
                arr[rows, k] = arr[rows, piv]
                arr[rows, piv] = tmp
        pivot = a[:, k, k].copy()
        bad = np.abs(pivot) <= tol
        if np.any(bad):
            idx = np.flatnonzero(bad)
            raise SingularMatrix(
                f"pivot below {PIVOT_RTOL:g} x max magnitude in {idx.size} "
                f"matrix(es), first at batch index {idx[0]}"
            )
        b[:, k] /= pivot[:, None]
        a[:, k] /= pivot[:, None]
        factors = a[:, :, k].copy()
        factors[:, k] = 0.0
        a -= factors[:, :, None] * a[:, None, k, :]
        b -= factors[:, :, None] * b[:, None, k, :]

    return b


def inverse(A):
    """Inverse by Gauss-Jordan elimination with partial pivoting.

    Raises
    ------
    SingularMatrix
        If a pivot falls below ``PIVOT_RTOL`` times the largest entry magnitude.
    """
    A = _as_complex_square(A)
    M = A.shape[-1]
    flat = A.reshape(-1, M, M)
    eye = np.broadcast_to(np.eye(M, dtype=np.complex128), flat.shape)
    return _gauss_jordan(flat, eye).reshape(A.shape)


def solve(A, b):
    """Solve ``A x = b`` where ``b`` is a (stack of) vector(s) ``(..., M)``."""
    A = _as_complex_square(A)
    M = A.shape[-1]
    b = np.asarray(b, dtype=np.complex128)
    batch_shape = np.broadcast_shapes(A.shape[:-2], b.shape[:-1])
    A = np.broadcast_to(A, batch_shape + (M, M))
    b = np.broadcast_to(b, batch_shape + (M,))
    x = _gauss_jordan(A.reshape(-1, M, M), b.reshape(-1, M, 1))
    return x.reshape(batch_shape + (M,))


def hermitian_outer(x):
    """Rank-one Hermitian matrix ``x x^H`` for a (stack of) vector(s)."""
    x = np.asarray(x, dtype=np.complex128)
    out = x[..., :, None] * x[..., None, :].conj()
    # complex multiply can leave a rounding-level imaginary part on the diagonal
    idx = np.arange(x.shape[-1])
    out[..., idx, idx] = x.real**2 + x.imag**2
    return out
