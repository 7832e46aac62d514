"""Singular value decomposition by one-sided (Hestenes) Jacobi rotations.

One-sided Jacobi orthogonalizes the columns of ``A V`` directly, which keeps
high relative accuracy on tiny singular values when columns differ wildly in
scale. That is exactly the situation of raw-unit sensitivity matrices, whose
columns span twenty orders of magnitude.
"""
from __future__ import annotations

import math

import numpy as np

from glucokin._jit import njit

_TOL = 1e-15
_MAX_SWEEPS = 80


@njit
def _hestenes(a, tol, max_sweeps):
    """Rotate column pairs of ``a`` (n >= m) until mutually orthogonal.

    Returns ``(W, V, sweeps)`` with ``A V = W`` and orthogonal ``V``.
    """
    n, m = a.shape
    w = a.copy()
    v = np.eye(m)
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        rotated = False
        for i in range(m - 1):
            for j in range(i + 1, m):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for k in range(n):
                    alpha += w[k, i] * w[k, i]
                    beta += w[k, j] * w[k, j]
                    gamma += w[k, i] * w[k, j]
                if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                sgn = 1.0 if zeta >= 0.0 else -1.0
                t = sgn / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                for k in range(n):
                    wi = w[k, i]
                    wj = w[k, j]
                    w[k, i] = c * wi - s * wj
                    w[k, j] = s * wi + c * wj
                for k in range(m):
                    vi = v[k, i]
                    vj = v[k, j]
                    v[k, i] = c * vi - s * vj
                    v[k, j] = s * vi + c * vj
        if not rotated:
            break
    return w, v, sweeps


def _complete_columns(u: np.ndarray, filled: np.ndarray) -> np.ndarray:
    """Replace the columns of ``u`` not in ``filled`` by an orthonormal completion."""
    n = u.shape[0]
    basis = [u[:, k] for k in range(u.shape[1]) if filled[k]]
    candidates = iter(np.eye(n))
    for k in range(u.shape[1]):
        if filled[k]:
            continue
        for e in candidates:
            vec = e.copy()
            for _ in range(2):
                for b in basis:
                    vec -= (b @ vec) * b
            norm = np.linalg.norm(vec)
            if norm > 1e-8:
                u[:, k] = vec / norm
                basis.append(u[:, k])
                break
    return u


def svd(matrix, *, tol: float = _TOL, max_sweeps: int = _MAX_SWEEPS):
    """Thin SVD ``A = U diag(s) V^T`` with ``s`` sorted descending.

    ``U`` is n x k, ``s`` has k entries and ``V`` is m x k with
    ``k = min(n, m)``; the columns of ``U`` and ``V`` are orthonormal.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    if a.shape[0] < a.shape[1]:
        u, s, v = svd(a.T, tol=tol, max_sweeps=max_sweeps)
        return v, s, u
    n, m = a.shape
    if m == 0:
        return np.zeros((n, 0)), np.zeros(0), np.zeros((0, 0))
    w, v, _ = _hestenes(np.ascontiguousarray(a), tol, max_sweeps)
    s = np.sqrt(np.einsum("ij,ij->j", w, w))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    w = w[:, order]
    v = v[:, order]
    positive = s > 0.0
    u = np.zeros_like(w)
    u[:, positive] = w[:, positive] / s[positive]
    if not positive.all():
        u = _complete_columns(u, positive)
    return u, s, v


def singular_values(matrix) -> np.ndarray:
    return svd(matrix)[1]
