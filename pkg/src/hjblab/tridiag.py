"""Batched tridiagonal and cyclic-tridiagonal direct solves.

Thomas elimination vectorized over an arbitrary batch of independent lines
(the leading axes); the cyclic variant handles periodic wraparound via the
Sherman-Morrison correction.  No pivoting: every system assembled by the
parabolic steppers is strictly diagonally dominant.
"""

from __future__ import annotations

import numpy as np


def solve_tridiag(lower, diag, upper, rhs):
    """Solve tri(lower, diag, upper) x = rhs along the last axis.

    ``lower[..., i]`` multiplies x[..., i-1] in row i (lower[..., 0] unused);
    ``upper[..., i]`` multiplies x[..., i+1] (upper[..., -1] unused).
    """
    lower = np.asarray(lower, dtype=float)
    diag = np.asarray(diag, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.shape[-1]

    cp = np.empty_like(diag)
    dp = np.empty_like(rhs)
    cp[..., 0] = upper[..., 0] / diag[..., 0]
    dp[..., 0] = rhs[..., 0] / diag[..., 0]
    for i in range(1, n):
        denom = diag[..., i] - lower[..., i] * cp[..., i - 1]
        cp[..., i] = upper[..., i] / denom
        dp[..., i] = (rhs[..., i] - lower[..., i] * dp[..., i - 1]) / denom

    x = np.empty_like(rhs)
    x[..., -1] = dp[..., -1]
    for i in range(n - 2, -1, -1):
        x[..., i] = dp[..., i] - cp[..., i] * x[..., i + 1]
    return x


def solve_cyclic(lower, diag, upper, rhs):
    """Solve the periodic tridiagonal system along the last axis.

    Row 0 additionally couples to x[..., -1] with weight lower[..., 0] and
    row n-1 couples to x[..., 0] with weight upper[..., -1].
    """
    lower = np.asarray(lower, dtype=float)
    diag = np.asarray(diag, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.shape[-1]
    if n < 3:
        raise ValueError("cyclic solve needs n >= 3")

    beta = lower[..., 0]   # A[0, n-1]
    alpha = upper[..., -1]  # A[n-1, 0]

    gamma = -diag[..., 0]
    d = diag.copy()
    d[..., 0] = diag[..., 0] - gamma
    d[..., -1] = diag[..., -1] - alpha * beta / gamma

    y = solve_tridiag(lower, d, upper, rhs)

    u = np.zeros_like(rhs)
    u[..., 0] = gamma
    u[..., -1] = alpha
    z = solve_tridiag(lower, d, upper, u)

    vy = y[..., 0] + (beta / gamma) * y[..., -1]
    vz = z[..., 0] + (beta / gamma) * z[..., -1]
    factor = vy / (1.0 + vz)
    return y - z * factor[..., None]
