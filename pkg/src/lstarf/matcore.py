"""Dense linear-algebra primitives.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and shape
``(rows, cols)``.  :func:`as_matrix` is the single validation point: it
rejects non-2-D input, empty dimensions and non-finite entries.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import NumericalFailure

#: Relative cutoff defining the numerical support of a singular-value vector.
RANK_RTOL = 1e-9


class SvdFactors(NamedTuple):
    """Full singular value decomposition ``m = u @ diag(sigma) @ v.T``.

    ``u`` is ``(rows, rows)``, ``v`` is ``(cols, cols)``, both orthogonal;
    ``sigma`` has length ``min(rows, cols)`` and is sorted nonincreasing.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.u @ diag_embed(self.sigma, self.u.shape[0], self.v.shape[0]) @ self.v.T


class LstarF(NamedTuple):
    nuclear: float
    frobenius: float
    difference: float


def as_matrix(m) -> np.ndarray:
    """Return ``m`` as a finite 2-D float64 array, raising ``ValueError`` otherwise."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got array with shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"matrix dimensions must be positive, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def diag_embed(x, rows: int, cols: int) -> np.ndarray:
    """Place ``x`` on the main diagonal of a ``rows x cols`` zero matrix."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros((rows, cols))
    k = min(rows, cols, x.size)
    out[np.arange(k), np.arange(k)] = x[:k]
    return out


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Trace inner product ``<a, b> = tr(a.T b)``."""
    return float(np.vdot(a, b))


# --- SVD -----------------------------------------------------------------

def svd(m, method: str = "lapack", max_sweeps: int = 60) -> SvdFactors:
    """Full SVD of ``m``.

    Parameters
    ----------
    m : array_like
        Finite real matrix.
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls the divide-and-conquer LAPACK driver through
        numpy.  ``"jacobi"`` runs a one-sided (Hestenes) Jacobi iteration
        written here; it is slower and mainly serves as a cross-check.
    max_sweeps : int
        Sweep budget for the Jacobi iteration.

    Raises
    ------
    NumericalFailure
        If the underlying iteration does not converge.
    """
    a = as_matrix(m)
    if method == "lapack":
        try:
            u, s, vt = np.linalg.svd(a, full_matrices=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"LAPACK SVD did not converge: {exc}") from exc
        return SvdFactors(u, s, vt.T)
    if method == "jacobi":
        if a.shape[0] >= a.shape[1]:
            return _jacobi_svd(a, max_sweeps)
        u, s, v = _jacobi_svd(a.T, max_sweeps)
        return SvdFactors(v, s, u)
    raise ValueError(f"unknown SVD method {method!r}")


def _jacobi_svd(a: np.ndarray, max_sweeps: int) -> SvdFactors:
    # requires rows >= cols
    m, n = a.shape
    w = a.copy()
    v = np.eye(n)
    tol = 1e-15
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp, wq = w[:, p], w[:, q]
                alpha = wp @ wp
                beta = wq @ wq
                gamma = wp @ wq
                if abs(gamma) <= tol * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                new_p = c * wp - s * wq
                new_q = s * wp + c * wq
                w[:, p], w[:, q] = new_p, new_q
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            break
    else:
        raise NumericalFailure(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

    sigma = np.linalg.norm(w, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    w = w[:, order]
    v = v[:, order]
    cutoff = max(m, n) * np.finfo(float).eps * (sigma[0] if sigma.size else 0.0)
    r = int(np.sum(sigma > cutoff))
    u_r = w[:, :r] / sigma[:r]
    # complete the left basis; QR keeps the first r columns up to sign
    q, rr = np.linalg.qr(np.hstack([u_r, np.eye(m)]), mode="complete")
    signs = np.sign(np.diag(rr)[:r])
    signs[signs == 0] = 1.0
    q[:, :r] = q[:, :r] * signs
    return SvdFactors(q, sigma, v)


def singular_values(m) -> np.ndarray:
    try:
        return np.linalg.svd(as_matrix(m), compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"LAPACK SVD did not converge: {exc}") from exc


def numerical_rank(sigma, rtol: float = RANK_RTOL) -> int:
    """Number of singular values above ``rtol * sigma[0]``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.size == 0 or sigma[0] <= 0.0:
        return 0
    return int(np.sum(sigma > rtol * sigma[0]))


# --- norms and the nuclear-minus-Frobenius functional ----------------------

def nuclear_norm(m) -> float:
    return float(np.sum(singular_values(m)))


def lstar_f(m) -> LstarF:
    """Nuclear norm, Frobenius norm and their difference, from one SVD."""
    s = singular_values(m)
    nuc = float(np.sum(s))
    fro = float(np.linalg.norm(s))
    return LstarF(nuc, fro, nuc - fro)


def lstar_f_value(sigma) -> float:
    """``||s||_1 - ||s||_2`` for a nonnegative vector."""
    sigma = np.asarray(sigma, dtype=np.float64)
    return float(np.sum(np.abs(sigma)) - np.linalg.norm(sigma))


# --- truncation and proximal operators ---------------------------------

def best_rank_r(m, r: int) -> np.ndarray:
    """Best rank-``r`` approximation in Frobenius norm (SVD truncation)."""
    a = as_matrix(m)
    t = min(a.shape)
    if not (1 <= int(r) <= t) or int(r) != r:
        raise ValueError(f"rank r must be an integer in [1, {t}], got {r}")
    r = int(r)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return (u[:, :r] * s[:r]) @ vt[:r]


def _svt(m: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"LAPACK SVD did not converge: {exc}") from exc
    shrunk = np.maximum(s - tau, 0.0)
    k = int(np.count_nonzero(shrunk))
    return (u[:, :k] * shrunk[:k]) @ vt[:k], shrunk


def svt_prox(m, tau: float) -> np.ndarray:
    """Singular value soft-thresholding.

    Returns ``argmin_Y tau*||Y||_* + 0.5*||Y - m||_F^2``.
    """
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    a = as_matrix(m)
    if tau == 0:
        return a.copy()
    return _svt(a, float(tau))[0]


def frob_subgrad(m) -> np.ndarray:
    """An element of the subdifferential of ``||.||_F`` at ``m`` (zero at the origin)."""
    a = as_matrix(m)
    nrm = np.linalg.norm(a)
    if nrm == 0.0:
        return np.zeros_like(a)
    return a / nrm
