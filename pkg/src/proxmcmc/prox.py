"""Euclidean projections and proximal maps used by the smoothed posteriors.

Every constraint in the models is an indicator function, so its proximal map
is a projection. Epigraph projections reduce to soft-thresholding at a
threshold chosen by a scalar root search.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

TOL_ROOT = 1e-10
TOL_BRACKET = 1e-12
TOL_SET = 1e-8
MAX_DOUBLINGS = 200


class DomainError(ValueError):
    """Input outside the domain of an operator."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to produce a result."""


@dataclass(frozen=True)
class ProjectionResult:
    """Projected point, projected epigraph height (or None) and distance."""

    point: np.ndarray
    alpha: Optional[float]
    distance: float


def soft_threshold(x, lam):
    """Componentwise soft-thresholding, the prox of ``lam * ||.||_1``."""
    if lam < 0:
        raise DomainError(f"threshold must be nonnegative, got {lam}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def find_epigraph_root(
    phi: Callable[[float], float],
    hi_init: float,
    tol_root: float = TOL_ROOT,
    tol_bracket: float = TOL_BRACKET,
) -> float:
    """Root of a nonincreasing scalar function with ``phi(0+) > 0`` by bisection.

    The upper end of the bracket starts at `hi_init` and is doubled until
    ``phi(hi) <= 0``.
    """
    if not hi_init > 0:
        raise DomainError(f"hi_init must be positive, got {hi_init}")
    lo, hi = 0.0, float(hi_init)
    doublings = 0
    while phi(hi) > 0:
        lo, hi = hi, 2.0 * hi
        doublings += 1
        if doublings > MAX_DOUBLINGS or not np.isfinite(hi):
            raise NumericalError("bracket growth did not find a sign change")
    while hi - lo > tol_bracket:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            # bracket is at floating-point resolution
            break
        val = phi(mid)
        if abs(val) <= tol_root:
            return mid
        if val > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _l1_threshold_exact(a: np.ndarray, alpha: float) -> float:
    """Exact root of ``sum(max(a - t, 0)) - t - alpha`` for ``a >= 0``.

    The function is piecewise linear with kinks at the entries of `a`; the
    root lies on the unique segment where the sign changes.
    """
    srt = np.sort(a)[::-1]
    csum = np.concatenate(([0.0], np.cumsum(srt)))
    k = np.arange(srt.size + 1)
    cand = (csum - alpha) / (k + 1)
    upper = np.concatenate(([np.inf], srt))
    lower = np.concatenate((srt, [0.0]))
    ok = (cand < upper) & (cand >= lower)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        # ties at float resolution; fall back to the nearest segment
        idx = [int(np.argmin(np.maximum(cand - upper, 0) + np.maximum(lower - cand, 0)))]
    return float(cand[idx[0]])


def _l1_phi(a: np.ndarray, alpha: float) -> Callable[[float], float]:
    return lambda t: float(np.maximum(a - t, 0.0).sum() - t - alpha)


def l1_epigraph_threshold(a, alpha, method: str = "exact") -> float:
    """Threshold ``t*`` solving ``||S_t(a)||_1 = alpha + t`` for an infeasible pair.

    ``method="bisect"`` runs the generic bracketing search; ``"exact"``
    locates the active segment of the piecewise-linear root function
    directly. Both return the same root to bisection tolerance.
    """
    a = np.abs(np.asarray(a, dtype=float)).ravel()
    if method == "exact":
        return _l1_threshold_exact(a, alpha)
    if method == "bisect":
        return find_epigraph_root(_l1_phi(a, alpha), max(a.sum() - alpha, 1.0))
    raise DomainError(f"unknown root method {method!r}")


def _check_finite(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise DomainError("non-finite input to projection")


def project_l1_epigraph(beta, alpha, mask=None, method: str = "exact") -> ProjectionResult:
    """Project ``(beta, alpha)`` onto ``{(b, a): ||b||_1 <= a}``.

    Parameters
    ----------
    beta : array_like
        Point to project, any shape.
    alpha : float
        Epigraph height. Nonpositive heights are legal and handled by the
        same root search.
    mask : array_like of bool, optional
        Entries of `beta` that enter the norm. Entries outside the mask are
        unconstrained and returned unchanged.
    method : {"exact", "bisect"}
        Root search used for the threshold.
    """
    beta = np.asarray(beta, dtype=float)
    alpha = float(alpha)
    _check_finite(beta, alpha)
    sub = beta if mask is None else beta[mask]
    norm = np.abs(sub).sum()
    if norm <= alpha:
        return ProjectionResult(beta.copy(), alpha, 0.0)
    t = l1_epigraph_threshold(sub, alpha, method=method)
    point = beta.copy()
    if mask is None:
        point = soft_threshold(beta, t)
    else:
        point[mask] = soft_threshold(sub, t)
    diff = beta - point
    dist = float(np.sqrt(np.sum(diff * diff) + t * t))
    return ProjectionResult(point, alpha + t, dist)


def project_nuclear_epigraph(X, alpha, method: str = "exact") -> ProjectionResult:
    """Project ``(X, alpha)`` onto ``{(Y, a): ||Y||_* <= a}`` via the SVD of `X`."""
    X = np.asarray(X, dtype=float)
    alpha = float(alpha)
    _check_finite(X, alpha)
    try:
        U, sig, Vt = np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    if sig.sum() <= alpha:
        return ProjectionResult(X.copy(), alpha, 0.0)
    t = l1_epigraph_threshold(sig, alpha, method=method)
    shrunk = np.maximum(sig - t, 0.0)
    point = (U * shrunk) @ Vt
    # ||X - P||_F equals the shift of the singular values
    dist = float(np.sqrt(np.sum((sig - shrunk) ** 2) + t * t))
    return ProjectionResult(point, alpha + t, dist)


def project_rank_le_k(B, k: int) -> np.ndarray:
    """Best rank-`k` approximation of `B` (truncated SVD).

    With a tie ``sigma_k == sigma_{k+1}`` the projection is not unique; the
    element returned is whichever the LAPACK SVD ordering yields.
    """
    B = np.asarray(B, dtype=float)
    if not 1 <= k <= min(B.shape):
        raise DomainError(f"rank {k} outside [1, {min(B.shape)}]")
    if k == min(B.shape):
        return B.copy()
    U, sig, Vt = np.linalg.svd(B, full_matrices=False)
    return (U[:, :k] * sig[:k]) @ Vt[:k]


def project_hyperplane(beta, A, b) -> np.ndarray:
    """Project `beta` onto ``{x: A x = b}``; one-shot form of :class:`Hyperplane`."""
    return Hyperplane(A, b).project(beta).point


class EpigraphSet:
    """Closed set with a Euclidean projection.

    Epigraph sets (``is_epigraph``) act on pairs ``(point, alpha)``; the
    others act on the point alone.
    """

    kind = ""
    is_epigraph = False
    convex = True

    def project(self, x, alpha=None) -> ProjectionResult:
        raise NotImplementedError

    def residual(self, x, alpha=None) -> float:
        """Constraint violation; zero (up to roundoff) for members."""
        raise NotImplementedError


class L1Ball(EpigraphSet):
    """Epigraph of the l1 norm, optionally restricted to masked entries."""

    kind = "L1Ball"
    is_epigraph = True

    def __init__(self, shape, mask=None, method: str = "exact"):
        self.shape = tuple(int(d) for d in np.atleast_1d(shape))
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)
        if self.mask is not None and self.mask.shape != self.shape:
            raise DomainError("mask shape does not match set shape")
        self.method = method

    def norm(self, x) -> float:
        x = np.asarray(x)
        return float(np.abs(x if self.mask is None else x[self.mask]).sum())

    def project(self, x, alpha=None) -> ProjectionResult:
        return project_l1_epigraph(x, alpha, mask=self.mask, method=self.method)

    def residual(self, x, alpha=None) -> float:
        return max(self.norm(x) - alpha, 0.0)


class NuclearBall(EpigraphSet):
    """Epigraph of the nuclear norm."""

    kind = "NuclearBall"
    is_epigraph = True

    def __init__(self, shape, method: str = "exact"):
        self.shape = tuple(shape)
        self.method = method

    def norm(self, x) -> float:
        return float(np.linalg.svd(np.asarray(x, dtype=float), compute_uv=False).sum())

    def project(self, x, alpha=None) -> ProjectionResult:
        return project_nuclear_epigraph(x, alpha, method=self.method)

    def residual(self, x, alpha=None) -> float:
        return max(self.norm(x) - alpha, 0.0)


class Hyperplane(EpigraphSet):
    """Affine set ``{x: A x = b}`` with ``A`` of full row rank."""

    kind = "Hyperplane"

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if b.shape != (A.shape[0],):
            raise DomainError(f"b has shape {b.shape}, expected ({A.shape[0]},)")
        if np.linalg.matrix_rank(A) < A.shape[0]:
            raise DomainError("A must have full row rank")
        self.A, self.b = A, b
        self.shape = (A.shape[1],)
        self._chol = scipy.linalg.cho_factor(A @ A.T)

    def project(self, x, alpha=None) -> ProjectionResult:
        x = np.asarray(x, dtype=float)
        _check_finite(x)
        corr = self.A.T @ scipy.linalg.cho_solve(self._chol, self.A @ x - self.b)
        return ProjectionResult(x - corr, None, float(np.linalg.norm(corr)))

    def residual(self, x, alpha=None) -> float:
        return float(np.max(np.abs(self.A @ np.asarray(x) - self.b)))


class RankLeK(EpigraphSet):
    """Matrices of rank at most ``k`` (closure of the fixed-rank set)."""

    kind = "RankLeK"
    convex = False

    def __init__(self, shape, k: int):
        self.shape = tuple(shape)
        if not 1 <= k <= min(self.shape):
            raise DomainError(f"rank {k} outside [1, {min(self.shape)}]")
        self.k = int(k)

    def project(self, x, alpha=None) -> ProjectionResult:
        x = np.asarray(x, dtype=float)
        _check_finite(x)
        point = project_rank_le_k(x, self.k)
        return ProjectionResult(point, None, float(np.linalg.norm(x - point)))

    def residual(self, x, alpha=None) -> float:
        sig = np.linalg.svd(np.asarray(x, dtype=float), compute_uv=False)
        return float(sig[self.k:].max(initial=0.0))
