"""Smoothed posterior log-densities and their gradients.

Every model works on a flat, unconstrained parameter vector. Positive
scalars (noise variance, epigraph height) are sampled on the log scale, and
the log-Jacobian of that change of variables is folded into the prior
terms. Log-densities are unnormalized. For all models the dropped constants
are the Gaussian ``-(n/2) log(2 pi)`` and the inverse-gamma normalizers
``s log r - log Gamma(s)``; none depend on the envelope scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special

from .envelope import EnvelopeTerm
from .prox import DomainError, Hyperplane, L1Ball, NuclearBall, RankLeK, l1_epigraph_threshold


@dataclass(frozen=True)
class InverseGammaPrior:
    """``IG(r, s)`` with scale `r` and shape `s` (density ~ v^-(s+1) exp(-r/v))."""

    r: float
    s: float

    def __post_init__(self):
        if not (self.r > 0 and self.s > 0):
            raise DomainError(f"inverse-gamma parameters must be positive, got {self}")

    def log_density_log(self, log_v: float) -> float:
        """Unnormalized log-density of ``log v`` (Jacobian included)."""
        return -self.s * log_v - self.r * np.exp(-log_v)

    def grad_log(self, log_v: float) -> float:
        return -self.s + self.r * np.exp(-log_v)

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(v > 0, scipy.special.gammaincc(self.s, self.r / v), 0.0)


def epigraph_prior_marginal(t, prior: InverseGammaPrior):
    """Marginal density of a scalar under a flat prior on ``|b| <= alpha``, ``alpha ~ prior``.

    Closed form ``s / (2 r) * (1 - F(|t|))`` with ``F`` the ``IG(r, s + 1)`` cdf.
    """
    t = np.abs(np.asarray(t, dtype=float))
    with np.errstate(divide="ignore"):
        # 1 - F_{IG(r, s+1)}(t) = P(s + 1, r / t)
        tail = np.where(t > 0, scipy.special.gammainc(prior.s + 1, prior.r / np.where(t > 0, t, 1.0)), 1.0)
    out = prior.s / (2 * prior.r) * tail
    return float(out) if out.ndim == 0 else out


def _l1_init_alpha(norm: float) -> float:
    return 1.1 * norm if norm > 0 else 1.0


def _l1_kink(a, alpha) -> float:
    """Distance of an l1-epigraph argument to the non-smooth locus of its projection."""
    a = np.abs(np.asarray(a, dtype=float)).ravel()
    gap = abs(a.sum() - alpha)
    if a.sum() <= alpha:
        return gap
    t = l1_epigraph_threshold(a, alpha)
    return min(gap, float(np.min(np.abs(a - t))))


class SmoothedPosterior:
    """Base class: a log-density with gradient on a flat parameter vector.

    Subclasses fill in ``names``, ``lam`` and :meth:`logp_and_grad`.
    """

    lam: float
    names: list

    @property
    def dim(self) -> int:
        return len(self.names)

    def logp_and_grad(self, theta):
        raise NotImplementedError

    def log_density(self, theta) -> float:
        return self.logp_and_grad(theta)[0]

    def gradient(self, theta) -> np.ndarray:
        return self.logp_and_grad(theta)[1]

    def initial_state(self) -> np.ndarray:
        raise NotImplementedError

    def derived(self, draws):
        """Natural-scale quantities computed from draws, as ``(names, values)``."""
        draws = np.atleast_2d(draws)
        names, cols = [], []
        for name in ("log_sigma2", "log_alpha"):
            if name in self.names:
                names.append(name[4:])
                cols.append(np.exp(draws[:, self.names.index(name)]))
        return names, np.column_stack(cols) if cols else np.empty((draws.shape[0], 0))

    def kink_distance(self, theta) -> float:
        """Distance of `theta` to the set where the log-density is not smooth.

        Finite differences with steps comparable to this value are not
        meaningful; gradient checks skip such states.
        """
        return np.inf

    def random_state(self, rng, scale: float = 1.0) -> np.ndarray:
        """A random state around the initializer, for gradient checks."""
        return self.initial_state() + scale * rng.standard_normal(self.dim)


def _noise_terms(resid_ss, n_obs, log_s2, prior):
    """Gaussian likelihood plus IG prior in ``log sigma2``: value and d/dlog sigma2."""
    s2 = np.exp(log_s2)
    a = n_obs / 2 + prior.s
    q = (resid_ss + 2 * prior.r) / (2 * s2)
    return -a * log_s2 - q, -a + q


class LassoModel(SmoothedPosterior):
    """Linear regression with an l1-epigraph prior on the coefficients.

    State layout: ``beta (p), log_sigma2, log_alpha``.
    """

    def __init__(self, X, y, lam, sigma2_prior=None, alpha_prior=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise DomainError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        self.X, self.y = X, y
        self.n, self.p = X.shape
        self.lam = float(lam)
        self.sigma2_prior = sigma2_prior or InverseGammaPrior(0.1, 0.1)
        self.alpha_prior = alpha_prior or InverseGammaPrior(1.0, self.p + 1.0)
        self.l1 = EnvelopeTerm(L1Ball(self.p), self.lam)
        self.names = [f"beta[{j + 1}]" for j in range(self.p)] + ["log_sigma2", "log_alpha"]

    def _extra_terms(self, beta):
        return 0.0, 0.0

    def logp_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        p = self.p
        beta, ls2, la = theta[:p], theta[p], theta[p + 1]
        alpha = np.exp(la)
        resid = self.y - self.X @ beta
        lp_noise, g_ls2 = _noise_terms(resid @ resid, self.n, ls2, self.sigma2_prior)
        g_beta = (self.X.T @ resid) * np.exp(-ls2)
        env, env_b, env_a = self.l1.evaluate(beta, alpha)
        extra, extra_b = self._extra_terms(beta)
        lp = lp_noise + self.alpha_prior.log_density_log(la) - env - extra
        grad = np.empty(p + 2)
        grad[:p] = g_beta - env_b - extra_b
        grad[p] = g_ls2
        grad[p + 1] = self.alpha_prior.grad_log(la) - alpha * env_a
        return lp, grad

    def kink_distance(self, theta):
        return _l1_kink(theta[: self.p], np.exp(theta[self.p + 1]))

    def _init_beta(self):
        if np.linalg.matrix_rank(self.X) == self.p:
            return np.linalg.lstsq(self.X, self.y, rcond=None)[0]
        gram = self.X.T @ self.X + 1e-3 * np.eye(self.p)
        return np.linalg.solve(gram, self.X.T @ self.y)

    def initial_state(self):
        beta = self._init_beta()
        resid = self.y - self.X @ beta
        s2 = max(resid @ resid / max(self.n - self.p, 1), 1e-8)
        alpha = _l1_init_alpha(np.abs(beta).sum())
        return np.concatenate([beta, [math.log(s2), math.log(alpha)]])


class ConstrainedLassoModel(LassoModel):
    """Lasso with the linear equality constraint ``A beta = b``."""

    def __init__(self, X, y, A, b, lam, sigma2_prior=None, alpha_prior=None):
        super().__init__(X, y, lam, sigma2_prior, alpha_prior)
        self.hyperplane = Hyperplane(A, b)
        if self.hyperplane.A.shape[1] != self.p:
            raise DomainError("A must have one column per coefficient")
        self.plane = EnvelopeTerm(self.hyperplane, self.lam)

    def _extra_terms(self, beta):
        val, grad, _ = self.plane.evaluate(beta)
        return val, grad

    def _init_beta(self):
        return self.hyperplane.project(super()._init_beta()).point


def vech_index(p):
    """(rows, cols) of the lower triangle in column-major order."""
    cols, rows = np.triu_indices(p)
    return rows, cols


class GraphicalLassoModel(SmoothedPosterior):
    """Gaussian precision matrix with an off-diagonal l1-epigraph prior.

    The precision is ``Theta = L L^T`` with ``L`` lower triangular. The
    state holds ``vech(L)`` with each diagonal entry replaced by its log,
    followed by ``log_alpha``. The change of variables
    ``(vech L with log diagonal) -> vech Theta`` has log-Jacobian
    ``p log 2 + sum_j (p - j + 2) log L_jj`` (1-based ``j``).
    """

    def __init__(self, S, n, lam, alpha_prior=None):
        S = np.asarray(S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise DomainError("S must be square")
        if not np.allclose(S, S.T, atol=1e-10):
            raise DomainError("S must be symmetric")
        if np.linalg.eigvalsh(S).min() < -1e-10 * max(1.0, np.abs(S).max()):
            raise DomainError("S must be positive semidefinite")
        self.S = 0.5 * (S + S.T)
        self.n = float(n)
        self.p = S.shape[0]
        self.lam = float(lam)
        self.alpha_prior = alpha_prior or InverseGammaPrior(1.0, self.p + 1.0)
        self.l1 = EnvelopeTerm(L1Ball((self.p, self.p), mask=~np.eye(self.p, dtype=bool)), self.lam)
        self._rows, self._cols = vech_index(self.p)
        self._diag_pos = np.flatnonzero(self._rows == self._cols)
        # 1-based j -> weight p - j + 2
        self._jac_w = self.p + 1.0 - np.arange(self.p)
        self.m = self._rows.size
        self.names = [
            f"logL[{i + 1},{j + 1}]" if i == j else f"L[{i + 1},{j + 1}]"
            for i, j in zip(self._rows, self._cols)
        ] + ["log_alpha"]

    def cholesky(self, theta) -> np.ndarray:
        v = np.array(theta[: self.m], dtype=float)
        v[self._diag_pos] = np.exp(v[self._diag_pos])
        L = np.zeros((self.p, self.p))
        L[self._rows, self._cols] = v
        return L

    def precision(self, theta) -> np.ndarray:
        L = self.cholesky(theta)
        return L @ L.T

    def logp_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        la = theta[self.m]
        alpha = np.exp(la)
        z = theta[self._diag_pos]
        L = self.cholesky(theta)
        Theta = L @ L.T
        env, D, env_a = self.l1.evaluate(Theta, alpha)
        n, p = self.n, self.p
        lp = (
            -0.5 * n * np.sum(self.S * Theta)
            + n * z.sum()
            + self.alpha_prior.log_density_log(la)
            - env
            + p * math.log(2.0)
            + self._jac_w @ z
        )
        # D is symmetric, so d/dL g(L L^T) = 2 D L
        GL = -n * (self.S @ L) - 2.0 * (D @ L)
        grad = np.empty(self.m + 1)
        grad[: self.m] = GL[self._rows, self._cols]
        grad[self._diag_pos] = grad[self._diag_pos] * np.exp(z) + n + self._jac_w
        grad[self.m] = self.alpha_prior.grad_log(la) - alpha * env_a
        return lp, grad

    def kink_distance(self, theta):
        Theta = self.precision(theta)
        off = Theta[~np.eye(self.p, dtype=bool)]
        return _l1_kink(off, np.exp(theta[self.m]))

    def state_from_cholesky(self, L, alpha) -> np.ndarray:
        v = np.asarray(L, dtype=float)[self._rows, self._cols].copy()
        v[self._diag_pos] = np.log(v[self._diag_pos])
        return np.concatenate([v, [math.log(alpha)]])

    def initial_state(self):
        Theta0 = np.linalg.inv(self.S + 0.1 * np.eye(self.p))
        L0 = np.linalg.cholesky(0.5 * (Theta0 + Theta0.T))
        return self.state_from_cholesky(L0, _l1_init_alpha(self.l1.target.norm(Theta0)))

    def derived(self, draws):
        draws = np.atleast_2d(draws)
        names = [f"theta[{i + 1},{j + 1}]" for i, j in zip(self._rows, self._cols)] + ["alpha"]
        vals = np.empty((draws.shape[0], self.m + 1))
        for k, th in enumerate(draws):
            vals[k, : self.m] = self.precision(th)[self._rows, self._cols]
        vals[:, self.m] = np.exp(draws[:, self.m])
        return names, vals


class MatrixCompletionModel(SmoothedPosterior):
    """Low-rank matrix completion with a nuclear-norm epigraph prior.

    State layout: ``vec X`` (column-major), ``log_sigma2``, ``log_alpha``.
    Observed entries are given as 0-based index arrays.
    """

    def __init__(self, shape, rows, cols, values, lam, sigma2_prior=None, alpha_prior=None):
        self.shape = (int(shape[0]), int(shape[1]))
        rows = np.asarray(rows, dtype=int).ravel()
        cols = np.asarray(cols, dtype=int).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if rows.size == 0:
            raise DomainError("observed-entry set is empty")
        if not (rows.size == cols.size == values.size):
            raise DomainError("rows, cols and values must have equal length")
        if rows.min() < 0 or rows.max() >= self.shape[0] or cols.min() < 0 or cols.max() >= self.shape[1]:
            raise DomainError("observed index outside the matrix")
        mask = np.zeros(self.shape, dtype=bool)
        mask[rows, cols] = True
        if mask.sum() != rows.size:
            raise DomainError("duplicate observed entries")
        self.mask = mask
        self.Y = np.zeros(self.shape)
        self.Y[rows, cols] = values
        self.n_obs = rows.size
        self.lam = float(lam)
        self.sigma2_prior = sigma2_prior or InverseGammaPrior(0.01, 0.01)
        self.alpha_prior = alpha_prior or InverseGammaPrior(1.0, self.shape[0] * self.shape[1] + 1.0)
        self.nuclear = EnvelopeTerm(NuclearBall(self.shape), self.lam)
        self.size = self.shape[0] * self.shape[1]
        m, n = self.shape
        self.names = [f"x[{i + 1},{j + 1}]" for j in range(n) for i in range(m)] + [
            "log_sigma2",
            "log_alpha",
        ]

    def matrix(self, theta) -> np.ndarray:
        return np.asarray(theta[: self.size]).reshape(self.shape, order="F")

    def logp_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        X = self.matrix(theta)
        ls2, la = theta[self.size], theta[self.size + 1]
        alpha = np.exp(la)
        R = np.where(self.mask, self.Y - X, 0.0)
        lp_noise, g_ls2 = _noise_terms(np.sum(R * R), self.n_obs, ls2, self.sigma2_prior)
        env, env_x, env_a = self.nuclear.evaluate(X, alpha)
        lp = lp_noise + self.alpha_prior.log_density_log(la) - env
        grad = np.empty(self.size + 2)
        grad[: self.size] = (R * np.exp(-ls2) - env_x).ravel(order="F")
        grad[self.size] = g_ls2
        grad[self.size + 1] = self.alpha_prior.grad_log(la) - alpha * env_a
        return lp, grad

    def kink_distance(self, theta):
        sig = np.linalg.svd(self.matrix(theta), compute_uv=False)
        return _l1_kink(sig, np.exp(theta[self.size + 1]))

    def initial_state(self):
        vals = self.Y[self.mask]
        s2 = float(np.var(vals)) if np.var(vals) > 0 else 1.0
        alpha = _l1_init_alpha(self.nuclear.target.norm(self.Y))
        return np.concatenate([self.Y.ravel(order="F"), [math.log(s2), math.log(alpha)]])


class SparseLowRankModel(SmoothedPosterior):
    """Regression on vector and matrix covariates with a rank-``k`` constraint
    and an l1-epigraph prior on the matrix coefficient.

    State layout: ``gamma (p), vec B (column-major, q*r), log_sigma2, log_alpha``.
    The rank constraint is non-convex; its envelope contributes a
    subgradient built from the truncated SVD.
    """

    def __init__(self, Z, Xs, y, rank, lam, sigma2_prior=None, alpha_prior=None):
        Z = np.asarray(Z, dtype=float)
        Xs = np.asarray(Xs, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if Z.ndim == 1:
            Z = Z[:, None]
        if Xs.ndim != 3:
            raise DomainError("matrix covariates must have shape (n, q, r)")
        if not (Z.shape[0] == Xs.shape[0] == y.size):
            raise DomainError("Z, Xs and y must have the same number of samples")
        self.n, self.p = Z.shape
        self.q, self.r = Xs.shape[1:]
        self.k = int(rank)
        self.lam = float(lam)
        self.y = y
        self.design = np.hstack([Z, Xs.transpose(0, 2, 1).reshape(self.n, -1)])
        self.nb = self.q * self.r
        self.sigma2_prior = sigma2_prior or InverseGammaPrior(0.01, 0.01)
        if alpha_prior is None:
            B0 = self.least_squares()[1]
            alpha_prior = InverseGammaPrior(float(np.linalg.svd(B0, compute_uv=False).sum()), 2.0)
        self.alpha_prior = alpha_prior
        self.rank_term = EnvelopeTerm(RankLeK((self.q, self.r), self.k), self.lam)
        self.l1 = EnvelopeTerm(L1Ball((self.q, self.r)), self.lam)
        self.names = (
            [f"gamma[{i + 1}]" for i in range(self.p)]
            + [f"B[{i + 1},{j + 1}]" for j in range(self.r) for i in range(self.q)]
            + ["log_sigma2", "log_alpha"]
        )

    def coef_matrix(self, theta) -> np.ndarray:
        return np.asarray(theta[self.p : self.p + self.nb]).reshape((self.q, self.r), order="F")

    def least_squares(self):
        """Minimum-norm least-squares ``(gamma, B)`` without constraints."""
        coef = np.linalg.lstsq(self.design, self.y, rcond=None)[0]
        return coef[: self.p], coef[self.p :].reshape((self.q, self.r), order="F")

    def logp_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        d = self.p + self.nb
        ls2, la = theta[d], theta[d + 1]
        alpha = np.exp(la)
        B = self.coef_matrix(theta)
        resid = self.y - self.design @ theta[:d]
        lp_noise, g_ls2 = _noise_terms(resid @ resid, self.n, ls2, self.sigma2_prior)
        env1, g1, _ = self.rank_term.evaluate(B)
        env2, g2, g2a = self.l1.evaluate(B, alpha)
        lp = lp_noise + self.alpha_prior.log_density_log(la) - env1 - env2
        grad = np.empty(d + 2)
        grad[:d] = (self.design.T @ resid) * np.exp(-ls2)
        grad[self.p : d] -= (g1 + g2).ravel(order="F")
        grad[d] = g_ls2
        grad[d + 1] = self.alpha_prior.grad_log(la) - alpha * g2a
        return lp, grad

    def kink_distance(self, theta):
        B = self.coef_matrix(theta)
        sig = np.linalg.svd(B, compute_uv=False)
        rank_gap = sig[self.k - 1] - sig[self.k] if self.k < sig.size else np.inf
        return min(rank_gap, _l1_kink(B, np.exp(theta[-1])))

    def initial_state(self):
        gamma, B0 = self.least_squares()
        Bk = self.rank_term.target.project(B0).point
        fitted = self.design @ np.concatenate([gamma, Bk.ravel(order="F")])
        resid = self.y - fitted
        s2 = max(float(resid @ resid) / self.n, 1e-8)
        alpha = _l1_init_alpha(np.abs(Bk).sum())
        return np.concatenate([gamma, Bk.ravel(order="F"), [math.log(s2), math.log(alpha)]])


MODEL_KINDS = {
    "lasso": LassoModel,
    "constrained_lasso": ConstrainedLassoModel,
    "glasso": GraphicalLassoModel,
    "matrix_completion": MatrixCompletionModel,
    "slr": SparseLowRankModel,
}
