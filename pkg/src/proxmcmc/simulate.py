"""Synthetic datasets for the worked examples."""

from __future__ import annotations

import numpy as np


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def simulate_microbiome(seed, n=300, p=20, sigma=0.1):
    """Compositional design with a sum-to-zero coefficient vector.

    Rows of ``X`` are uniform draws normalized to sum to one; ``beta`` has
    ``beta_1 = 1``, ``beta_2 = -1`` and zeros elsewhere.

    Returns
    -------
    X : ndarray, shape (n, p)
    y : ndarray, shape (n,)
    beta : ndarray, shape (p,)
    """
    rng = _rng(seed)
    X = rng.uniform(size=(n, p))
    X /= X.sum(axis=1, keepdims=True)
    beta = np.zeros(p)
    beta[0], beta[1] = 1.0, -1.0
    y = X @ beta + sigma * rng.standard_normal(n)
    return X, y, beta


def simulate_matrix_completion(rows=250, cols=200, rank=3, mask_fraction=0.2, sigma=0.1, seed=0):
    """Low-rank plus noise matrix with an exact-count random mask.

    Returns ``(Y, mask, truth)`` where ``truth`` is the noiseless low-rank
    product, ``Y = truth + sigma * E`` and ``mask`` is True on the
    ``round(mask_fraction * rows * cols)`` hidden entries.
    """
    if not 1 <= rank <= min(rows, cols):
        raise ValueError(f"rank must lie in [1, {min(rows, cols)}]")
    if not 0 < mask_fraction < 1:
        raise ValueError("mask_fraction must lie in (0, 1)")
    rng = _rng(seed)
    truth = rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))
    Y = truth + sigma * rng.standard_normal((rows, cols))
    n_mask = int(round(mask_fraction * rows * cols))
    mask = np.zeros(rows * cols, dtype=bool)
    mask[rng.choice(rows * cols, size=n_mask, replace=False)] = True
    return Y, mask.reshape(rows, cols), truth


def cross_signal(size=16):
    """0/1 plus-shaped matrix: the two middle rows and two middle columns."""
    B = np.zeros((size, size))
    mid = size // 2
    band = slice(mid - 1, mid + 1)
    B[band, :] = 1.0
    B[:, band] = 1.0
    return B


def simulate_cross_signal(seed, n=100, size=16, gamma=(1.0, 1.0), sigma=1.0):
    """Matrix-covariate regression with a cross-shaped coefficient.

    Returns ``(Z, Xs, y, gamma, B)`` with ``Z`` of shape (n, len(gamma)) and
    ``Xs`` of shape (n, size, size), all covariates standard normal.
    """
    rng = _rng(seed)
    gamma = np.asarray(gamma, dtype=float)
    B = cross_signal(size)
    Z = rng.standard_normal((n, gamma.size))
    Xs = rng.standard_normal((n, size, size))
    y = Z @ gamma + np.einsum("ijk,jk->i", Xs, B) + sigma * rng.standard_normal(n)
    return Z, Xs, y, gamma, B


def simulate_glasso(seed, p=6, n=200):
    """Observations from a Gaussian with a sparse tridiagonal precision.

    Returns ``(data, Theta)``.
    """
    rng = _rng(seed)
    Theta = np.eye(p) + np.diag(np.full(p - 1, 0.4), 1) + np.diag(np.full(p - 1, 0.4), -1)
    cov = np.linalg.inv(Theta)
    data = rng.multivariate_normal(np.zeros(p), cov, size=n)
    return data, Theta
