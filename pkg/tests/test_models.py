import math

import numpy as np
import pytest
from scipy.integrate import quad

from proxmcmc.diagnostics import gradient_check
from proxmcmc.models import (
    ConstrainedLassoModel,
    GraphicalLassoModel,
    InverseGammaPrior,
    LassoModel,
    MatrixCompletionModel,
    SparseLowRankModel,
    epigraph_prior_marginal,
    vech_index,
)
from proxmcmc.prox import DomainError


def _lasso(rng, n=30, p=4, lam=0.05):
    X = rng.standard_normal((n, p))
    y = X @ np.array([1.0, -1.0, 0.0, 0.5])[:p] + 0.3 * rng.standard_normal(n)
    return LassoModel(X, y, lam)


def _constrained(rng, lam=0.05):
    X = rng.standard_normal((30, 4))
    y = X @ np.array([1.0, -1.0, 0.0, 0.0]) + 0.3 * rng.standard_normal(30)
    return ConstrainedLassoModel(X, y, np.ones((1, 4)), [0.0], lam)


def _glasso(rng, p=4, lam=0.1):
    data = rng.standard_normal((50, p))
    return GraphicalLassoModel(np.cov(data.T, bias=True), 50, lam)


def _completion(rng, lam=0.1):
    Y = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
    idx = rng.permutation(30)[:20]
    rows, cols = np.unravel_index(idx, (6, 5))
    return MatrixCompletionModel((6, 5), rows, cols, Y[rows, cols], lam)


def _slr(rng, lam=0.1):
    n, q, r = 40, 4, 3
    Z = rng.standard_normal((n, 2))
    Xs = rng.standard_normal((n, q, r))
    B = np.outer([1, 1, 0, 0], [1, 0, 1.0])
    y = Z @ [1.0, 1.0] + np.einsum("nij,ij->n", Xs, B) + rng.standard_normal(n)
    return SparseLowRankModel(Z, Xs, y, 1, lam)


def test_inverse_gamma_log_form():
    prior = InverseGammaPrior(0.1, 0.2)
    lv = 0.7
    assert prior.log_density_log(lv) == pytest.approx(-0.2 * lv - 0.1 / math.exp(lv))
    with pytest.raises(DomainError):
        InverseGammaPrior(0.0, 1.0)


def test_lasso_density_at_exact_fit_feasible_state():
    X = np.eye(3)
    beta = np.array([0.2, -0.1, 0.0])
    m = LassoModel(X, X @ beta, 0.01)
    ls2, la = 0.3, math.log(2.0)
    expected = -(3 / 2 + 0.1) * ls2 - 0.1 / math.exp(ls2) - 4.0 * la - 1.0 / 2.0
    assert m.log_density(np.r_[beta, ls2, la]) == pytest.approx(expected, abs=1e-12)


def test_lasso_log_sigma2_derivative_example():
    # n = 4, residual sum of squares 2, sigma2 = 1, r = s = 0.1 -> -2.1 + 1.1
    X = np.eye(4)
    y = np.array([1.0, 1.0, 0.0, 0.0])
    m = LassoModel(X, y, 0.01, sigma2_prior=InverseGammaPrior(0.1, 0.1))
    g = m.gradient(np.r_[np.zeros(4), 0.0, 0.0])
    assert g[4] == pytest.approx(-1.0, abs=1e-12)


def test_constrained_lasso_equals_lasso_on_feasible_states():
    rng = np.random.default_rng(0)
    m = _constrained(rng)
    plain = LassoModel(m.X, m.y, m.lam)
    beta = np.array([0.3, -0.3, 0.1, -0.1])
    state = np.r_[beta, 0.2, math.log(2.0)]
    assert m.log_density(state) == pytest.approx(plain.log_density(state), abs=1e-12)
    # d/dlog alpha at a feasible state is -s + r/alpha
    assert m.gradient(state)[-1] == pytest.approx(-5.0 + 1.0 / 2.0, abs=1e-12)


def test_glasso_identity_example():
    S = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.5]])
    m = GraphicalLassoModel(S, 10, 0.01)
    state = m.state_from_cholesky(np.eye(3), 1.0)
    # envelope 0, logdet 0, log-diagonal 0
    expected = -0.5 * 10 * np.trace(S) + m.alpha_prior.log_density_log(0.0) + 3 * math.log(2.0)
    assert m.log_density(state) == pytest.approx(expected, abs=1e-12)


def test_glasso_rejects_bad_covariance():
    with pytest.raises(DomainError):
        GraphicalLassoModel(np.array([[1.0, 0.5], [0.2, 1.0]]), 5, 0.1)
    with pytest.raises(DomainError):
        GraphicalLassoModel(np.array([[1.0, 2.0], [2.0, 1.0]]), 5, 0.1)


def test_vech_is_column_major_lower_triangle():
    rows, cols = vech_index(3)
    assert list(zip(rows, cols)) == [(0, 0), (1, 0), (2, 0), (1, 1), (2, 1), (2, 2)]


def _vech_theta(m, u):
    L = m.cholesky(np.r_[u, 0.0])
    return (L @ L.T)[m._rows, m._cols]


def test_glasso_change_of_variables_oracle():
    """Density in the sampled coordinates = density in Theta + log|det d vech(Theta)/du|."""
    rng = np.random.default_rng(1)
    p, n = 3, 20
    data = rng.standard_normal((n, p))
    S = np.cov(data.T, bias=True)
    m = GraphicalLassoModel(S, n, 0.05)
    h = 1e-6
    for _ in range(10):
        u = rng.normal(scale=0.5, size=m.m)
        la = rng.normal()
        J = np.empty((m.m, m.m))
        for i in range(m.m):
            e = np.zeros(m.m)
            e[i] = h
            J[:, i] = (_vech_theta(m, u + e) - _vech_theta(m, u - e)) / (2 * h)
        logjac = np.linalg.slogdet(J)[1]
        z = u[m._diag_pos]
        assert logjac == pytest.approx(p * math.log(2) + np.dot([4, 3, 2], z), abs=1e-6)

        L = m.cholesky(np.r_[u, la])
        Theta = L @ L.T
        env = m.l1.evaluate(Theta, math.exp(la))[0]
        direct = (
            -0.5 * n * np.sum(S * Theta)
            + 0.5 * n * np.linalg.slogdet(Theta)[1]
            + m.alpha_prior.log_density_log(la)
            - env
        )
        assert m.log_density(np.r_[u, la]) == pytest.approx(direct + logjac, abs=1e-6)


def test_completion_example_and_unobserved_gradient():
    rng = np.random.default_rng(2)
    m = _completion(rng)
    X = m.Y.copy()
    alpha = 2 * np.linalg.svd(X, compute_uv=False).sum()
    state = np.r_[X.ravel(order="F"), 0.1, math.log(alpha)]
    lp = m.log_density(state)
    expected = (
        -(m.n_obs / 2 + 0.01) * 0.1 - 0.01 / math.exp(0.1) + m.alpha_prior.log_density_log(math.log(alpha))
    )
    assert lp == pytest.approx(expected, abs=1e-10)
    g = m.gradient(state)[: m.size].reshape(m.shape, order="F")
    np.testing.assert_array_equal(g[~m.mask], 0.0)


def test_slr_zero_matrix_reduces_to_regression():
    rng = np.random.default_rng(3)
    m = _slr(rng)
    gamma = np.array([0.5, 0.8])
    state = np.r_[gamma, np.zeros(m.nb), 0.2, 0.5]
    r = m.y - m.design[:, :2] @ gamma
    expected = (
        -(m.n / 2 + 0.01) * 0.2
        - (r @ r + 0.02) / (2 * math.exp(0.2))
        + m.alpha_prior.log_density_log(0.5)
    )
    assert m.log_density(state) == pytest.approx(expected, abs=1e-10)


def test_slr_gamma_block_gradient():
    rng = np.random.default_rng(4)
    m = _slr(rng)
    for _ in range(20):
        st = m.random_state(rng, 0.3)
        g = m.gradient(st)
        for i in range(m.p):
            e = np.zeros(m.dim)
            e[i] = 1e-5
            num = (m.log_density(st + e) - m.log_density(st - e)) / 2e-5
            assert abs(g[i] - num) / max(1, abs(g[i])) < 1e-6


@pytest.mark.parametrize(
    "build, tol",
    [(_lasso, 1e-5), (_constrained, 1e-5), (_glasso, 1e-4), (_completion, 1e-5), (_slr, 1e-4)],
)
def test_gradients_match_finite_differences(build, tol):
    rng = np.random.default_rng(5)
    m = build(rng)
    checked = 0
    while checked < 20:
        st = m.random_state(rng, 0.5)
        if m.kink_distance(st) < 1e-3:
            continue
        assert gradient_check(m, st) < tol
        checked += 1


@pytest.mark.parametrize("build", [_lasso, _constrained, _glasso, _completion, _slr])
def test_log_density_finite_at_finite_states(build):
    rng = np.random.default_rng(6)
    m = build(rng)
    for _ in range(20):
        lp, g = m.logp_and_grad(m.random_state(rng, 3.0))
        assert np.isfinite(lp) and np.all(np.isfinite(g))


def test_feasible_states_independent_of_lambda():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((20, 3))
    y = rng.standard_normal(20)
    state = np.r_[0.1, -0.2, 0.05, 0.3, math.log(1.0)]
    vals = {LassoModel(X, y, lam).log_density(state) for lam in (1.0, 0.1, 1e-3, 1e-6)}
    assert max(vals) - min(vals) < 1e-12


def test_shift_in_y_only_changes_residual_term():
    rng = np.random.default_rng(8)
    m1 = _lasso(rng)
    m2 = LassoModel(m1.X, m1.y + 3.0, m1.lam)
    ls2 = 0.4
    for _ in range(10):
        st = m1.random_state(rng)
        st[4] = ls2
        diff_grad = m2.gradient(st)[:4] - m1.gradient(st)[:4]
        np.testing.assert_allclose(diff_grad, m1.X.T @ np.full(m1.n, 3.0) / math.exp(ls2), atol=1e-9)
        # with X = 0 the shift changes nothing that depends on beta
    Z = LassoModel(np.zeros((5, 2)), np.ones(5), 0.1)
    Z2 = LassoModel(np.zeros((5, 2)), np.ones(5) + 2.0, 0.1)
    st = np.array([0.3, -0.1, 0.2, 0.0])
    np.testing.assert_allclose(Z2.gradient(st)[:2] - Z.gradient(st)[:2], 0.0, atol=1e-14)


@pytest.mark.parametrize("r, s", [(1.0, 2.0), (1.0, 11.0), (0.5, 3.0)])
def test_epigraph_marginal(r, s):
    prior = InverseGammaPrior(r, s)
    assert epigraph_prior_marginal(0.0, prior) == s / (2 * r)
    assert epigraph_prior_marginal(1.3, prior) == epigraph_prior_marginal(-1.3, prior)
    total = 2 * quad(lambda t: epigraph_prior_marginal(t, prior), 0, np.inf, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    assert total == pytest.approx(1.0, abs=1e-6)


def test_epigraph_marginal_matches_simulation():
    rng = np.random.default_rng(9)
    prior = InverseGammaPrior(1.0, 3.0)
    alpha = 1.0 / rng.gamma(3.0, 1.0, 200_000)
    b = rng.uniform(-1, 1, alpha.size) * alpha
    hist, edges = np.histogram(b, bins=40, range=(-1, 1), density=False)
    mid = 0.5 * (edges[1:] + edges[:-1])
    emp = hist / (b.size * (edges[1] - edges[0]))
    np.testing.assert_allclose(emp, epigraph_prior_marginal(mid, prior), rtol=0.03, atol=0.01)
