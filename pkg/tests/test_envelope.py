import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxmcmc.envelope import AbsoluteValue, EnvelopeTerm, envelope_gradient, envelope_value, huber
from proxmcmc.prox import DomainError, Hyperplane, L1Ball, NuclearBall, RankLeK


def test_indicator_inside_set_is_zero():
    term = EnvelopeTerm(L1Ball(3), 0.1)
    assert envelope_value(term, [0.1, -0.2, 0.3], 1.0) == 0.0
    gx, ga = envelope_gradient(term, [0.1, -0.2, 0.3], 1.0)
    np.testing.assert_array_equal(gx, 0.0)
    assert ga == 0.0


def test_absolute_value_examples():
    term = EnvelopeTerm(AbsoluteValue(), 1.0)
    assert envelope_value(term, [0.5]) == pytest.approx(0.125, abs=1e-15)
    assert envelope_value(term, [2.0]) == pytest.approx(1.5, abs=1e-15)


def test_l1_epigraph_example():
    term = EnvelopeTerm(L1Ball(1), 0.5)
    assert envelope_value(term, [3.0], 1.0) == pytest.approx(2.0, abs=1e-12)
    gx, ga = envelope_gradient(term, [3.0], 1.0)
    np.testing.assert_allclose(gx, [2.0], atol=1e-12)
    assert ga == pytest.approx(-2.0, abs=1e-12)


def test_scale_must_be_positive():
    with pytest.raises(DomainError):
        EnvelopeTerm(L1Ball(2), 0.0)


@pytest.mark.parametrize("lam", [0.25, 0.5, 1.0])
def test_huber_equivalence(lam):
    x = np.linspace(-3, 3, 601)
    term = EnvelopeTerm(AbsoluteValue(), lam)
    vals = np.array([envelope_value(term, [v]) for v in x])
    assert np.max(np.abs(vals - huber(x, lam))) < 1e-12


def _terms(lam, rng):
    A = rng.standard_normal((2, 4))
    return [
        (EnvelopeTerm(L1Ball(4), lam), lambda: (2 * rng.standard_normal(4), rng.normal())),
        (EnvelopeTerm(NuclearBall((3, 2)), lam), lambda: (2 * rng.standard_normal((3, 2)), rng.normal())),
        (EnvelopeTerm(Hyperplane(A, rng.standard_normal(2)), lam), lambda: (2 * rng.standard_normal(4), None)),
    ]


def _value_flat(term, shape, v, has_alpha):
    x = v[:-1] if has_alpha else v
    return envelope_value(term, x.reshape(shape), v[-1] if has_alpha else None)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    h = 1e-5
    for term, draw in _terms(0.7, rng):
        for _ in range(50):
            x, a = draw()
            has_alpha = a is not None
            v = np.concatenate([x.ravel(), [a] if has_alpha else []])
            _, gx, ga = term.evaluate(x, a)
            analytic = np.concatenate([gx.ravel(), [ga] if has_alpha else []])
            numeric = np.empty_like(v)
            for i in range(v.size):
                e = np.zeros_like(v)
                e[i] = h
                numeric[i] = (
                    _value_flat(term, x.shape, v + e, has_alpha) - _value_flat(term, x.shape, v - e, has_alpha)
                ) / (2 * h)
            rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
            assert rel.max() < 1e-5


def test_gradient_is_lipschitz_for_convex_sets():
    rng = np.random.default_rng(1)
    lam = 0.3
    for term, draw in _terms(lam, rng):
        for _ in range(200):
            (x, a), (y, b) = draw(), draw()
            _, gx, ga = term.evaluate(x, a)
            _, gy, gb = term.evaluate(y, b)
            g1 = np.concatenate([gx.ravel(), [] if ga is None else [ga]])
            g2 = np.concatenate([gy.ravel(), [] if gb is None else [gb]])
            d = np.concatenate([(x - y).ravel(), [] if a is None else [a - b]])
            assert np.linalg.norm(g1 - g2) <= np.linalg.norm(d) / lam + 1e-10


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=5),
    st.floats(-2, 2, allow_nan=False),
)
def test_monotone_in_lambda_and_nonnegative(beta, alpha):
    vals = [envelope_value(EnvelopeTerm(L1Ball(len(beta)), lam), beta, alpha) for lam in (1.0, 0.1, 0.01, 0.001)]
    assert all(v >= 0 for v in vals)
    assert all(v2 >= v1 for v1, v2 in zip(vals, vals[1:]))


def test_rank_subgradient_is_deterministic_and_vanishes_on_set():
    rng = np.random.default_rng(2)
    term = EnvelopeTerm(RankLeK((4, 4), 2), 0.1)
    B = rng.standard_normal((4, 4))
    g1, g2 = envelope_gradient(term, B), envelope_gradient(term, B)
    np.testing.assert_array_equal(g1, g2)
    low = rng.standard_normal((4, 2)) @ rng.standard_normal((2, 4))
    assert envelope_value(term, low) < 1e-20
    # d^2 / (2 lam) equals the discarded singular values' energy
    s = np.linalg.svd(B, compute_uv=False)
    assert envelope_value(term, B) == pytest.approx(np.sum(s[2:] ** 2) / 0.2)
