"""Moreau-Yosida envelopes of indicator functions (and of ``|x|`` for testing)."""

from __future__ import annotations

import numpy as np

from .prox import DomainError, soft_threshold


class AbsoluteValue:
    """Elementwise ``sum |x|``; its envelope is the Huber function."""

    kind = "AbsoluteValue"
    is_epigraph = False
    convex = True

    def prox(self, x, lam):
        return soft_threshold(x, lam)


class EnvelopeTerm:
    """Envelope ``g^lam`` of an indicator (or of :class:`AbsoluteValue`).

    Parameters
    ----------
    target : EpigraphSet or AbsoluteValue
        Set whose indicator is smoothed.
    lam : float
        Envelope scale, must be positive.
    """

    def __init__(self, target, lam: float):
        if not lam > 0:
            raise DomainError(f"envelope scale must be positive, got {lam}")
        self.target = target
        self.lam = float(lam)

    @property
    def is_epigraph(self) -> bool:
        return bool(getattr(self.target, "is_epigraph", False))

    def evaluate(self, x, alpha=None):
        """Return ``(value, grad_x, grad_alpha)`` from a single prox evaluation.

        `grad_alpha` is None for terms that do not involve an epigraph height.
        For non-convex sets `grad_x` is the subgradient element built from
        the deterministic projection.
        """
        x = np.asarray(x, dtype=float)
        lam = self.lam
        if isinstance(self.target, AbsoluteValue):
            p = self.target.prox(x, lam)
            diff = x - p
            value = float(np.abs(p).sum() + np.sum(diff * diff) / (2 * lam))
            return value, diff / lam, None
        res = self.target.project(x, alpha)
        grad_x = (x - res.point) / lam
        value = res.distance ** 2 / (2 * lam)
        if self.target.is_epigraph:
            return value, grad_x, (float(alpha) - res.alpha) / lam
        return value, grad_x, None


def envelope_value(term: EnvelopeTerm, x, alpha=None) -> float:
    """Envelope value; ``d(x)^2 / (2 lam)`` for indicator terms."""
    return term.evaluate(x, alpha)[0]


def envelope_gradient(term: EnvelopeTerm, x, alpha=None):
    """``(x - prox(x)) / lam``.

    Returns the gradient in `x` alone, or the pair ``(grad_x, grad_alpha)``
    for epigraph terms.
    """
    _, gx, ga = term.evaluate(x, alpha)
    if ga is None:
        return gx
    return gx, ga


def huber(x, lam):
    """Closed-form Huber function, the envelope of ``|x|``."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    return np.where(ax <= lam, x * x / (2 * lam), ax - lam / 2)
