"""Hamiltonian Monte Carlo with dual-averaging step-size adaptation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    """The sampler could not make progress (e.g. persistent divergences)."""


@dataclass
class HmcConfig:
    n_warmup: int = 1000
    n_samples: int = 1000
    leapfrog_steps: int = 32
    jitter: float = 0.2
    initial_step_size: float = 0.1
    target_accept: float = 0.8
    mass: Optional[np.ndarray] = None
    adapt_mass: bool = False
    seed: int = 0
    divergence_threshold: float = 1000.0
    max_consecutive_divergent: int = 100

    def __post_init__(self):
        if self.n_warmup < 0:
            raise ValueError("n_warmup must be nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be positive")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter must lie in [0, 1)")
        if not self.initial_step_size > 0:
            raise ValueError("initial_step_size must be positive")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.mass is not None:
            self.mass = np.asarray(self.mass, dtype=float)
            if np.any(self.mass <= 0):
                raise ValueError("mass must be positive")


@dataclass
class Chain:
    draws: np.ndarray
    names: list
    accept_rate: float
    step_size_final: float
    divergence_count: int
    seed: object
    log_density: np.ndarray = field(repr=False, default=None)
    n_warmup: int = 0


class DualAveraging:
    """Nesterov dual averaging of ``log(step)`` toward a target acceptance rate.

    Constants follow Hoffman and Gelman (2014): ``gamma=0.05, t0=10, kappa=0.75``.
    """

    def __init__(self, step_size, target=0.8, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * step_size)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.h_bar = 0.0
        self.log_avg = 0.0
        self.t = 0

    def update(self, accept_prob: float) -> float:
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1 - eta) * self.h_bar + eta * (self.target - accept_prob)
        log_step = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        w = self.t ** (-self.kappa)
        self.log_avg = w * log_step + (1 - w) * self.log_avg
        return math.exp(log_step)

    def final(self) -> float:
        return math.exp(self.log_avg)


def _trajectory(logp_and_grad, theta, momentum, grad, step_size, n_steps, inv_mass):
    """Leapfrog from ``(theta, momentum)`` given the gradient at `theta`.

    Returns ``(theta, momentum, logp, grad, ok)``; ``ok`` is False when a
    non-finite value appeared, in which case the integration stops early.
    """
    theta = theta.copy()
    p = momentum + 0.5 * step_size * grad
    logp = np.nan
    for i in range(n_steps):
        theta = theta + step_size * inv_mass * p
        try:
            with np.errstate(all="ignore"):
                logp, grad = logp_and_grad(theta)
        except (ArithmeticError, ValueError):
            # non-finite states make projections and SVDs fail
            return theta, p, np.nan, grad, False
        if not (np.isfinite(logp) and np.all(np.isfinite(grad))):
            return theta, p, logp, grad, False
        if i < n_steps - 1:
            p = p + step_size * grad
    p = p + 0.5 * step_size * grad
    return theta, p, logp, grad, True


def leapfrog(posterior, theta, momentum, step_size, n_steps, inv_mass=None):
    """Run `n_steps` leapfrog steps and return ``(theta, momentum)``."""
    theta = np.asarray(theta, dtype=float)
    momentum = np.asarray(momentum, dtype=float)
    inv_mass = np.ones_like(theta) if inv_mass is None else np.asarray(inv_mass, dtype=float)
    grad = posterior.gradient(theta)
    theta, p, _, _, _ = _trajectory(
        posterior.logp_and_grad, theta, momentum, grad, step_size, n_steps, inv_mass
    )
    return theta, p


def _kinetic(p, inv_mass):
    # overflow here just marks a divergent trajectory
    with np.errstate(over="ignore", invalid="ignore"):
        return 0.5 * float(np.sum(inv_mass * p * p))


def _initial_step_size(posterior, theta, logp, grad, step, inv_mass, sqrt_mass, rng):
    """Double or halve the step until one-step acceptance crosses 1/2."""
    p0 = sqrt_mass * rng.standard_normal(theta.size)
    h0 = -logp + _kinetic(p0, inv_mass)

    def accept_log(eps):
        _, p1, lp1, _, ok = _trajectory(posterior.logp_and_grad, theta, p0, grad, eps, 1, inv_mass)
        if not ok:
            return -np.inf
        return h0 - (-lp1 + _kinetic(p1, inv_mass))

    direction = 1.0 if accept_log(step) > math.log(0.5) else -1.0
    for _ in range(100):
        nxt = step * 2.0 ** direction
        crossed = (accept_log(nxt) > math.log(0.5)) != (direction > 0)
        step = nxt
        if crossed:
            break
    return step


def mass_windows(n_warmup: int):
    """End iterations (exclusive) of the doubling variance-estimation windows.

    Uses a 15% initial and 10% terminal step-size-only buffer, capped at
    75 and 50 iterations, with slow windows starting at 25 and doubling.
    """
    init = min(75, int(0.15 * n_warmup))
    term = min(50, int(0.1 * n_warmup))
    end = n_warmup - term
    ends = []
    start, width = init, 25
    while start < end:
        stop = start + width
        # fold a short remainder into the last window
        if end - stop < 2 * width:
            stop = end
        ends.append((start, stop))
        start, width = stop, 2 * width
    return ends


class _Welford:
    def __init__(self, d):
        self.n = 0
        self.mean = np.zeros(d)
        self.m2 = np.zeros(d)

    def add(self, x):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def variance(self):
        # shrink toward 1e-3 as in Stan's diagonal adaptation
        n = self.n
        var = self.m2 / max(n - 1, 1)
        return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


def sample(posterior, config: HmcConfig, init=None) -> Chain:
    """Draw a chain from `posterior` with HMC.

    The step size is adapted by dual averaging during warmup and frozen at
    the averaged value afterwards. With ``config.adapt_mass`` the diagonal
    mass is also set to the inverse of windowed warmup variances (the
    initial `config.mass` seeds the first window). Only post-warmup states
    are returned.
    A proposal is divergent when the energy error exceeds
    ``config.divergence_threshold`` or a non-finite value appears;
    ``config.max_consecutive_divergent`` divergences in a row abort with
    :class:`SamplerError`.
    """
    rng = np.random.default_rng(config.seed)
    theta = np.array(posterior.initial_state() if init is None else init, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise SamplerError("initial state is not finite")
    d = theta.size
    mass = np.ones(d) if config.mass is None else np.broadcast_to(config.mass, (d,)).astype(float)
    inv_mass = 1.0 / mass
    sqrt_mass = np.sqrt(mass)

    logp, grad = posterior.logp_and_grad(theta)
    if not (np.isfinite(logp) and np.all(np.isfinite(grad))):
        raise SamplerError("log-density or gradient not finite at the initial state")

    step = config.initial_step_size
    if config.n_warmup > 0:
        step = _initial_step_size(posterior, theta, logp, grad, step, inv_mass, sqrt_mass, rng)
    adapter = DualAveraging(step, target=config.target_accept)

    lo = max(1, int(round(config.leapfrog_steps * (1 - config.jitter))))
    hi = max(lo, int(round(config.leapfrog_steps * (1 + config.jitter))))

    draws = np.empty((config.n_samples, d))
    trace = np.empty(config.n_samples)
    accepted = 0
    divergences = 0
    consecutive = 0
    windows = mass_windows(config.n_warmup) if config.adapt_mass else []
    window_start = {a: b for a, b in windows}
    window_end = None
    acc = None
    total = config.n_warmup + config.n_samples
    for it in range(total):
        warm = it < config.n_warmup
        if it in window_start:
            window_end = window_start[it]
            acc = _Welford(d)
        if it == config.n_warmup and config.n_warmup > 0:
            step = adapter.final()
        n_steps = int(rng.integers(lo, hi + 1))
        p0 = sqrt_mass * rng.standard_normal(d)
        h0 = -logp + _kinetic(p0, inv_mass)
        new_theta, p1, new_logp, new_grad, ok = _trajectory(
            posterior.logp_and_grad, theta, p0, grad, step, n_steps, inv_mass
        )
        dh = (-new_logp + _kinetic(p1, inv_mass)) - h0 if ok else np.inf
        divergent = not np.isfinite(dh) or abs(dh) > config.divergence_threshold
        accept_prob = 0.0 if divergent else min(1.0, math.exp(min(0.0, -dh)))
        u = rng.random()
        if not divergent and u < accept_prob:
            theta, logp, grad = new_theta, new_logp, new_grad
            if not warm:
                accepted += 1
        if divergent:
            consecutive += 1
            if not warm:
                divergences += 1
            if consecutive >= config.max_consecutive_divergent:
                raise SamplerError(
                    f"{consecutive} consecutive divergent transitions at iteration {it} "
                    f"(step size {step:.3g})"
                )
        else:
            consecutive = 0
        if warm:
            step = adapter.update(accept_prob)
            if acc is not None:
                acc.add(theta)
                if it + 1 == window_end:
                    inv_mass = acc.variance()
                    mass = 1.0 / inv_mass
                    sqrt_mass = np.sqrt(mass)
                    acc = None
                    adapter = DualAveraging(step, target=config.target_accept)
        else:
            draws[it - config.n_warmup] = theta
            trace[it - config.n_warmup] = logp

    accept_rate = accepted / config.n_samples
    logger.info("accept rate %.3f, step size %.3g, %d divergences", accept_rate, step, divergences)
    return Chain(
        draws=draws,
        names=list(getattr(posterior, "names", [f"theta[{i + 1}]" for i in range(d)])),
        accept_rate=accept_rate,
        step_size_final=step,
        divergence_count=divergences,
        seed=config.seed,
        log_density=trace,
        n_warmup=config.n_warmup,
    )
