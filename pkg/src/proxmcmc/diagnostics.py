"""Posterior summaries, effective sample size, coverage and gradient checks."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class Summary:
    name: str
    mean: float
    sd: float
    lower: float
    upper: float
    ess: float

    def to_dict(self):
        return asdict(self)


def credible_interval(draws, level: float = 0.95):
    """Equal-tailed interval from linearly interpolated empirical quantiles."""
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size == 0:
        raise ValueError("credible_interval needs at least one draw")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    tail = (1 - level) / 2
    lo, hi = np.quantile(draws, [tail, 1 - tail])
    return float(lo), float(hi)


def autocorrelation(x) -> np.ndarray:
    """Sample autocorrelation at all lags via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def effective_sample_size(draws) -> float:
    """ESS with Geyer's initial positive sequence truncation.

    Autocorrelations are summed in adjacent pairs until the first pair sum
    that is not positive. The result is clipped to ``(0, n]``. A constant
    chain triggers a ``RuntimeWarning`` and returns ``n``.
    """
    x = np.asarray(draws, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise ValueError("effective_sample_size needs at least 10 draws")
    if np.ptp(x) == 0 or np.var(x) <= 1e-300:
        warnings.warn("zero-variance chain; ESS set to n", RuntimeWarning, stacklevel=2)
        return float(n)
    rho = autocorrelation(x)
    total = 0.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        total += pair
    # tau = -1 + 2 * sum of positive pair sums
    tau = max(2 * total - 1, 1.0 / n)
    return float(min(n / tau, n))


def mcse(draws) -> float:
    """Monte Carlo standard error of the mean."""
    x = np.asarray(draws, dtype=float).ravel()
    return float(np.std(x, ddof=1) / np.sqrt(effective_sample_size(x)))


def summarize(draws, names=None, level: float = 0.95):
    """One :class:`Summary` per column of `draws`."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    if names is None:
        names = [f"theta[{i + 1}]" for i in range(draws.shape[1])]
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for name, col in zip(names, draws.T):
            lo, hi = credible_interval(col, level)
            ess = effective_sample_size(col) if col.size >= 10 else float(col.size)
            out.append(Summary(name, float(col.mean()), float(col.std(ddof=1)), lo, hi, ess))
    return out


def coverage(summaries, truth) -> float:
    """Fraction of `truth` entries inside their (closed) credible intervals.

    `truth` is a sequence aligned with `summaries` or a mapping from
    parameter name to value; with a mapping, only named parameters count.
    """
    if isinstance(truth, dict):
        pairs = [(s, truth[s.name]) for s in summaries if s.name in truth]
    else:
        truth = list(np.asarray(truth, dtype=float).ravel())
        if len(truth) != len(summaries):
            raise ValueError(f"{len(summaries)} summaries but {len(truth)} truth values")
        pairs = list(zip(summaries, truth))
    if not pairs:
        raise ValueError("no parameters to compare")
    hits = sum(s.lower <= t <= s.upper for s, t in pairs)
    return hits / len(pairs)


def gradient_check(posterior, state, h: float = 1e-5, return_all: bool = False):
    """Max over coordinates of ``|analytic - numeric| / max(1, |analytic|)``.

    The numeric gradient uses central differences of ``posterior.log_density``.
    """
    if not h > 0:
        raise ValueError("step must be positive")
    state = np.asarray(state, dtype=float)
    analytic = np.asarray(posterior.gradient(state), dtype=float)
    numeric = np.empty_like(state)
    for i in range(state.size):
        e = np.zeros_like(state)
        e[i] = h
        numeric[i] = (posterior.log_density(state + e) - posterior.log_density(state - e)) / (2 * h)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    if return_all:
        return float(err.max()), err
    return float(err.max())
