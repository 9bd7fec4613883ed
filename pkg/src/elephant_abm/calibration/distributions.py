"""Emission families for the movement HMM: log densities and weighted MLEs.

Step-length families are parametrised by ``(mean, sd)`` where that is
natural (gamma), ``(mean,)`` for the exponential and ``(shape, scale)``
for the Weibull. Turning-angle families use ``(mean direction,
concentration)``.
"""
from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
from scipy import optimize, special

__all__ = [
    "STEP_FAMILIES",
    "TURN_FAMILIES",
    "gamma_shape_scale",
    "gamma_mean_sd",
    "log_bessel_i0",
    "bessel_ratio_i1_i0",
    "step_logpdf",
    "turn_logpdf",
    "fit_step",
    "fit_turn",
    "step_mean",
    "n_step_params",
    "n_turn_params",
]

STEP_FAMILIES = ("gamma", "exponential", "weibull")
TURN_FAMILIES = ("vonmises", "wrappedcauchy")
_KAPPA_MAX = 500.0
_LOG_2PI = math.log(2.0 * math.pi)


def gamma_shape_scale(mean: float, sd: float) -> tuple[float, float]:
    """Shape ``(mean/sd)**2`` and scale ``sd**2/mean``."""
    return (mean / sd) ** 2, sd * sd / mean


def gamma_mean_sd(shape: float, scale: float) -> tuple[float, float]:
    """Inverse of :func:`gamma_shape_scale`."""
    return shape * scale, math.sqrt(shape) * scale


# ------------------------------------------------------------------ Bessel

_SERIES_LIMIT = 25.0


def log_bessel_i0(x: float) -> float:
    """log I0(x) for x >= 0, by power series below 25 and Hankel expansion above."""
    x = abs(float(x))
    if x < _SERIES_LIMIT:
        q = 0.25 * x * x
        term, total, k = 1.0, 1.0, 0
        while term > 1e-17 * total:
            k += 1
            term *= q / (k * k)
            total += term
        return math.log(total)
    # I0(x) ~ e^x / sqrt(2 pi x) * sum_k ((2k-1)!!)^2 / (k! 8^k x^k)
    inv = 1.0 / (8.0 * x)
    term, total = 1.0, 1.0
    for k in range(1, 12):
        term *= (2 * k - 1) ** 2 * inv / k
        total += term
    return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)


def _log_bessel_i1(x: float) -> float:
    x = abs(float(x))
    if x == 0.0:
        return -math.inf
    if x < _SERIES_LIMIT:
        q = 0.25 * x * x
        term, total, k = 1.0, 1.0, 0
        while term > 1e-17 * total:
            k += 1
            term *= q / (k * (k + 1))
            total += term
        return math.log(0.5 * x) + math.log(total)
    # I1(x) ~ e^x / sqrt(2 pi x) * sum_k (-1)^k prod_{j<=k} (4 - (2j-1)^2) / (k! 8^k x^k)
    inv = 1.0 / (8.0 * x)
    term, total = 1.0, 1.0
    for k in range(1, 12):
        term *= -(4.0 - (2 * k - 1) ** 2) * inv / k
        total += term
    return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)


def bessel_ratio_i1_i0(x: float) -> float:
    """A(x) = I1(x) / I0(x), the mean resultant length of a von Mises(x)."""
    if x == 0.0:
        return 0.0
    return math.exp(_log_bessel_i1(x) - log_bessel_i0(x))


# -------------------------------------------------------------- densities


def step_logpdf(family: str, params, x: np.ndarray) -> np.ndarray:
    """Log density of step lengths ``x`` (all positive)."""
    if family == "gamma":
        mean, sd = params
        k, theta = gamma_shape_scale(mean, sd)
        return (k - 1.0) * np.log(x) - x / theta - k * math.log(theta) - special.gammaln(k)
    if family == "exponential":
        (mean,) = params
        return -math.log(mean) - x / mean
    if family == "weibull":
        k, lam = params
        z = x / lam
        return math.log(k / lam) + (k - 1.0) * np.log(z) - z ** k
    raise ValueError(f"unknown step family {family!r}")


def turn_logpdf(family: str, params, theta: np.ndarray) -> np.ndarray:
    """Log density of turning angles; NaN angles contribute 0."""
    mu, c = params
    out = np.zeros_like(theta)
    ok = ~np.isnan(theta)
    t = theta[ok]
    if family == "vonmises":
        out[ok] = c * np.cos(t - mu) - _LOG_2PI - log_bessel_i0(c)
    elif family == "wrappedcauchy":
        out[ok] = math.log1p(-c * c) - _LOG_2PI - np.log1p(c * c - 2.0 * c * np.cos(t - mu))
    else:
        raise ValueError(f"unknown turn family {family!r}")
    return out


def step_mean(family: str, params) -> float:
    if family == "gamma":
        return params[0]
    if family == "exponential":
        return params[0]
    if family == "weibull":
        k, lam = params
        return lam * math.gamma(1.0 + 1.0 / k)
    raise ValueError(family)


def n_step_params(family: str) -> int:
    return 1 if family == "exponential" else 2


def n_turn_params(family: str) -> int:
    return 2


# ---------------------------------------------------------- weighted MLEs


def _solve_increasing(f: Callable[[float], float], lo: float, hi: float) -> float:
    flo, fhi = f(lo), f(hi)
    if flo >= 0:
        return lo
    if fhi <= 0:
        return hi
    return optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-12, maxiter=200)


def fit_step(family: str, x: np.ndarray, w: np.ndarray, previous=None):
    """Weighted maximum-likelihood step parameters."""
    sw = w.sum()
    if sw <= 0:
        return previous
    mean = float(np.dot(w, x) / sw)
    if family == "exponential":
        return (mean,)
    logx = np.log(x)
    mean_log = float(np.dot(w, logx) / sw)
    if family == "gamma":
        s = math.log(mean) - mean_log
        if s <= 1e-12:
            k = 1e6
        else:
            # log k - digamma(k) decreases from inf to 0
            k = _solve_increasing(lambda k: s - (math.log(k) - special.digamma(k)), 1e-6, 1e7)
        theta = mean / k
        return gamma_mean_sd(k, theta)
    if family == "weibull":
        scale0 = math.exp(mean_log)
        y = x / scale0
        logy = logx - math.log(scale0)
        mly = mean_log - math.log(scale0)

        def g(k):
            yk = y ** k
            return float(np.dot(w, yk * logy) / np.dot(w, yk)) - 1.0 / k - mly

        k = _solve_increasing(g, 1e-3, 100.0)
        lam = scale0 * float(np.dot(w, y ** k) / sw) ** (1.0 / k)
        return (k, lam)
    raise ValueError(f"unknown step family {family!r}")


def _wc_negll(params, theta, w):
    mu, rho = params
    return -float(np.dot(w, math.log1p(-rho * rho) - np.log1p(rho * rho - 2.0 * rho * np.cos(theta - mu))))


def fit_turn(family: str, theta: np.ndarray, w: np.ndarray, previous=None):
    """Weighted maximum-likelihood turning-angle parameters (NaNs ignored)."""
    ok = ~np.isnan(theta)
    t, w = theta[ok], w[ok]
    sw = w.sum()
    if sw <= 0:
        return previous
    c, s = float(np.dot(w, np.cos(t))), float(np.dot(w, np.sin(t)))
    mu = math.atan2(s, c)
    rbar = min(math.hypot(c, s) / sw, 1.0 - 1e-12)
    if family == "vonmises":
        kappa = _solve_increasing(lambda k: bessel_ratio_i1_i0(k) - rbar, 0.0, _KAPPA_MAX)
        return (mu, kappa)
    if family == "wrappedcauchy":
        starts = [(mu, min(max(rbar, 1e-3), 0.99))]
        if previous is not None:
            starts.append(tuple(previous))
        best = None
        for x0 in starts:
            res = optimize.minimize(_wc_negll, x0, args=(t, w), method="L-BFGS-B",
                                    bounds=[(None, None), (1e-6, 0.999)])
            cand = (float(res.x[0]), float(res.x[1]), float(res.fun))
            if best is None or cand[2] < best[2]:
                best = cand
        if previous is not None and _wc_negll(previous, t, w) < best[2]:
            return tuple(previous)
        mu_hat = math.remainder(best[0], 2.0 * math.pi)
        return (mu_hat, best[1])
    raise ValueError(f"unknown turn family {family!r}")


def sample_steps(family: str, params, size: int, rng: np.random.Generator) -> np.ndarray:
    if family == "gamma":
        k, theta = gamma_shape_scale(*params)
        return rng.gamma(k, theta, size)
    if family == "exponential":
        return rng.exponential(params[0], size)
    if family == "weibull":
        k, lam = params
        return lam * rng.weibull(k, size)
    raise ValueError(family)


def sample_turns(family: str, params, size: int, rng: np.random.Generator) -> np.ndarray:
    mu, c = params
    if family == "vonmises":
        return rng.vonmises(mu, c, size)
    if family == "wrappedcauchy":
        # wrapped Cauchy with rho = exp(-gamma): wrap a Cauchy of scale gamma
        gamma = -math.log(c)
        raw = mu + gamma * rng.standard_cauchy(size)
        return np.remainder(raw + math.pi, 2.0 * math.pi) - math.pi
    raise ValueError(family)
