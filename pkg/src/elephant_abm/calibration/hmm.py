"""Two-state movement HMM: EM fitting, AIC family comparison, Viterbi decoding.

State 0 is encamped (shorter mean step), state 1 exploratory. Emissions
are independent step-length and turning-angle densities per state; a NaN
turning angle contributes only its step length.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .. import kernels
from . import distributions as dist
from .steps import StepSeries

__all__ = [
    "HmmFit",
    "FamilyComparison",
    "MIN_SERIES_LENGTH",
    "ConvergenceWarning",
    "emission_logs",
    "series_loglik",
    "fit_hmm",
    "fit_families",
    "viterbi_decode",
    "state_posteriors",
    "stationary_distribution",
    "path_loglik",
]

MIN_SERIES_LENGTH = 50
_MIN_STEP_KM = 1e-6


class ConvergenceWarning(RuntimeWarning):
    pass


def stationary_distribution(transition) -> np.ndarray:
    g = np.asarray(transition, dtype=float)
    p12, p21 = g[0, 1], g[1, 0]
    if p12 + p21 == 0:
        return np.array([0.5, 0.5])
    return np.array([p21, p12]) / (p12 + p21)


@dataclass(frozen=True)
class HmmFit:
    """Fitted two-state model (state 0 encamped, state 1 exploratory)."""

    step_family: str
    turn_family: str
    initial: np.ndarray
    transition: np.ndarray
    step_params: tuple
    turn_params: tuple
    loglik: float
    n_obs: int
    converged: bool = True
    iterations: int = 0
    loglik_trace: tuple = field(default=(), repr=False)

    @property
    def n_params(self) -> int:
        # initial distribution (1) + off-diagonal transitions (2) + emissions
        return 1 + 2 + 2 * (dist.n_step_params(self.step_family) + dist.n_turn_params(self.turn_family))

    @property
    def aic(self) -> float:
        return 2.0 * self.n_params - 2.0 * self.loglik

    @property
    def p11(self) -> float:
        return float(self.transition[0, 0])

    @property
    def p22(self) -> float:
        return float(self.transition[1, 1])

    @property
    def step_means(self) -> tuple[float, float]:
        return tuple(dist.step_mean(self.step_family, p) for p in self.step_params)

    @property
    def stationary(self) -> np.ndarray:
        return stationary_distribution(self.transition)

    def to_dict(self) -> dict:
        states = {}
        for s, name in enumerate(("encamped", "exploratory")):
            entry = {
                "step_family": self.step_family,
                "step_params": [float(v) for v in self.step_params[s]],
                "step_mean_km": float(self.step_means[s]),
                "turn_family": self.turn_family,
                "turn_mean": float(self.turn_params[s][0]),
                "turn_concentration": float(self.turn_params[s][1]),
            }
            if self.step_family == "gamma":
                entry["step_sd_km"] = float(self.step_params[s][1])
            states[name] = entry
        g = self.transition
        return {
            "families": [self.step_family, self.turn_family],
            "transition": [[float(v) for v in row] for row in g],
            "p11": float(g[0, 0]), "p12": float(g[0, 1]),
            "p21": float(g[1, 0]), "p22": float(g[1, 1]),
            "initial": [float(v) for v in self.initial],
            "states": states,
            "loglik": float(self.loglik),
            "n_params": self.n_params,
            "aic": float(self.aic),
            "n_obs": self.n_obs,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }


def _prepared_lengths(series: StepSeries) -> np.ndarray:
    return np.maximum(series.lengths, _MIN_STEP_KM)


def emission_logs(step_family: str, turn_family: str, step_params, turn_params,
                  lengths: np.ndarray, turns: np.ndarray) -> np.ndarray:
    """(T, 2) log emission densities."""
    out = np.empty((lengths.size, 2))
    for s in (0, 1):
        out[:, s] = (dist.step_logpdf(step_family, step_params[s], lengths)
                     + dist.turn_logpdf(turn_family, turn_params[s], turns))
    return out


def _log(a) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(a, dtype=float))


def series_loglik(initial, transition, log_b: np.ndarray, starts) -> float:
    """Forward-algorithm log-likelihood; every segment restarts from ``initial``."""
    _, ll = kernels.forward_log(_log(initial), _log(transition), np.ascontiguousarray(log_b),
                                np.asarray(starts, dtype=np.uint8))
    return float(ll)


# ------------------------------------------------------------------ starts


def _kmeans_1d(x: np.ndarray, iters: int = 100) -> np.ndarray:
    """Two-cluster Lloyd iterations on a 1-D sample; returns labels (0 = low)."""
    c = np.quantile(x, [0.25, 0.75]).astype(float)
    labels = np.zeros(x.size, dtype=np.intp)
    for _ in range(iters):
        new = (np.abs(x - c[1]) < np.abs(x - c[0])).astype(np.intp)
        if np.array_equal(new, labels) and _ > 0:
            break
        labels = new
        for k in (0, 1):
            if np.any(labels == k):
                c[k] = x[labels == k].mean()
    if c[0] > c[1]:
        labels = 1 - labels
    return labels


def _moment_step(family: str, mean: float, sd: float):
    mean = max(mean, _MIN_STEP_KM)
    sd = max(sd, 0.05 * mean)
    if family == "gamma":
        return (mean, sd)
    if family == "exponential":
        return (mean,)
    if family == "weibull":
        k = min(max((sd / mean) ** -1.086, 0.2), 20.0)
        return (k, mean / math.gamma(1.0 + 1.0 / k))
    raise ValueError(f"unknown step family {family!r}")


def _moment_turn(family: str, t: np.ndarray):
    t = t[~np.isnan(t)]
    if t.size == 0:
        return (0.0, 0.1 if family == "wrappedcauchy" else 0.5)
    c, s = np.cos(t).mean(), np.sin(t).mean()
    mu, rbar = math.atan2(s, c), min(math.hypot(c, s), 0.95)
    if family == "vonmises":
        w = np.ones(t.size)
        return dist.fit_turn("vonmises", t, w)
    return (mu, max(rbar, 0.01))


def _initial_guesses(series: StepSeries, lengths: np.ndarray, step_family: str, turn_family: str,
                     n_starts: int, rng: np.random.Generator) -> list[dict]:
    labels = _kmeans_1d(lengths)
    base_steps, base_turns = [], []
    for k in (0, 1):
        sel = labels == k
        if sel.sum() < 2:
            sel = np.ones(lengths.size, dtype=bool)
        xs = lengths[sel]
        base_steps.append((float(xs.mean()), float(xs.std())))
        base_turns.append(_moment_turn(turn_family, series.turns[sel]))
    guesses = []
    for j in range(n_starts):
        if j == 0:
            diag = np.array([0.9, 0.9])
            steps = [_moment_step(step_family, m, s) for m, s in base_steps]
            turns = list(base_turns)
        else:
            diag = rng.uniform(0.5, 0.97, 2)
            steps = []
            for m, s in base_steps:
                f = math.exp(rng.normal(0.0, 0.4))
                steps.append(_moment_step(step_family, m * f, s * f * math.exp(rng.normal(0.0, 0.3))))
            turns = []
            for mu, c in base_turns:
                mu2 = math.remainder(mu + rng.normal(0.0, 0.5), 2.0 * math.pi)
                if turn_family == "vonmises":
                    c2 = c * math.exp(rng.normal(0.0, 0.5))
                else:
                    c2 = min(max(c * math.exp(rng.normal(0.0, 0.5)), 0.01), 0.95)
                turns.append((mu2, c2))
        trans = np.array([[diag[0], 1 - diag[0]], [1 - diag[1], diag[1]]])
        guesses.append({"initial": np.array([0.5, 0.5]), "transition": trans,
                        "step_params": tuple(steps), "turn_params": tuple(turns)})
    return guesses


# ---------------------------------------------------------------------- EM


def _em(series: StepSeries, lengths: np.ndarray, step_family: str, turn_family: str, start: dict,
        max_iter: int, tol: float):
    starts_u8 = series.starts.astype(np.uint8)
    seg_first = np.flatnonzero(series.starts)
    cont = ~series.starts[1:]
    delta = np.asarray(start["initial"], dtype=float)
    gam = np.asarray(start["transition"], dtype=float)
    sp, tp = tuple(start["step_params"]), tuple(start["turn_params"])
    trace = []
    converged = False
    for it in range(max_iter + 1):
        log_b = emission_logs(step_family, turn_family, sp, tp, lengths, series.turns)
        alpha, ll = kernels.forward_log(_log(delta), _log(gam), log_b, starts_u8)
        ll = float(ll)
        if not math.isfinite(ll):
            break
        trace.append(ll)
        if it > 0 and abs(ll - trace[-2]) < tol:
            converged = True
            break
        if it == max_iter:
            break
        beta = kernels.backward_log(_log(gam), log_b, starts_u8)
        post = alpha + beta
        post = np.exp(post - logsumexp(post, axis=1, keepdims=True))
        # expected transitions over within-segment pairs
        lx = (alpha[:-1, :, None] + _log(gam)[None] + (log_b[1:] + beta[1:])[:, None, :])[cont]
        if lx.shape[0]:
            lx = lx - logsumexp(lx, axis=(1, 2), keepdims=True)
            counts = np.exp(lx).sum(axis=0)
            rows = counts.sum(axis=1, keepdims=True)
            gam = np.where(rows > 0, counts / np.where(rows > 0, rows, 1.0), gam)
        delta = post[seg_first].mean(axis=0)
        sp = tuple(dist.fit_step(step_family, lengths, post[:, s], sp[s]) for s in (0, 1))
        tp = tuple(dist.fit_turn(turn_family, series.turns, post[:, s], tp[s]) for s in (0, 1))
    return {"initial": delta, "transition": gam, "step_params": sp, "turn_params": tp,
            "loglik": trace[-1] if trace else -math.inf, "trace": tuple(trace),
            "converged": converged, "iterations": max(len(trace) - 1, 0)}


def _relabel(res: dict, step_family: str) -> dict:
    means = [dist.step_mean(step_family, p) for p in res["step_params"]]
    if means[0] <= means[1]:
        return res
    out = dict(res)
    out["initial"] = res["initial"][::-1].copy()
    out["transition"] = res["transition"][::-1, ::-1].copy()
    out["step_params"] = res["step_params"][::-1]
    out["turn_params"] = res["turn_params"][::-1]
    return out


def _check_series(series: StepSeries):
    if len(series) < MIN_SERIES_LENGTH:
        raise ValueError(f"series has {len(series)} steps; at least {MIN_SERIES_LENGTH} are required")
    if not np.any(series.lengths > 0):
        raise ValueError("degenerate series: all step lengths are zero")


def fit_hmm(series: StepSeries, step_family: str = "gamma", turn_family: str = "vonmises", *,
            n_starts: int = 5, max_iter: int = 500, tol: float = 1e-6, rng=0,
            extra_starts: Sequence[dict] = ()) -> HmmFit:
    """Maximum-likelihood two-state fit by EM from several starts.

    ``extra_starts`` are appended to the k-means-seeded starts; each is a
    dict with ``initial``, ``transition``, ``step_params`` and
    ``turn_params`` for the requested families. The best log-likelihood
    across starts is kept. A fit that hits ``max_iter`` is returned with
    ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    if step_family not in dist.STEP_FAMILIES:
        raise ValueError(f"unknown step family {step_family!r}")
    if turn_family not in dist.TURN_FAMILIES:
        raise ValueError(f"unknown turn family {turn_family!r}")
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    _check_series(series)
    rng = np.random.default_rng(rng)
    lengths = _prepared_lengths(series)
    guesses = _initial_guesses(series, lengths, step_family, turn_family, n_starts, rng)
    guesses.extend(extra_starts)
    best = None
    for g in guesses:
        res = _em(series, lengths, step_family, turn_family, g, max_iter, tol)
        if best is None or res["loglik"] > best["loglik"]:
            best = res
    if not math.isfinite(best["loglik"]):
        raise FloatingPointError("likelihood is not finite for any start")
    if not best["converged"]:
        warnings.warn(f"EM did not converge in {max_iter} iterations ({step_family}/{turn_family})",
                      ConvergenceWarning, stacklevel=2)
    best = _relabel(best, step_family)
    return HmmFit(step_family, turn_family, np.asarray(best["initial"]), np.asarray(best["transition"]),
                  tuple(tuple(float(v) for v in p) for p in best["step_params"]),
                  tuple(tuple(float(v) for v in p) for p in best["turn_params"]),
                  float(best["loglik"]), len(series), best["converged"], best["iterations"], best["trace"])


def _exponential_as_start(fit: HmmFit, family: str) -> dict:
    """Embed an exponential fit in a richer family at its nesting point."""
    if family == "gamma":
        steps = tuple((p[0], p[0]) for p in fit.step_params)
    elif family == "weibull":
        steps = tuple((1.0, p[0]) for p in fit.step_params)
    else:
        steps = fit.step_params
    return {"initial": fit.initial, "transition": fit.transition,
            "step_params": steps, "turn_params": fit.turn_params}


@dataclass(frozen=True)
class FamilyComparison:
    fits: dict

    @property
    def best(self) -> HmmFit:
        return min(self.fits.values(), key=lambda f: f.aic)

    def table(self) -> list[dict]:
        best = self.best.aic
        rows = [{"step_family": f.step_family, "turn_family": f.turn_family, "loglik": f.loglik,
                 "n_params": f.n_params, "aic": f.aic, "delta_aic": f.aic - best,
                 "converged": f.converged} for f in self.fits.values()]
        return sorted(rows, key=lambda r: r["aic"])

    def report(self) -> dict:
        return {"aic_table": self.table(), "best": self.best.to_dict(),
                "fits": [f.to_dict() for f in self.fits.values()]}


def fit_families(series: StepSeries, step_families: Iterable[str] = dist.STEP_FAMILIES,
                 turn_families: Iterable[str] = dist.TURN_FAMILIES, **kwargs) -> FamilyComparison:
    """Fit every step/turn family combination and rank them by AIC.

    Exponential fits (when requested) seed the gamma and Weibull fits with
    the same turning family, so the richer nested family never ends below
    its special case.
    """
    step_families = list(step_families)
    turn_families = list(turn_families)
    order = sorted(step_families, key=lambda f: f != "exponential")
    fits = {}
    for turn in turn_families:
        for step in order:
            extra = []
            expo = fits.get(("exponential", turn))
            if expo is not None and step != "exponential":
                extra.append(_exponential_as_start(expo, step))
            fits[(step, turn)] = fit_hmm(series, step, turn, extra_starts=extra, **kwargs)
    ordered = {k: fits[k] for k in itertools.product(step_families, turn_families)}
    return FamilyComparison(ordered)


def _fit_logs(fit: HmmFit, series: StepSeries) -> np.ndarray:
    return emission_logs(fit.step_family, fit.turn_family, fit.step_params, fit.turn_params,
                         _prepared_lengths(series), series.turns)


def viterbi_decode(fit: HmmFit, series: StepSeries) -> np.ndarray:
    """Most probable state path (0 encamped, 1 exploratory)."""
    if len(series) == 0:
        return np.zeros(0, dtype=np.intp)
    return np.asarray(kernels.viterbi(_log(fit.initial), _log(fit.transition), _fit_logs(fit, series),
                                      series.starts.astype(np.uint8)), dtype=np.intp)


def state_posteriors(fit: HmmFit, series: StepSeries) -> np.ndarray:
    """(T, 2) smoothed state probabilities."""
    log_b = _fit_logs(fit, series)
    starts = series.starts.astype(np.uint8)
    alpha, _ = kernels.forward_log(_log(fit.initial), _log(fit.transition), log_b, starts)
    beta = kernels.backward_log(_log(fit.transition), log_b, starts)
    post = alpha + beta
    return np.exp(post - logsumexp(post, axis=1, keepdims=True))


def path_loglik(fit: HmmFit, series: StepSeries, path: Sequence[int]) -> float:
    """Joint log-density of the observations and a given state path."""
    log_b = _fit_logs(fit, series)
    ld, lg = _log(fit.initial), _log(fit.transition)
    path = np.asarray(path, dtype=np.intp)
    total = 0.0
    for t, s in enumerate(path):
        if series.starts[t]:
            total += ld[s]
        else:
            total += lg[path[t - 1], s]
        total += log_b[t, s]
    return float(total)
