"""Design likelihoods and stopping distributions via a Markov recursion.

The cumulative sample means of a group sequential trial form a Markov
chain: given the previous cumulative mean, the next is normal with a
known shift and shrinking variance.  Every probability here is a forward
propagation of the continuation sub-density through the stage intervals,
with Gauss-Legendre panels resolving each continuation region and exact
normal tail masses closing the last stage.  All accumulation happens in
log space so likelihoods remain usable far outside the continuation
region, exactly where conditional posteriors need them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr, logsumexp, roots_legendre

from .design import (
    DEFAULT_QUAD,
    DecisionPath,
    QuadratureSpec,
    TrialDesign,
    conditioning_intervals,
)
from .errors import NumericalUnderflow

_LOG_2PI = math.log(2.0 * math.pi)
_ROOTS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _legendre(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    if nodes not in _ROOTS_CACHE:
        _ROOTS_CACHE[nodes] = roots_legendre(nodes)
    return _ROOTS_CACHE[nodes]


def _log_normal_pdf(x, mu, sd):
    z = (x - mu) / sd
    return -0.5 * z * z - 0.5 * _LOG_2PI - np.log(sd)


def log_interval_mass(mu, sd, lo: float, hi: float):
    """log P(lo < X < hi) for X ~ N(mu, sd^2), vectorized over mu.

    The CDF difference is evaluated in whichever tail keeps both terms on
    the same side of the mean, avoiding the 1 - 1 cancellation when the
    interval sits far from the bulk.
    """
    mu = np.asarray(mu, dtype=float)
    if math.isinf(lo) and math.isinf(hi):
        return np.zeros_like(mu)
    if math.isinf(hi):
        return log_ndtr((mu - lo) / sd)
    if math.isinf(lo):
        return log_ndtr((hi - mu) / sd)
    zlo = (lo - mu) / sd
    zhi = (hi - mu) / sd
    use_left = mu >= 0.5 * (lo + hi)
    a = np.where(use_left, log_ndtr(zhi), log_ndtr(-zlo))
    b = np.where(use_left, log_ndtr(zlo), log_ndtr(-zhi))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = a + np.log1p(-np.exp(b - a))
    return np.where(b >= a, -np.inf, out)


def _panel_bounds(lo, hi, cond_mean, cond_sd, downstream, pad):
    """Finite node window for one continuation interval.

    Finite intervals are used whole.  Infinite sides are clipped to a
    window anchored on the conditional-mean hull and on every finite
    boundary the path can still meet: trajectories that must bend back
    toward a later boundary concentrate near those anchors rather than
    near the current-stage mean.
    """
    if math.isfinite(lo) and math.isfinite(hi):
        n = cond_mean.shape[0]
        return np.full(n, lo), np.full(n, hi)
    lo_w = cond_mean.min(axis=-1) - pad
    hi_w = cond_mean.max(axis=-1) + pad
    if downstream:
        lo_w = np.minimum(lo_w, min(downstream) - 2.0 * pad)
        hi_w = np.maximum(hi_w, max(downstream) + 2.0 * pad)
    return np.maximum(lo, lo_w), np.minimum(hi, hi_w)


def _log_path_probability(theta: np.ndarray, n_cum: Sequence[int], sigma: float,
                          intervals: Sequence[tuple[float, float]],
                          quad: QuadratureSpec) -> np.ndarray:
    """Forward recursion for log P(every stage mean in its interval | theta)."""
    # full-line intervals do not constrain; the Markov kernel composes across
    # them exactly, so dropping the stage keeps the result exact
    kept = [(iv, n) for iv, n in zip(intervals, n_cum)
            if not (math.isinf(iv[0]) and math.isinf(iv[1]))]
    if not kept:
        return np.zeros(theta.shape[0])
    intervals = [iv for iv, _ in kept]
    n_cum = [n for _, n in kept]
    gl_x, gl_w = _legendre(quad.nodes_per_stage)
    log_psi = np.zeros((theta.shape[0], 1))
    xs = None
    prev_n = 0
    for t, (lo, hi) in enumerate(intervals):
        n_t = n_cum[t]
        if t == 0:
            cond_mean = theta[:, None]
            cond_sd = sigma / math.sqrt(n_t)
        else:
            m_t = n_t - prev_n
            cond_mean = (prev_n * xs + m_t * theta[:, None]) / n_t
            cond_sd = math.sqrt(m_t) * sigma / n_t
        if t == len(intervals) - 1:
            return logsumexp(log_psi + log_interval_mass(cond_mean, cond_sd, lo, hi), axis=-1)
        downstream = [b for iv in intervals[t:] for b in iv if math.isfinite(b)]
        lo_t, hi_t = _panel_bounds(lo, hi, cond_mean, cond_sd, downstream,
                                   quad.tail_halfwidth_sd * cond_sd)
        mid = 0.5 * (hi_t + lo_t)
        half = 0.5 * (hi_t - lo_t)
        new_xs = mid[:, None] + half[:, None] * gl_x[None, :]
        with np.errstate(divide="ignore"):
            log_w = np.log(gl_w)[None, :] + np.log(np.maximum(half, 0.0))[:, None]
        if t == 0:
            log_psi = log_w + _log_normal_pdf(new_xs, cond_mean, cond_sd)
        else:
            log_k = _log_normal_pdf(new_xs[:, None, :], cond_mean[:, :, None], cond_sd)
            log_psi = log_w + logsumexp(log_psi[:, :, None] + log_k, axis=1)
        xs = new_xs
        prev_n = n_t
    raise AssertionError("unreachable")


def log_design_likelihood(design: TrialDesign, path: DecisionPath, theta,
                          quad: QuadratureSpec = DEFAULT_QUAD,
                          chunk: int = 512) -> np.ndarray:
    """log design likelihood, vectorized over theta; never raises on underflow."""
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=float))
    intervals = conditioning_intervals(design, path)
    n_cum = design.n_cum
    out = np.empty(theta_arr.shape[0])
    for start in range(0, theta_arr.shape[0], chunk):
        sl = slice(start, start + chunk)
        out[sl] = _log_path_probability(theta_arr[sl], n_cum, design.sigma, intervals, quad)
    return out


def design_likelihood(design: TrialDesign, path: DecisionPath, theta: float,
                      quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Probability of the realized decision sequence given theta.

    Args:
        design: trial design.
        path: realized decision path (see ``path_from_data``).
        theta: true mean of the outcome distribution.
        quad: accuracy knobs; ``quad.log_floor`` sets the underflow floor.

    Returns:
        P(decision sequence | theta), in (0, 1].

    Raises:
        NumericalUnderflow: the log-probability fell below ``quad.log_floor``.
    """
    if not math.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta}")
    logp = float(log_design_likelihood(design, path, theta, quad)[0])
    if logp < quad.log_floor:
        raise NumericalUnderflow(
            f"log design likelihood {logp:.1f} below floor {quad.log_floor:.1f}"
        )
    return math.exp(min(logp, 0.0))


@dataclass(frozen=True)
class StoppingDistribution:
    """P(stop at stage s with each decision | theta) for one design."""

    n_cum: tuple[int, ...]
    efficacy: np.ndarray
    futility: np.ndarray
    indeterminate: float

    @property
    def n_stages(self) -> int:
        return len(self.n_cum)

    @property
    def total(self) -> float:
        return float(self.efficacy.sum() + self.futility.sum() + self.indeterminate)

    @property
    def total_efficacy(self) -> float:
        return float(self.efficacy.sum())

    @property
    def total_futility(self) -> float:
        return float(self.futility.sum())

    def stage_totals(self) -> np.ndarray:
        """P(stopping stage = s), folding the indeterminate mass into stage S."""
        out = self.efficacy + self.futility
        out[-1] += self.indeterminate
        return out

    def expected_sample_size(self) -> float:
        return float(np.dot(self.stage_totals(), self.n_cum))


def stopping_probabilities(design: TrialDesign, theta: float,
                           quad: QuadratureSpec = DEFAULT_QUAD) -> StoppingDistribution:
    """Full stopping-stage/decision distribution at a given theta.

    One forward pass computes, for each interim stage, the efficacy and
    futility exit masses and propagates the continuation sub-density; the
    final stage splits its mass by the final boundary pair.
    """
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta_arr.shape[0] != 1:
        raise ValueError("stopping_probabilities evaluates one theta at a time")
    f, e = design.boundaries.futility, design.boundaries.efficacy
    n_cum = design.n_cum
    sigma = design.sigma
    S = design.n_stages
    gl_x, gl_w = _legendre(quad.nodes_per_stage)

    eff = np.zeros(S)
    fut = np.zeros(S)
    indet = 0.0
    log_psi = np.zeros((1, 1))
    xs = None
    prev_n = 0
    for s in range(S):
        n_t = n_cum[s]
        if s == 0:
            cond_mean = theta_arr[:, None]
            cond_sd = sigma / math.sqrt(n_t)
        else:
            m_t = n_t - prev_n
            cond_mean = (prev_n * xs + m_t * theta_arr[:, None]) / n_t
            cond_sd = math.sqrt(m_t) * sigma / n_t
        lo, hi = f[s], e[s]
        last = s == S - 1
        if not math.isinf(lo):
            fut[s] = math.exp(logsumexp(log_psi + log_ndtr((lo - cond_mean) / cond_sd)))
        if not math.isinf(hi):
            eff[s] = math.exp(logsumexp(log_psi + log_ndtr((cond_mean - hi) / cond_sd)))
        if last:
            if lo < hi:
                indet = math.exp(logsumexp(log_psi + log_interval_mass(cond_mean, cond_sd, lo, hi)))
            break
        downstream = [b for iv in zip(f[s:], e[s:]) for b in iv if math.isfinite(b)]
        lo_t, hi_t = _panel_bounds(lo, hi, cond_mean, cond_sd, downstream,
                                   quad.tail_halfwidth_sd * cond_sd)
        mid = 0.5 * (hi_t + lo_t)
        half = 0.5 * (hi_t - lo_t)
        new_xs = mid[:, None] + half[:, None] * gl_x[None, :]
        with np.errstate(divide="ignore"):
            log_w = np.log(gl_w)[None, :] + np.log(np.maximum(half, 0.0))[:, None]
        if s == 0:
            log_psi = log_w + _log_normal_pdf(new_xs, cond_mean, cond_sd)
        else:
            log_k = _log_normal_pdf(new_xs[:, None, :], cond_mean[:, :, None], cond_sd)
            log_psi = log_w + logsumexp(log_psi[:, :, None] + log_k, axis=1)
        xs = new_xs
        prev_n = n_t
    return StoppingDistribution(n_cum=n_cum, efficacy=eff, futility=fut, indeterminate=indet)


def expected_sample_size(design: TrialDesign, theta: float,
                         quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """ESS(theta): stopping-probability-weighted cumulative sample size."""
    return stopping_probabilities(design, theta, quad).expected_sample_size()
