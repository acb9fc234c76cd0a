"""Adaptation-induced posterior divergence and grid information measures.

The headline metric is the KL divergence of the decision-conditional
posterior from the unconditional one.  It is computed three ways: the
direct grid integral, the Jensen-gap identity (log of the mean
reciprocal design likelihood minus the mean of its log, both against
the unconditional posterior), and a second-order Taylor surrogate kept
as a diagnostic only.  The first two are algebraically equal and their
agreement cross-validates the quadrature and grid machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .design import DEFAULT_QUAD, DecisionPath, QuadratureSpec, TrialDesign, path_from_data
from .errors import MismatchedGrids
from .likelihood import log_design_likelihood
from .posterior import (
    NormalPrior,
    PosteriorGrid,
    ThetaGrid,
    _hermite,
    _posterior_at_stop,
    conditional_grid,
    conditional_posterior,
    interval_mass,
    log_bayes_factor,
    summarize,
    unconditional_posterior,
)

_DENSITY_FLOOR = 1e-300


def _require_shared_grid(p: PosteriorGrid, q: PosteriorGrid):
    if not p.grid.same_as(q.grid):
        raise MismatchedGrids("densities live on different theta grids")


def surprisal(density_value: float) -> float:
    """-log of a density value: how unexpected a single outcome is."""
    return -math.log(density_value)


def kl_divergence(p: PosteriorGrid, q: PosteriorGrid) -> float:
    """Trapezoid KL divergence D(p || q) >= 0 on a shared grid.

    Points where p is below 1e-300 contribute nothing, so q may underflow
    anywhere p effectively vanishes.
    """
    _require_shared_grid(p, q)
    pd = p.density()
    ratio = p.log_density - q.log_density
    integrand = np.where(pd > _DENSITY_FLOOR, pd * ratio, 0.0)
    return max(float(np.trapezoid(integrand, p.grid.points)), 0.0)


def entropy(p: PosteriorGrid) -> float:
    """Shannon entropy E_p[-log p] in nats."""
    pd = p.density()
    integrand = np.where(pd > _DENSITY_FLOOR, -pd * p.log_density, 0.0)
    return float(np.trapezoid(integrand, p.grid.points))


def cross_entropy(p: PosteriorGrid, q: PosteriorGrid) -> float:
    """Cross entropy E_p[-log q] in nats, on a shared grid."""
    _require_shared_grid(p, q)
    pd = p.density()
    integrand = np.where(pd > _DENSITY_FLOOR, -pd * q.log_density, 0.0)
    return float(np.trapezoid(integrand, p.grid.points))


def aipd_direct(prior: NormalPrior, data: Sequence[float], path: DecisionPath,
                design: TrialDesign, grid: ThetaGrid | None = None,
                quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Direct KL divergence of the conditional from the unconditional posterior.

    With no grid supplied, one is widened automatically until the
    conditional posterior fits (see ``conditional_grid``).
    """
    if grid is None:
        grid, cond = conditional_grid(prior, data, path, design, quad)
    else:
        cond = conditional_posterior(prior, data, path, design, grid, quad)
    post = _posterior_at_stop(prior, data, path, design)
    uncond = PosteriorGrid.from_normal(grid, post)
    return kl_divergence(uncond, cond)


def _jensen_terms(prior: NormalPrior, data: Sequence[float], path: DecisionPath,
                  design: TrialDesign, quad: QuadratureSpec) -> tuple[float, float, float]:
    """(log E[1/L], E[log 1/L], log E[1/L^2]) against the unconditional posterior."""
    post = _posterior_at_stop(prior, data, path, design)
    x, w = _hermite(quad.bayes_factor_nodes)
    theta = post.mean + math.sqrt(2.0 * post.variance) * x
    logL = log_design_likelihood(design, path, theta, quad)
    log_w = np.log(w)
    log_b = max(float(logsumexp(log_w - logL)) - 0.5 * math.log(math.pi), 0.0)
    e_log_inv = float(np.sum(w * (-logL))) / math.sqrt(math.pi)
    log_e2 = float(logsumexp(log_w - 2.0 * logL)) - 0.5 * math.log(math.pi)
    return log_b, e_log_inv, log_e2


def aipd_jensen(prior: NormalPrior, data: Sequence[float], path: DecisionPath,
                design: TrialDesign, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """AIPD via the Jensen gap: log E[1/L_D] - E[log 1/L_D], grid free."""
    log_b, e_log_inv, _ = _jensen_terms(prior, data, path, design, quad)
    return max(log_b - e_log_inv, 0.0)


def _reciprocal_growth_rate(design: TrialDesign, path: DecisionPath) -> float:
    """Quadratic growth rate of -log L_D per theta^2/2, worst direction.

    As theta runs to +/- infinity the cheapest trajectory satisfying the
    conditioning event pays N_(T)/sigma^2 * theta^2/2, where T is the
    last stage whose interval has a finite bound blocking that direction.
    """
    from .design import conditioning_intervals

    intervals = conditioning_intervals(design, path)
    n_cum = design.n_cum
    rate_up = rate_down = 0.0
    for t, (lo, hi) in enumerate(intervals):
        if math.isfinite(hi):
            rate_up = n_cum[t] / design.sigma**2
        if math.isfinite(lo):
            rate_down = n_cum[t] / design.sigma**2
    return max(rate_up, rate_down)


def aipd_taylor(prior: NormalPrior, data: Sequence[float], path: DecisionPath,
                design: TrialDesign, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Second-order Taylor surrogate: Var(1/L_D) / (2 E[1/L_D]^2).

    An approximation with no error bound; report it alongside the exact
    forms, never instead of them.  The second moment of the reciprocal
    design likelihood exists only when the posterior decays faster than
    the squared reciprocal grows, i.e. when the prior is strong relative
    to the accumulated information; otherwise the surrogate is infinite
    and ``inf`` is returned.
    """
    post = _posterior_at_stop(prior, data, path, design)
    rate = _reciprocal_growth_rate(design, path)
    if 2.0 * post.variance * rate >= 1.0:
        return math.inf
    log_b, _, log_e2 = _jensen_terms(prior, data, path, design, quad)
    return max(0.5 * math.expm1(log_e2 - 2.0 * log_b), 0.0)


def hpd_interval(posterior: PosteriorGrid, level: float = 0.95) -> tuple[float, float]:
    """Highest-posterior-density interval of a unimodal grid posterior.

    Bisects the density threshold whose super-level set carries ``level``
    mass; endpoints are refined by linear interpolation of the density
    crossings.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    x = posterior.grid.points
    p = posterior.density()

    def _mass_and_bounds(t: float) -> tuple[float, float, float]:
        above = p >= t
        if not above.any():
            return 0.0, x[0], x[-1]
        i = int(np.argmax(above))
        j = len(above) - 1 - int(np.argmax(above[::-1]))
        mass = float(np.trapezoid(p[i:j + 1], x[i:j + 1]))
        lo, hi = x[i], x[j]
        # extend to the linearly interpolated threshold crossings
        if i > 0 and p[i] > t:
            frac = (p[i] - t) / (p[i] - p[i - 1])
            lo = x[i] - frac * (x[i] - x[i - 1])
            mass += 0.5 * (p[i] + t) * (x[i] - lo)
        if j < len(x) - 1 and p[j] > t:
            frac = (p[j] - t) / (p[j] - p[j + 1])
            hi = x[j] + frac * (x[j + 1] - x[j])
            mass += 0.5 * (p[j] + t) * (hi - x[j])
        return mass, lo, hi

    t_lo, t_hi = 0.0, float(p.max())
    lo = hi = None
    for _ in range(60):
        t = 0.5 * (t_lo + t_hi)
        mass, lo, hi = _mass_and_bounds(t)
        if mass > level:
            t_lo = t
        else:
            t_hi = t
    return float(lo), float(hi)


def _interval_overlap_pct(a: tuple[float, float], b: tuple[float, float]) -> float:
    """100 * |a intersect b| / |a union b| for two intervals."""
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = max(a[1], b[1]) - min(a[0], b[0])
    return 100.0 * inter / union if union > 0 else 100.0


@dataclass(frozen=True)
class AipdReport:
    """One scenario's divergence metrics and posterior discrepancies.

    ``pvr`` is the ratio of conditional to unconditional posterior
    standard deviations; ``ovci_pct`` is the percent overlap
    (intersection over union) between the conditional HPD interval and
    the unconditional credible interval; ``cpui_pct`` is the conditional
    mass inside the unconditional credible interval.  Location
    differences are conditional minus unconditional.
    """

    aipd: float
    ovci_pct: float
    cpui_pct: float
    pvr: float
    mean_diff: float
    mode_diff: float
    bayes_factor: float
    stage: int
    xbar: float
    decision: str

    def __post_init__(self):
        if self.aipd < 0 or self.pvr <= 0:
            raise ValueError("invalid report values")


def discrepancy_report(prior: NormalPrior, data: Sequence[float],
                       path: DecisionPath | None, design: TrialDesign,
                       level: float = 0.95, grid: ThetaGrid | None = None,
                       quad: QuadratureSpec = DEFAULT_QUAD) -> AipdReport:
    """All posterior-discrepancy metrics for one realized scenario.

    Args:
        prior: analysis prior.
        data: cumulative means up to the analysis stage.
        path: decision path; derived from the data when None.
        design: trial design.
        level: credible level for the interval-based columns.
        grid: optional evaluation grid; auto-widened when omitted.
        quad: accuracy knobs.
    """
    if path is None:
        path = path_from_data(design, data)
    if grid is None:
        grid, cond = conditional_grid(prior, data, path, design, quad)
    else:
        cond = conditional_posterior(prior, data, path, design, grid, quad)
    post = _posterior_at_stop(prior, data, path, design)
    uncond = PosteriorGrid.from_normal(grid, post)

    aipd = kl_divergence(uncond, cond)
    su = summarize(post, level)
    sc = summarize(cond, level)
    hpd_c = hpd_interval(cond, level)
    cpui = 100.0 * interval_mass(cond, su.equal_tailed_ci)
    ovci = _interval_overlap_pct(hpd_c, su.equal_tailed_ci)
    b = math.exp(log_bayes_factor(prior, data, path, design, quad))
    return AipdReport(
        aipd=aipd,
        ovci_pct=ovci,
        cpui_pct=cpui,
        pvr=sc.sd / su.sd,
        mean_diff=sc.mean - su.mean,
        mode_diff=sc.mode - su.mode,
        bayes_factor=b,
        stage=path.stopping_stage,
        xbar=float(data[-1]),
        decision=path.terminal_kind,
    )
