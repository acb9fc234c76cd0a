"""Boundary generation and calibration to error-rate targets.

Two boundary families are provided in two flavors each.  The classical
flavor imposes the family's shape across stages (Pocock: constant on
the z scale; O'Brien-Fleming: constant on the cumulative-sum scale,
i.e. z proportional to one over the square root of the information
fraction) and calibrates a single scale constant so the total one-sided
efficacy crossing probability under the null equals alpha.  The
spending flavor follows the Lan-DeMets construction: a cumulative alpha
budget per information fraction, with each stage boundary solved so the
incremental crossing probability matches the budget increment.  Both
solve on the cumulative-mean scale with the exact Markov recursion, so
unequal stage sizes need no special casing.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from .design import (
    DEFAULT_QUAD,
    BoundarySet,
    OutcomeModel,
    QuadratureSpec,
    StageSchedule,
    TrialDesign,
)
from .errors import DomainError, NonmonotoneSpending, NoRoot
from .likelihood import _log_path_probability, stopping_probabilities

POCOCK = "pocock_type"
OBF = "obf_type"


@dataclass(frozen=True)
class SpendingFunction:
    """Lan-DeMets alpha-spending family and total one-sided budget."""

    kind: str
    alpha: float

    def __post_init__(self):
        if self.kind not in (POCOCK, OBF):
            raise ValueError(f"unknown spending kind {self.kind!r}")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")


@dataclass(frozen=True)
class CalibrationTarget:
    """Error-rate targets for boundary and sample-size calibration."""

    alpha: float
    power: float
    theta_alt: float
    theta_null: float = 0.0
    futility_mode: str = "none"  # none | nonbinding_mirror | binding

    def __post_init__(self):
        if not 0.0 < self.alpha < self.power < 1.0:
            raise ValueError("need 0 < alpha < power < 1")
        if self.futility_mode not in ("none", "nonbinding_mirror", "binding"):
            raise ValueError(f"unknown futility mode {self.futility_mode!r}")


@dataclass(frozen=True)
class InformationSchedule:
    """Strictly increasing information fractions ending at 1."""

    fractions: tuple[float, ...]

    def __post_init__(self):
        f = tuple(float(x) for x in self.fractions)
        if len(f) < 1 or any(not 0.0 < x <= 1.0 for x in f):
            raise ValueError("fractions must lie in (0, 1]")
        if any(b <= a for a, b in zip(f, f[1:])):
            raise ValueError("fractions must be strictly increasing")
        if f[-1] != 1.0:
            raise ValueError("final fraction must equal 1")
        object.__setattr__(self, "fractions", f)

    def sample_sizes(self, n_max: int) -> tuple[int, ...]:
        """Cumulative sizes, rounding half-up to whole patients."""
        n = tuple(int(math.floor(n_max * t + 0.5)) for t in self.fractions)
        if n[0] < 1 or any(b <= a for a, b in zip(n, n[1:])):
            raise ValueError(f"n_max={n_max} cannot realize fractions {self.fractions}")
        return n

    def schedule(self, n_max: int) -> StageSchedule:
        n = self.sample_sizes(n_max)
        return StageSchedule(tuple(np.diff([0, *n]).tolist()))


def spending_value(fn: SpendingFunction, t: float) -> float:
    """Cumulative alpha spent at information fraction t.

    OBF-type: 2(1 - Phi(z_{1-alpha/2} / sqrt(t))); Pocock-type:
    alpha * ln(1 + (e-1) t).  Both are 0+ at t -> 0 and exactly alpha at
    t = 1.
    """
    if not 0.0 < t <= 1.0:
        raise DomainError(f"information fraction must lie in (0, 1], got {t}")
    if fn.kind == OBF:
        z = ndtri(1.0 - fn.alpha / 2.0)
        return 2.0 * (1.0 - ndtr(z / math.sqrt(t)))
    return fn.alpha * math.log1p((math.e - 1.0) * t)


def _efficacy_crossing(efficacy: Sequence[float], continuation_lower: Sequence[float],
                       n_cum: Sequence[int], sigma: float, theta: float,
                       quad: QuadratureSpec) -> float:
    """Total probability of crossing any efficacy boundary.

    ``continuation_lower`` gives the lower continuation limit per interim
    stage: -inf when futility is absent or nonbinding.
    """
    th = np.asarray([theta], dtype=float)
    total = 0.0
    for s in range(1, len(efficacy) + 1):
        iv = [(continuation_lower[t], efficacy[t]) for t in range(s - 1)]
        iv.append((efficacy[s - 1], math.inf))
        total += math.exp(_log_path_probability(th, n_cum, sigma, iv, quad)[0])
    return total


def _shape_boundaries(kind: str, n_cum: Sequence[int], sigma: float,
                      theta_null: float, c: float) -> list[float]:
    n_last = n_cum[-1]
    out = []
    for n in n_cum:
        z = c if kind == POCOCK else c / math.sqrt(n / n_last)
        out.append(theta_null + z * sigma / math.sqrt(n))
    return out


def _assemble(efficacy: Sequence[float], futility_mode: str,
              theta_null: float) -> BoundarySet:
    S = len(efficacy)
    if futility_mode == "none":
        fut = [-math.inf] * (S - 1) + [efficacy[-1]]
    else:
        fut = [2.0 * theta_null - e for e in efficacy]
    return BoundarySet(futility=tuple(fut), efficacy=tuple(efficacy))


def classical_boundaries(kind: str, schedule: StageSchedule, target: CalibrationTarget,
                         sigma: float, quad: QuadratureSpec = DEFAULT_QUAD) -> BoundarySet:
    """Constant-shape boundaries calibrated to the type-I error target.

    The scale constant solves total efficacy crossing = alpha at
    ``theta_null``; futility boundaries are mirrors of the efficacy ones
    about ``theta_null`` (or absent), and enter the alpha computation
    only in ``binding`` mode.
    """
    if kind not in (POCOCK, OBF):
        raise ValueError(f"unknown boundary kind {kind!r}")
    n_cum = schedule.cumulative_sizes
    binding = target.futility_mode == "binding"

    def shortfall(c: float) -> float:
        e = _shape_boundaries(kind, n_cum, sigma, target.theta_null, c)
        if binding:
            cont_lo = [2.0 * target.theta_null - x for x in e]
        else:
            cont_lo = [-math.inf] * len(e)
        return _efficacy_crossing(e, cont_lo, n_cum, sigma, target.theta_null, quad) - target.alpha

    lo, hi = 0.05, 6.0
    f_lo, f_hi = shortfall(lo), shortfall(hi)
    for _ in range(8):
        if f_lo > 0 > f_hi:
            break
        if f_lo <= 0:
            lo /= 4.0
            f_lo = shortfall(lo)
        if f_hi >= 0:
            hi *= 2.0
            f_hi = shortfall(hi)
    else:
        raise NoRoot(f"no boundary scale in z bracket [{lo:.3g}, {hi:.3g}] hits alpha={target.alpha}")
    c = brentq(shortfall, lo, hi, xtol=1e-12, rtol=1e-14)
    e = _shape_boundaries(kind, n_cum, sigma, target.theta_null, c)
    return _assemble(e, target.futility_mode, target.theta_null)


def spending_boundaries(fn: SpendingFunction, info: InformationSchedule, n_max: int,
                        sigma: float, theta_null: float = 0.0,
                        quad: QuadratureSpec = DEFAULT_QUAD) -> BoundarySet:
    """Lan-DeMets boundaries for an information schedule.

    Each stage boundary is solved so the incremental efficacy crossing
    probability under ``theta_null`` equals the spending increment; the
    final stage spends the budget exactly.  Futility is absent (the
    final-stage pair coincides, making the last analysis binary).
    """
    S = len(info.fractions)
    if n_max < S:
        raise ValueError(f"n_max={n_max} smaller than the number of stages {S}")
    n_cum = info.sample_sizes(n_max)
    e: list[float] = []
    spent = 0.0
    th = np.asarray([theta_null], dtype=float)
    for s, t in enumerate(info.fractions, start=1):
        cum = fn.alpha if s == S else spending_value(fn, t)
        inc = cum - spent
        if inc < -1e-15:
            raise NonmonotoneSpending(f"negative increment {inc:.3e} at fraction {t}")
        inc = max(inc, 1e-300)
        spent = cum
        sd_s = sigma / math.sqrt(n_cum[s - 1])
        if s == 1:
            e.append(theta_null + ndtri(1.0 - inc) * sd_s)
            continue

        def shortfall(es: float) -> float:
            iv = [(-math.inf, e[t2]) for t2 in range(s - 1)] + [(es, math.inf)]
            return math.exp(_log_path_probability(th, n_cum[:s], sigma, iv, quad)[0]) - inc

        lo = theta_null - 2.0 * sd_s
        hi = theta_null + 40.0 * sd_s
        if not shortfall(lo) > 0 > shortfall(hi):
            raise NoRoot(f"stage {s}: increment {inc:.3e} not bracketed in [{lo:.3g}, {hi:.3g}]")
        e.append(brentq(shortfall, lo, hi, xtol=1e-13, rtol=1e-15))
    return _assemble(e, "none", theta_null)


def _design_power(design: TrialDesign, theta: float, quad: QuadratureSpec) -> float:
    """Total efficacy-stop probability with the design's futility active."""
    return stopping_probabilities(design, theta, quad).total_efficacy


def build_spending_design(fn: SpendingFunction, info: InformationSchedule, n_max: int,
                          sigma: float, theta_null: float = 0.0,
                          quad: QuadratureSpec = DEFAULT_QUAD) -> TrialDesign:
    return TrialDesign(
        schedule=info.schedule(n_max),
        boundaries=spending_boundaries(fn, info, n_max, sigma, theta_null, quad),
        outcome=OutcomeModel(sigma),
    )


def build_classical_design(kind: str, schedule: StageSchedule, target: CalibrationTarget,
                           sigma: float, quad: QuadratureSpec = DEFAULT_QUAD) -> TrialDesign:
    return TrialDesign(
        schedule=schedule,
        boundaries=classical_boundaries(kind, schedule, target, sigma, quad),
        outcome=OutcomeModel(sigma),
    )


def calibrate_n_max(fn: SpendingFunction, info: InformationSchedule,
                    target: CalibrationTarget, sigma: float, method: str = "spending",
                    quad: QuadratureSpec = DEFAULT_QUAD,
                    cap: int = 10**6) -> tuple[int, BoundarySet]:
    """Smallest maximum sample size whose design reaches the power target.

    ``method`` selects the boundary construction: "spending" for the
    Lan-DeMets route, "classical" for the constant-shape route applied to
    the same information schedule.  Power is monotone in the sample size,
    so an integer bisection over a doubling bracket finds the answer.
    """
    if target.theta_alt <= target.theta_null:
        raise ValueError("theta_alt must exceed theta_null")
    if method not in ("spending", "classical"):
        raise ValueError(f"unknown method {method!r}")

    def build(n: int) -> TrialDesign:
        if method == "spending":
            return build_spending_design(fn, info, n, sigma, target.theta_null, quad)
        sched = info.schedule(n)
        kind_target = CalibrationTarget(
            alpha=fn.alpha, power=target.power, theta_alt=target.theta_alt,
            theta_null=target.theta_null, futility_mode=target.futility_mode,
        )
        return build_classical_design(fn.kind, sched, kind_target, sigma, quad)

    def power_at(n: int) -> float:
        try:
            d = build(n)
        except ValueError:
            return -1.0
        return _design_power(d, target.theta_alt, quad)

    floor = len(info.fractions)
    while power_at(floor) < 0:
        floor += 1
        if floor > cap:
            raise NoRoot(f"no feasible schedule below the cap {cap}")
    if power_at(floor) >= target.power:
        warnings.warn("power target already met at the minimal feasible sample size")
        return floor, build(floor).boundaries

    hi = max(2 * floor, 8)
    while power_at(hi) < target.power:
        hi *= 2
        if hi > cap:
            raise NoRoot(f"power {target.power} unreachable below n_max={cap}")
    lo = max(floor, hi // 2)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if power_at(mid) >= target.power:
            hi = mid
        else:
            lo = mid
    return hi, build(hi).boundaries


@dataclass(frozen=True)
class OperatingPoint:
    theta: float
    prob_efficacy: float
    prob_futility: float
    ess: float


def operating_characteristics(design: TrialDesign, theta_grid: Sequence[float],
                              quad: QuadratureSpec = DEFAULT_QUAD) -> list[OperatingPoint]:
    """Efficacy/futility crossing probabilities and ESS over a theta grid."""
    out = []
    for theta in theta_grid:
        sp = stopping_probabilities(design, float(theta), quad)
        out.append(OperatingPoint(
            theta=float(theta),
            prob_efficacy=sp.total_efficacy,
            prob_futility=sp.total_futility,
            ess=sp.expected_sample_size(),
        ))
    return out
