"""Trial designs for group sequential experiments with normal endpoints.

A design is a stage schedule (patients per stage), futility/efficacy
boundaries on the cumulative-sample-mean scale, and a known outcome
standard deviation.  Decisions compare the running cumulative mean
``xbar_(s)`` against ``(f_s, e_s)``: at or below ``f_s`` stops for
futility, at or above ``e_s`` stops for efficacy, strictly inside
continues.  Infinite entries disable a boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InconsistentTrajectory, LengthMismatch

EFFICACY = 1
CONTINUE = 0
FUTILITY = -1


@dataclass(frozen=True)
class StageSchedule:
    """Per-stage group sizes and derived cumulative sample sizes."""

    group_sizes: tuple[int, ...]
    cumulative_sizes: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if len(self.group_sizes) < 1:
            raise ValueError("schedule needs at least one stage")
        if any(int(n) != n or n < 1 for n in self.group_sizes):
            raise ValueError(f"group sizes must be positive integers, got {self.group_sizes}")
        sizes = tuple(int(n) for n in self.group_sizes)
        object.__setattr__(self, "group_sizes", sizes)
        object.__setattr__(self, "cumulative_sizes", tuple(np.cumsum(sizes).tolist()))

    @property
    def n_stages(self) -> int:
        return len(self.group_sizes)

    @property
    def max_sample_size(self) -> int:
        return self.cumulative_sizes[-1]


@dataclass(frozen=True)
class BoundarySet:
    """Futility and efficacy boundaries on the cumulative-mean scale.

    ``-inf`` futility or ``+inf`` efficacy entries disable that stop.  The
    final-stage pair may coincide (binary final analysis) or differ, in
    which case final values strictly between them are indeterminate.
    """

    futility: tuple[float, ...]
    efficacy: tuple[float, ...]

    def __post_init__(self):
        f = tuple(float(x) for x in self.futility)
        e = tuple(float(x) for x in self.efficacy)
        if len(f) != len(e):
            raise LengthMismatch(f"futility has length {len(f)}, efficacy {len(e)}")
        for s, (fs, es) in enumerate(zip(f[:-1], e[:-1]), start=1):
            if not fs < es:
                raise ValueError(f"stage {s}: futility {fs} must lie below efficacy {es}")
        if not f[-1] <= e[-1]:
            raise ValueError("final-stage futility boundary exceeds the efficacy boundary")
        object.__setattr__(self, "futility", f)
        object.__setattr__(self, "efficacy", e)

    @property
    def n_stages(self) -> int:
        return len(self.efficacy)

    def mirrored(self) -> "BoundarySet":
        """Swap and negate the boundary roles: (f, e) -> (-e, -f)."""
        return BoundarySet(
            futility=tuple(-x for x in self.efficacy),
            efficacy=tuple(-x for x in self.futility),
        )


@dataclass(frozen=True)
class OutcomeModel:
    """Normal outcome with known standard deviation."""

    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")


@dataclass(frozen=True)
class TrialDesign:
    schedule: StageSchedule
    boundaries: BoundarySet
    outcome: OutcomeModel

    def __post_init__(self):
        if self.boundaries.n_stages != self.schedule.n_stages:
            raise LengthMismatch(
                f"boundaries cover {self.boundaries.n_stages} stages, "
                f"schedule has {self.schedule.n_stages}"
            )

    @property
    def n_stages(self) -> int:
        return self.schedule.n_stages

    @property
    def sigma(self) -> float:
        return self.outcome.sigma

    @property
    def n_cum(self) -> tuple[int, ...]:
        return self.schedule.cumulative_sizes


def design(group_sizes: Sequence[int], futility: Sequence[float],
           efficacy: Sequence[float], sigma: float) -> TrialDesign:
    """Convenience constructor assembling the three design components."""
    return TrialDesign(
        schedule=StageSchedule(tuple(group_sizes)),
        boundaries=BoundarySet(tuple(futility), tuple(efficacy)),
        outcome=OutcomeModel(sigma),
    )


@dataclass(frozen=True)
class DecisionPath:
    """Realized interim decisions up to and including the stopping stage.

    ``decisions`` holds one entry per analysed stage: 0 for continue,
    +1/-1 for an efficacy/futility stop.  All entries before the stopping
    stage are 0.  When the trial runs to the final stage the terminal
    label is recorded in ``terminal_kind`` but is not part of the
    conditioning event used by the design likelihood.
    """

    decisions: tuple[int, ...]
    stopping_stage: int
    terminal_kind: str  # efficacy | futility | indeterminate | interim-continue

    def __post_init__(self):
        if self.stopping_stage != len(self.decisions):
            raise ValueError("stopping stage must equal the number of recorded decisions")
        if any(d != 0 for d in self.decisions[:-1]):
            raise ValueError("only the last recorded decision may be a stop")
        if self.terminal_kind not in ("efficacy", "futility", "indeterminate", "interim-continue"):
            raise ValueError(f"unknown terminal kind {self.terminal_kind!r}")

    @property
    def stopped_early(self) -> bool:
        return self.decisions[-1] != 0

    @property
    def last_decision(self) -> int:
        return self.decisions[-1]


def _stage_decision(xbar: float, lo: float, hi: float) -> int:
    # boundary hits count as stops
    if xbar <= lo:
        return FUTILITY
    if xbar >= hi:
        return EFFICACY
    return CONTINUE


def path_from_data(design: TrialDesign, xbar_seq: Sequence[float]) -> DecisionPath:
    """Extract the decision path implied by observed cumulative means.

    Args:
        design: the trial design supplying boundaries.
        xbar_seq: cumulative sample means for the stages analysed so far,
            in stage order; length between 1 and the number of stages.

    Returns:
        The unique decision path for the data.

    Raises:
        LengthMismatch: empty sequence or more entries than stages.
        InconsistentTrajectory: the sequence continues past a stage at
            which the boundaries mandated a stop.
    """
    xb = [float(x) for x in xbar_seq]
    S = design.n_stages
    if not 1 <= len(xb) <= S:
        raise LengthMismatch(f"need between 1 and {S} cumulative means, got {len(xb)}")
    f, e = design.boundaries.futility, design.boundaries.efficacy
    decisions = []
    for s, x in enumerate(xb, start=1):
        d = _stage_decision(x, f[s - 1], e[s - 1])
        at_final = s == S
        if d != CONTINUE and s < len(xb) and not at_final:
            raise InconsistentTrajectory(
                f"data continue past stage {s} where xbar={x} mandates a stop"
            )
        decisions.append(d)
    s_star = len(decisions)
    last = decisions[-1]
    if s_star < S:
        kind = {EFFICACY: "efficacy", FUTILITY: "futility", CONTINUE: "interim-continue"}[last]
    else:
        kind = {EFFICACY: "efficacy", FUTILITY: "futility", CONTINUE: "indeterminate"}[last]
    return DecisionPath(tuple(decisions), s_star, kind)


def conditioning_intervals(design: TrialDesign, path: DecisionPath) -> list[tuple[float, float]]:
    """Per-stage cumulative-mean intervals defining the conditioning event.

    Stages before the stopping stage contribute their continuation
    interval.  An early stop contributes the matching tail.  A path that
    reaches the final stage contributes only the interim continuations:
    the final decision is fixed a priori and carries no information.
    """
    f, e = design.boundaries.futility, design.boundaries.efficacy
    s_star = path.stopping_stage
    S = design.n_stages
    iv = [(f[t], e[t]) for t in range(s_star - 1)]
    if s_star < S:
        d = path.last_decision
        if d == EFFICACY:
            iv.append((e[s_star - 1], math.inf))
        elif d == FUTILITY:
            iv.append((-math.inf, f[s_star - 1]))
        else:
            iv.append((f[s_star - 1], e[s_star - 1]))
    # s_star == S: interim continuations only
    return iv


@dataclass(frozen=True)
class QuadratureSpec:
    """Numerical accuracy knobs for the likelihood recursion and posteriors.

    ``nodes_per_stage`` Gauss-Legendre nodes resolve each continuation
    interval; infinite intervals are truncated ``tail_halfwidth_sd``
    conditional standard deviations beyond the relevant anchors.
    ``bayes_factor_nodes`` sets the Gauss-Hermite order used for
    posterior expectations of design-likelihood functionals.
    """

    nodes_per_stage: int = 64
    tail_halfwidth_sd: float = 8.0
    bayes_factor_nodes: int = 320
    log_floor: float = -700.0

    def __post_init__(self):
        if self.nodes_per_stage < 8:
            raise ValueError("nodes_per_stage must be at least 8")
        if self.tail_halfwidth_sd < 4:
            raise ValueError("tail_halfwidth_sd must be at least 4")
        if self.bayes_factor_nodes < 8:
            raise ValueError("bayes_factor_nodes must be at least 8")


DEFAULT_QUAD = QuadratureSpec()
