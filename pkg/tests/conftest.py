"""Shared builders for the reference three-stage design."""

import pytest

import seqposterior as sp

TAU0_SQ = (10.0 / 6.0) ** 2  # prior sd = 10 * sigma / sqrt(36)


@pytest.fixture(scope="session")
def three_stage_design() -> sp.TrialDesign:
    """Three stages of 12 patients, O'Brien-Fleming shape, one-sided alpha 0.05.

    Boundaries are calibrated exactly (they round to the display values
    (0.85, 0.43, 0.28)); mirrored nonbinding futility.
    """
    schedule = sp.StageSchedule((12, 12, 12))
    target = sp.CalibrationTarget(alpha=0.05, power=0.9, theta_alt=0.5,
                                  futility_mode="nonbinding_mirror")
    return sp.build_classical_design(sp.OBF, schedule, target, sigma=1.0)


@pytest.fixture(scope="session")
def weak_prior() -> sp.NormalPrior:
    return sp.NormalPrior(0.0, TAU0_SQ)


@pytest.fixture(scope="session")
def vacuous_design() -> sp.TrialDesign:
    inf = float("inf")
    return sp.design([10, 10, 10], [-inf, -inf, -inf], [inf, inf, inf], 1.0)
