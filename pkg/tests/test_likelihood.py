import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal, norm

import seqposterior as sp
from seqposterior.errors import NumericalUnderflow
from seqposterior.likelihood import log_interval_mass

INF = float("inf")


def cumulative_mean_cov(n_cum, sigma):
    """Cov(Xbar_(s1), Xbar_(s2)) = sigma^2 / n_(max(s1, s2))."""
    s = len(n_cum)
    cov = np.empty((s, s))
    for i in range(s):
        for j in range(s):
            cov[i, j] = sigma**2 / n_cum[max(i, j)]
    return cov


class TestLogIntervalMass:
    @pytest.mark.parametrize("mu", [-3.0, 0.0, 1.4, 9.0])
    def test_matches_cdf_difference(self, mu):
        got = log_interval_mass(np.array([mu]), 0.7, -0.5, 1.2)[0]
        want = norm.cdf(1.2, mu, 0.7) - norm.cdf(-0.5, mu, 0.7)
        assert math.exp(got) == pytest.approx(want, rel=1e-12)

    def test_far_interval_no_cancellation(self):
        # interval 30+ sd below the mean: naive cdf difference returns 0
        got = log_interval_mass(np.array([10.0]), 0.3, -0.5, 0.5)[0]
        z = (10.0 - 0.5) / 0.3
        assert got == pytest.approx(norm.logsf(z), rel=1e-6)

    def test_one_sided_and_full(self):
        assert log_interval_mass(np.array([0.0]), 1.0, -INF, INF)[0] == 0.0
        up = log_interval_mass(np.array([0.0]), 1.0, 1.0, INF)[0]
        assert math.exp(up) == pytest.approx(norm.sf(1.0), rel=1e-12)


class TestDesignLikelihood:
    def test_single_stage_efficacy_tail(self):
        # 2-stage design stopped at interim 1 reduces to one normal tail
        d = sp.design([12, 10], [-INF, -INF], [0.85, INF], 1.0)
        path = sp.path_from_data(d, [1.2])
        for theta in (-1.0, 0.0, 0.7):
            want = norm.sf(0.85, loc=theta, scale=1 / math.sqrt(12))
            assert sp.design_likelihood(d, path, theta) == pytest.approx(want, rel=1e-12)

    def test_vacuous_boundaries_give_one(self, vacuous_design):
        path = sp.path_from_data(vacuous_design, [0.4, -0.2, 0.0])
        for theta in (-2.0, 0.0, 3.5):
            assert sp.design_likelihood(vacuous_design, path, theta) == 1.0

    def test_two_stage_continuation_vs_mvn_cdf(self, three_stage_design):
        d = three_stage_design
        f, e = d.boundaries.futility, d.boundaries.efficacy
        path = sp.path_from_data(d, [0.2, 0.1, 0.0])
        cov = cumulative_mean_cov(d.n_cum[:2], d.sigma)
        for theta in (0.0, 0.5, -0.8):
            mv = multivariate_normal(mean=[theta, theta], cov=cov)
            want = mv.cdf([e[0], e[1]], lower_limit=[f[0], f[1]])
            got = sp.design_likelihood(d, path, theta)
            assert got == pytest.approx(want, rel=5e-7)

    def test_three_stage_path_vs_mvn_cdf(self, three_stage_design):
        d = three_stage_design
        f, e = d.boundaries.futility, d.boundaries.efficacy
        path = sp.path_from_data(d, [0.2, 0.1, 0.9])  # efficacy at final
        cov = cumulative_mean_cov(d.n_cum, d.sigma)
        mv = multivariate_normal(mean=[0.3] * 2, cov=cov[:2, :2])
        want = mv.cdf([e[0], e[1]], lower_limit=[f[0], f[1]])
        # final decision is excluded: 3-stage path equals 2-stage continuation
        got = sp.design_likelihood(d, path, 0.3)
        assert got == pytest.approx(want, rel=5e-7)

    def test_monte_carlo_rectangle_oracle(self, three_stage_design):
        d = three_stage_design
        f, e = d.boundaries.futility, d.boundaries.efficacy
        path = sp.path_from_data(d, [0.2, -0.1, 0.35])
        theta = 0.3
        rng = np.random.default_rng(7)
        m = 400_000
        ns = np.diff([0, *d.n_cum])
        sums = np.cumsum(theta * ns + np.sqrt(ns) * rng.standard_normal((m, 3)), axis=1)
        xb = sums / np.asarray(d.n_cum)
        inside = (xb[:, 0] > f[0]) & (xb[:, 0] < e[0]) & (xb[:, 1] > f[1]) & (xb[:, 1] < e[1])
        p_hat = inside.mean()
        se = math.sqrt(p_hat * (1 - p_hat) / m)
        got = sp.design_likelihood(d, path, theta)
        assert abs(got - p_hat) < 3 * se

    def test_in_unit_interval(self, three_stage_design):
        path = sp.path_from_data(three_stage_design, [0.5, -0.6])
        for theta in np.linspace(-2, 2, 9):
            v = sp.design_likelihood(three_stage_design, path, float(theta))
            assert 0.0 < v <= 1.0

    def test_underflow_floor(self, three_stage_design):
        path = sp.path_from_data(three_stage_design, [1.0])
        q = sp.QuadratureSpec(log_floor=-50.0)
        with pytest.raises(NumericalUnderflow):
            sp.design_likelihood(three_stage_design, path, -3.0, q)
        # the log-space variant keeps going far below any floor
        lo = sp.log_design_likelihood(three_stage_design, path, np.array([-20.0]))[0]
        assert -4000 < lo < -1000

    def test_rejects_nonfinite_theta(self, three_stage_design):
        path = sp.path_from_data(three_stage_design, [1.0])
        with pytest.raises(ValueError):
            sp.design_likelihood(three_stage_design, path, math.nan)


class TestRecursionProperties:
    def test_partition_property(self, three_stage_design):
        # efficacy + futility + continue at stage 2 equals the stage-1
        # continuation mass, for shared-prefix design_likelihood calls
        d = three_stage_design
        for theta in (-1.0, 0.0, 0.4, 1.5):
            parts = []
            for xb2, kind in [(0.9, "efficacy"), (-0.9, "futility"), (0.0, "continue")]:
                path = sp.path_from_data(d, [0.2, xb2])
                parts.append(sp.design_likelihood(d, path, theta))
            prefix = sp.design_likelihood(d, sp.path_from_data(d, [0.2]), theta)
            assert sum(parts) == pytest.approx(prefix, rel=1e-10)

    def test_refinement_convergence(self, three_stage_design):
        # doubling nodes changes nothing beyond 1e-8 relative on [-2, 2]
        d = three_stage_design
        thetas = np.linspace(-2, 2, 41)
        for data in ([0.2, 0.1, 0.0], [0.5, -0.6], [1.0]):
            path = sp.path_from_data(d, data)
            a = sp.log_design_likelihood(d, path, thetas, sp.QuadratureSpec(nodes_per_stage=64))
            b = sp.log_design_likelihood(d, path, thetas, sp.QuadratureSpec(nodes_per_stage=128))
            assert np.max(np.abs(np.expm1(a - b))) < 1e-8

    def test_mirror_symmetry(self, three_stage_design):
        d = three_stage_design
        mirrored = sp.TrialDesign(d.schedule, d.boundaries.mirrored(), d.outcome)
        cases = [([1.0], [-1.0]), ([0.5, -0.6], [-0.5, 0.6]), ([0.2, 0.1, 0.05], [-0.2, -0.1, -0.05])]
        for data, neg_data in cases:
            path = sp.path_from_data(d, data)
            mpath = sp.path_from_data(mirrored, neg_data)
            for theta in (0.0, 0.7, -1.2):
                a = sp.design_likelihood(d, path, theta)
                b = sp.design_likelihood(mirrored, mpath, -theta)
                assert a == pytest.approx(b, rel=1e-12)

    @given(
        seed=st.integers(0, 10_000),
        n_stages=st.integers(2, 4),
        theta=st.floats(-1.0, 1.0),
    )
    @settings(max_examples=30, deadline=None)
    def test_stopping_probabilities_sum_to_one(self, seed, n_stages, theta):
        rng = np.random.default_rng(seed)
        sizes = rng.integers(3, 20, n_stages)
        e = np.sort(rng.uniform(0.1, 1.2, n_stages))[::-1]
        f = -np.sort(rng.uniform(0.1, 1.2, n_stages))[::-1]
        d = sp.design(sizes.tolist(), f.tolist(), e.tolist(), float(rng.uniform(0.5, 2.0)))
        sd = sp.stopping_probabilities(d, theta)
        assert sd.total == pytest.approx(1.0, abs=1e-8)
        assert np.all(sd.efficacy >= 0) and np.all(sd.futility >= 0)
        assert sd.indeterminate >= 0


class TestStoppingAndEss:
    def test_vacuous_never_stops_early(self, vacuous_design):
        sd = sp.stopping_probabilities(vacuous_design, 0.3)
        assert sd.stage_totals()[:-1] == pytest.approx([0.0, 0.0])
        assert sd.stage_totals()[-1] == pytest.approx(1.0)
        assert sp.expected_sample_size(vacuous_design, 0.3) == pytest.approx(30.0)

    def test_type_one_error_and_power(self, three_stage_design):
        # design calibrated to one-sided alpha 0.05 and ~0.9 power at 0.5
        sd0 = sp.stopping_probabilities(three_stage_design, 0.0)
        assert sd0.total_efficacy <= 0.05 + 1e-6
        sd1 = sp.stopping_probabilities(three_stage_design, 0.5)
        assert sd1.total_efficacy >= 0.9 - 5e-3

    def test_ess_within_bounds(self, three_stage_design):
        for theta in (-1.5, 0.0, 0.5, 2.0):
            ess = sp.expected_sample_size(three_stage_design, theta)
            assert 12.0 <= ess <= 36.0

    def test_ess_vs_simulation(self, three_stage_design):
        d = three_stage_design
        rng = np.random.default_rng(11)
        m = 400_000
        ns = np.diff([0, *d.n_cum])
        sums = np.cumsum(0.0 * ns + np.sqrt(ns) * rng.standard_normal((m, 3)), axis=1)
        xb = sums / np.asarray(d.n_cum)
        f, e = d.boundaries.futility, d.boundaries.efficacy
        stage = np.full(m, 3)
        for s in range(2):
            live = stage == 3
            out = (xb[:, s] <= f[s]) | (xb[:, s] >= e[s])
            stage[live & out & (stage == 3)] = s + 1
        # first exit wins: recompute properly
        stage = np.full(m, 3)
        done = np.zeros(m, dtype=bool)
        for s in range(2):
            out = ~done & ((xb[:, s] <= f[s]) | (xb[:, s] >= e[s]))
            stage[out] = s + 1
            done |= out
        n_at = np.asarray(d.n_cum)[stage - 1]
        ess_hat = n_at.mean()
        se = n_at.std(ddof=1) / math.sqrt(m)
        assert abs(sp.expected_sample_size(d, 0.0) - ess_hat) < 3 * se
