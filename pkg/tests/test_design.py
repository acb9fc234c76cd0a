import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import seqposterior as sp
from seqposterior.errors import InconsistentTrajectory, LengthMismatch

INF = float("inf")


class TestStageSchedule:
    def test_cumulative_sizes(self):
        sched = sp.StageSchedule((12, 12, 12))
        assert sched.cumulative_sizes == (12, 24, 36)
        assert sched.max_sample_size == 36

    def test_unequal_groups(self):
        assert sp.StageSchedule((5, 7, 3)).cumulative_sizes == (5, 12, 15)

    @pytest.mark.parametrize("sizes", [(), (0,), (-1, 5), (2.5, 3)])
    def test_invalid_sizes_rejected(self, sizes):
        with pytest.raises(ValueError):
            sp.StageSchedule(sizes)


class TestBoundarySet:
    def test_interim_ordering_enforced(self):
        with pytest.raises(ValueError):
            sp.BoundarySet(futility=(0.5, -0.4), efficacy=(0.4, 0.5))

    def test_final_stage_may_coincide(self):
        bs = sp.BoundarySet(futility=(-1.0, 0.3), efficacy=(1.0, 0.3))
        assert bs.futility[-1] == bs.efficacy[-1]

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            sp.BoundarySet(futility=(-1.0,), efficacy=(1.0, 0.5))

    def test_mirrored_swaps_roles(self):
        bs = sp.BoundarySet(futility=(-0.8, -0.4), efficacy=(0.9, 0.3))
        m = bs.mirrored()
        assert m.futility == (-0.9, -0.3)
        assert m.efficacy == (0.8, 0.4)


class TestQuadratureSpec:
    def test_defaults(self):
        q = sp.QuadratureSpec()
        assert q.nodes_per_stage == 64
        assert q.tail_halfwidth_sd == 8.0

    def test_minimums_enforced(self):
        with pytest.raises(ValueError):
            sp.QuadratureSpec(nodes_per_stage=4)
        with pytest.raises(ValueError):
            sp.QuadratureSpec(tail_halfwidth_sd=2.0)


class TestPathFromData:
    def test_efficacy_stop_first_interim(self, three_stage_design):
        path = sp.path_from_data(three_stage_design, [1.0])
        assert path.stopping_stage == 1
        assert path.terminal_kind == "efficacy"
        assert path.decisions == (1,)

    def test_vacuous_boundaries_never_stop(self, vacuous_design):
        path = sp.path_from_data(vacuous_design, [0.5, -0.2, 0.1])
        assert path.stopping_stage == 3
        assert path.decisions == (0, 0, 0)
        assert path.terminal_kind == "indeterminate"

    def test_futility_stop_second_interim(self, three_stage_design):
        path = sp.path_from_data(three_stage_design, [0.5, -0.6])
        assert path.stopping_stage == 2
        assert path.terminal_kind == "futility"
        assert path.decisions == (0, -1)

    def test_data_past_mandated_stop_rejected(self, three_stage_design):
        with pytest.raises(InconsistentTrajectory):
            sp.path_from_data(three_stage_design, [1.0, 0.2])

    def test_length_checks(self, three_stage_design):
        with pytest.raises(LengthMismatch):
            sp.path_from_data(three_stage_design, [])
        with pytest.raises(LengthMismatch):
            sp.path_from_data(three_stage_design, [0.1, 0.1, 0.1, 0.1])

    def test_boundary_hit_is_a_stop(self, three_stage_design):
        e1 = three_stage_design.boundaries.efficacy[0]
        path = sp.path_from_data(three_stage_design, [e1])
        assert path.terminal_kind == "efficacy"

    def test_final_stage_labels(self, three_stage_design):
        assert sp.path_from_data(three_stage_design, [0.5, 0.2, 0.3]).terminal_kind == "efficacy"
        assert sp.path_from_data(three_stage_design, [0.5, 0.2, -0.3]).terminal_kind == "futility"
        assert sp.path_from_data(three_stage_design, [0.5, 0.2, 0.0]).terminal_kind == "indeterminate"

    @given(
        xbars=st.lists(st.floats(-3, 3), min_size=1, max_size=3),
        scale=st.floats(0.2, 1.5),
    )
    @settings(max_examples=200, deadline=None)
    def test_stops_at_first_exit(self, xbars, scale):
        d = sp.design(
            [10, 10, 10],
            [-0.9 * scale, -0.5 * scale, -0.3 * scale],
            [0.9 * scale, 0.5 * scale, 0.3 * scale],
            1.0,
        )
        f, e = d.boundaries.futility, d.boundaries.efficacy
        first_exit = next(
            (s + 1 for s, x in enumerate(xbars) if x <= f[s] or x >= e[s]), None
        )
        if first_exit is not None and first_exit < len(xbars) and first_exit < 3:
            with pytest.raises(InconsistentTrajectory):
                sp.path_from_data(d, xbars)
            return
        path = sp.path_from_data(d, xbars)
        if first_exit is None:
            assert not path.stopped_early or path.stopping_stage == 3
        else:
            assert path.stopping_stage == first_exit


class TestConditioningIntervals:
    def test_early_efficacy_tail(self, three_stage_design):
        path = sp.path_from_data(three_stage_design, [1.0])
        iv = sp.conditioning_intervals(three_stage_design, path)
        e1 = three_stage_design.boundaries.efficacy[0]
        assert iv == [(e1, math.inf)]

    def test_final_stage_drops_last_decision(self, three_stage_design):
        for final_xbar in (0.3, -0.3, 0.0):
            path = sp.path_from_data(three_stage_design, [0.5, 0.2, final_xbar])
            iv = sp.conditioning_intervals(three_stage_design, path)
            f, e = three_stage_design.boundaries.futility, three_stage_design.boundaries.efficacy
            assert iv == [(f[0], e[0]), (f[1], e[1])]

    def test_interim_continue(self, three_stage_design):
        path = sp.path_from_data(three_stage_design, [0.5, 0.2])
        iv = sp.conditioning_intervals(three_stage_design, path)
        assert len(iv) == 2
        f, e = three_stage_design.boundaries.futility, three_stage_design.boundaries.efficacy
        assert iv[1] == (f[1], e[1])
