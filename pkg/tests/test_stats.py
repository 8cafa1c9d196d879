import numpy as np
import pytest
from helpers import RING_THETA, random_model
from hypothesis import given, settings
from hypothesis import strategies as st

from ctmn.acceptance import Acceptance
from ctmn.exceptions import TrajectoryError
from ctmn.model import CtmnModel, Equilibrium, Feature, Variable, example_4_1, g_ratio
from ctmn.simulate import (
    AugmentedTrajectory,
    InitialDistribution,
    Trajectory,
    sample_augmented_trajectory,
    sample_trajectories,
    strip_proposals,
)
from ctmn.stats import (
    SufficientStats,
    collect_augmented_stats,
    collect_observed_stats,
    collect_stats,
    context_log_ratios,
    expected_rejections,
)


def _pair_model(rate=1.5, weight=0.0, acceptance=Acceptance.LOGISTIC):
    cards = (2, 2)
    return CtmnModel(
        [Variable("A", 2), Variable("B", 2)],
        Equilibrium([Feature.indicator((0, 1), cards, [(1, 1)])], [weight]),
        [np.array([[0, rate], [rate, 0]])] * 2,
        acceptance,
    )


def _assert_stats_equal(a, b):
    assert a.cardinalities == b.cardinalities and a.blankets == b.blankets
    for i in range(a.n_variables):
        assert a.contexts(i) == b.contexts(i)
        for u in a.contexts(i):
            np.testing.assert_allclose(a.time[i][u], b.time[i][u], rtol=1e-12, atol=1e-12)
            np.testing.assert_array_equal(a.accepted[i][u], b.accepted[i][u])
            np.testing.assert_allclose(a.rejected[i][u], b.rejected[i][u])


class TestObservedStats:
    def test_empty_path(self, ring):
        s = collect_observed_stats(Trajectory([(1, 0, 1, 1)], [], 3.0), ring.graph)
        for i in range(4):
            (u,) = s.contexts(i)
            x = (1, 0, 1, 1)[i]
            assert s.time[i][u][x] == 3.0
            assert s.time[i][u].sum() == 3.0
            assert s.accepted[i][u].sum() == 0

    def test_two_variable_bookkeeping(self):
        m = _pair_model()
        s = collect_observed_stats(Trajectory([(0, 0), (1, 0)], [1.0], 3.0), m.graph)
        assert s.accepted[0][0][0, 1] == 1
        np.testing.assert_allclose(s.time[0][0], [1.0, 2.0])
        # B's context is A's value, which changes at the jump
        np.testing.assert_allclose(s.time[1][0], [1.0, 0.0])
        np.testing.assert_allclose(s.time[1][1], [2.0, 0.0])

    def test_time_conservation(self, ring):
        trajs = sample_trajectories(ring, InitialDistribution.uniform(), 17.0, 4, seed=1)
        s = collect_stats(trajs, ring.graph)
        for i in range(4):
            assert s.total_time(i).sum() == pytest.approx(4 * 17.0)

    def test_multi_variable_jump_rejected(self):
        m = _pair_model()
        with pytest.raises(TrajectoryError):
            collect_observed_stats(Trajectory([(0, 0), (1, 1)], [1.0], 2.0), m.graph)

    def test_total_counts_are_transitions(self, ring):
        t = sample_trajectories(ring, InitialDistribution.uniform(), 30.0, 1, seed=2)[0]
        s = collect_observed_stats(t, ring.graph)
        assert sum(s.total_accepted(i).sum() for i in range(4)) == t.n_transitions


class TestAugmentedStats:
    def test_no_rejections_equals_observed(self, ring):
        aug = AugmentedTrajectory([(0, 0, 0, 0), (0, 1, 0, 0)], [(0, 1, 0, 0)], [0.4], 1.0)
        _assert_stats_equal(collect_augmented_stats(aug, ring.graph),
                            collect_observed_stats(strip_proposals(aug), ring.graph))

    def test_single_rejection(self, ring):
        aug = AugmentedTrajectory([(0, 0, 0, 0), (0, 0, 0, 0)], [(0, 1, 0, 0)], [0.4], 1.0)
        s = collect_augmented_stats(aug, ring.graph)
        u = ring.graph.context_index(1, (0, 0, 0, 0))
        assert s.rejected[1][u][0, 1] == 1
        assert s.accepted[1][u].sum() == 0

    def test_acceptance_frequencies_follow_f(self):
        m = example_4_1(RING_THETA)
        s = collect_augmented_stats(
            sample_augmented_trajectory(m, InitialDistribution.stationary(), 3000.0, seed=9), m.graph)
        for i in range(4):
            for u in s.contexts(i):
                blanket = m.graph.decode_context(i, u)
                for x, y in ((0, 1), (1, 0)):
                    n = s.accepted[i][u][x, y] + s.rejected[i][u][x, y]
                    if n < 30:
                        continue
                    z = g_ratio(m, i, x, y, blanket)
                    f = z / (1 + z)
                    assert abs(s.accepted[i][u][x, y] / n - f) <= 3 * np.sqrt(f * (1 - f) / n)


class TestMerge:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 1000))
    def test_additive(self, seed):
        m = random_model(np.random.default_rng(seed), max_vars=3)
        trajs = sample_trajectories(m, InitialDistribution.uniform(), 5.0, 3, seed=seed, augmented=True)
        parts = [collect_augmented_stats(t, m.graph) for t in trajs]
        _assert_stats_equal(parts[0] + parts[1] + parts[2], collect_stats(trajs, m.graph))

    def test_graph_mismatch(self, ring):
        with pytest.raises(ValueError):
            SufficientStats.empty(ring.graph) + SufficientStats.empty(_pair_model().graph)

    def test_without_rejections(self, ring):
        aug = sample_augmented_trajectory(ring, InitialDistribution.uniform(), 10.0, seed=0)
        s = collect_augmented_stats(aug, ring.graph).without_rejections()
        assert all(s.rejected[i][u].sum() == 0 for i in range(4) for u in s.contexts(i))


class TestExpectedRejections:
    def test_hand_value(self):
        # f(g) = 0.4 needs g = 2/3 under logistic acceptance
        m = _pair_model(rate=1.5, weight=np.log(2 / 3))
        s = collect_observed_stats(Trajectory([(0, 1)], [], 2.0), m.graph)
        e = expected_rejections(s, m)
        assert e.rejected[0][1][0, 1] == pytest.approx(1.8, rel=1e-12)

    def test_metropolis_uphill_has_none(self):
        m = _pair_model(weight=1.0, acceptance=Acceptance.METROPOLIS)
        e = expected_rejections(collect_observed_stats(Trajectory([(0, 1)], [], 2.0), m.graph), m)
        assert e.rejected[0][1][0, 1] == 0.0
        assert e.rejected[1][0][1, 0] == 0.0

    def test_formula_per_cell(self, ring):
        t = sample_trajectories(ring, InitialDistribution.uniform(), 10.0, 1, seed=3)[0]
        s = collect_observed_stats(t, ring.graph)
        e = expected_rejections(s, ring)
        for i in range(4):
            for u in s.contexts(i):
                g = np.exp(context_log_ratios(ring, i, u)[0, 1])
                expect = s.time[i][u][0] * ring.rates[i][0, 1] * (1 - g / (1 + g))
                assert e.rejected[i][u][0, 1] == pytest.approx(expect, rel=1e-12)
                np.testing.assert_array_equal(e.accepted[i][u], s.accepted[i][u])

    def test_graph_mismatch(self, ring):
        with pytest.raises(ValueError):
            expected_rejections(SufficientStats.empty(ring.graph), _pair_model())


def test_records(ring):
    s = collect_observed_stats(Trajectory([(0, 0, 0, 0)], [], 1.0), ring.graph)
    recs = s.to_records()
    assert len(recs) == 4 * 2
    assert {"variable", "context", "value", "time", "accepted", "rejected"} <= set(recs[0])
