import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yppe.data import SurvivalData
from yppe.model import conditional_survival
from yppe.nonparam import kaplan_meier


class TestExamples:
    def test_three_events(self):
        km = kaplan_meier(SurvivalData.from_arrays([1.0, 2.0, 3.0], [1, 1, 1]))
        np.testing.assert_allclose(km.survival_values, [2 / 3, 1 / 3, 0.0], rtol=1e-15)
        assert km.n_at_risk.tolist() == [3, 2, 1]
        assert km(0.5) == 1.0 and km(2.0) == pytest.approx(1 / 3)
        assert km.left_limit(2.0) == pytest.approx(2 / 3)

    def test_all_censored(self):
        km = kaplan_meier(SurvivalData.from_arrays([1.0, 4.0, 9.0], [0, 0, 0]))
        assert km.event_times.size == 0
        np.testing.assert_array_equal(km([0.1, 5.0, 100.0]), 1.0)

    def test_censored_at_event_time_stays_at_risk(self):
        km = kaplan_meier(SurvivalData.from_arrays([2.0, 2.0, 3.0, 5.0], [1, 0, 1, 0]))
        assert km.n_at_risk.tolist() == [4, 2]
        np.testing.assert_allclose(km.survival_values, [0.75, 0.375])

    def test_ties(self):
        km = kaplan_meier(SurvivalData.from_arrays([1.0, 1.0, 2.0, 2.0], [1, 1, 1, 0]))
        assert km.n_events.tolist() == [2, 1]
        np.testing.assert_allclose(km.survival_values, [0.5, 0.25])


class TestStratum:
    def test_empty(self, gastric):
        with pytest.raises(ValueError, match="empty stratum"):
            kaplan_meier(gastric, ("treatment", 7))

    def test_unknown_column(self, gastric):
        with pytest.raises(ValueError):
            kaplan_meier(gastric, ("age", 1))

    def test_control_arm_agrees_with_fit(self, gastric, gastric_fit):
        km = kaplan_meier(gastric, ("treatment", 0))
        fitted = conditional_survival(gastric_fit.estimates, gastric_fit.baseline, [0.0], np.nextafter(863.0, 0))
        assert abs(km.left_limit(863.0) - fitted) <= 0.10

    def test_arm_sizes(self, gastric):
        assert kaplan_meier(gastric, ("treatment", 1)).n_at_risk[0] == 45


times = st.lists(st.integers(1, 40), min_size=1, max_size=40)


@settings(max_examples=60, deadline=None)
@given(times)
def test_uncensored_is_empirical(ts):
    t = np.array(ts, dtype=float)
    km = kaplan_meier(SurvivalData.from_arrays(t, np.ones(len(t), int)))
    grid = np.arange(0, 42) + 0.5
    np.testing.assert_allclose(km(grid), [(t > g).mean() for g in grid], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(times, st.randoms(use_true_random=False))
def test_monotone_and_order_invariant(ts, rnd):
    n = len(ts)
    status = np.array([rnd.random() < 0.6 for _ in range(n)], dtype=int)
    data = SurvivalData.from_arrays(np.array(ts, float), status)
    km = kaplan_meier(data)
    assert np.all(np.diff(km.survival_values) <= 0)
    assert np.all((km.survival_values >= 0) & (km.survival_values <= 1))
    order = list(range(n))
    rnd.shuffle(order)
    km2 = kaplan_meier(data.permuted(order))
    np.testing.assert_array_equal(km.event_times, km2.event_times)
    np.testing.assert_array_equal(km.survival_values, km2.survival_values)
