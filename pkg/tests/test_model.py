import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from yppe.baseline import PiecewiseExponential, TimeGrid, baseline_survival, cum_hazard
from yppe.data import SurvivalData
from yppe.model import (
    LikelihoodTerms,
    ParameterVector,
    conditional_hazard,
    conditional_survival,
    linear_predictors,
    log_likelihood,
    log_likelihood_gradient,
)

from .conftest import random_dataset

GRID3 = TimeGrid((1.0, 2.0))
LOG_RATES3 = np.log([0.5, 0.25, 0.125])


def params1(psi, phi, log_rates=LOG_RATES3):
    return ParameterVector([psi], [phi], log_rates)


def integrated_survival(params, pe, z, t):
    """exp(-int_0^t h(s|z) ds) by adaptive quadrature, split at the cuts."""
    edges = [0.0] + [c for c in pe.grid.cuts if c < t] + [t]
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        val, _ = quad(lambda s: conditional_hazard(params, pe, z, s), a, b, epsabs=1e-13, epsrel=1e-12)
        total += val
    return math.exp(-total)


class TestParameterVector:
    def test_pack_unpack_identity(self):
        pv = ParameterVector([1.0, 2.0], [-1.0, 0.5], [0.1, 0.2, 0.3])
        x = pv.pack()
        assert x.tolist() == [1.0, 2.0, -1.0, 0.5, 0.1, 0.2, 0.3]
        again = ParameterVector.unpack(x, 2)
        np.testing.assert_array_equal(again.pack(), x)

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            ParameterVector([1.0], [1.0, 2.0], [0.0])


class TestLinearPredictors:
    def test_zero_row(self):
        pv = ParameterVector([0.3, -2.0], [1.0, 4.0], [0.0])
        assert linear_predictors(pv, [0, 0]) == (1.0, 1.0)

    def test_scalar(self):
        lam, theta = linear_predictors(params1(1.0, -1.0), [1.0])
        assert lam == pytest.approx(math.e)
        assert theta == pytest.approx(1 / math.e)

    def test_regression_design(self):
        pv = ParameterVector([2.0, -0.5, 1.5, -1.5], [-1.0, 1.0, -1.5, 1.5], [0.0])
        lam, theta = linear_predictors(pv, [1, 0, 1, 0])
        assert lam == pytest.approx(math.exp(3.5), rel=1e-15)
        assert theta == pytest.approx(math.exp(-2.5), rel=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            linear_predictors(params1(1.0, 1.0), [1.0, 2.0])


class TestConditionalSurvival:
    def test_collapses_to_baseline(self, three_piece):
        ts = np.linspace(0.0, 12.0, 97)
        for pv, z in [(params1(0.0, 0.0), [1.7]), (params1(0.8, -1.3), [0.0])]:
            np.testing.assert_allclose(
                conditional_survival(pv, three_piece, z, ts), baseline_survival(three_piece, ts),
                rtol=1e-12, atol=1e-15,
            )

    def test_example_value(self, three_piece):
        # 30-digit mpmath evaluation of (1 + e^2 * expm1(0.625)) ** (-1/e)
        S = conditional_survival(params1(1.0, -1.0), three_piece, [1.0], 1.5)
        assert S == pytest.approx(0.478511998247177, rel=1e-13)

    @pytest.mark.parametrize("psi, phi", [(0.7, 0.7), (1.0, -1.0), (-2.0, 0.5)])
    @pytest.mark.parametrize("t", [0.4, 1.0, 1.5, 3.7])
    def test_matches_integrated_hazard(self, three_piece, psi, phi, t):
        pv = params1(psi, phi)
        expected = integrated_survival(pv, three_piece, [1.0], t)
        assert conditional_survival(pv, three_piece, [1.0], t) == pytest.approx(expected, rel=1e-9)

    def test_start_value_and_range(self, three_piece):
        pv = params1(2.0, -3.0)
        assert conditional_survival(pv, three_piece, [1.0], 0.0) == 1.0
        S = conditional_survival(pv, three_piece, [1.0], np.linspace(0, 400, 200))
        assert np.all(S > 0) and np.all(S <= 1) and np.all(np.diff(S) <= 0)


class TestConditionalHazard:
    def test_collapse(self, three_piece):
        for t in (0.5, 1.5, 2.0, 9.0):
            assert conditional_hazard(params1(0.0, 0.0), three_piece, [1.0], t) == pytest.approx(
                three_piece.hazard(t), rel=1e-15
            )

    def test_short_term_limit(self, three_piece):
        pv = params1(1.0, -1.0)
        ratio = conditional_hazard(pv, three_piece, [1.0], 1e-8) / conditional_hazard(pv, three_piece, [0.0], 1e-8)
        assert ratio == pytest.approx(math.e, rel=1e-6)

    def test_long_term_limit(self, three_piece):
        pv = params1(1.0, -1.0)
        # H0(t) = 0.75 + 0.125 (t - 2) = 30
        t = 2.0 + (30.0 - 0.75) / 0.125
        assert cum_hazard(three_piece, t) == pytest.approx(30.0)
        ratio = conditional_hazard(pv, three_piece, [1.0], t) / conditional_hazard(pv, three_piece, [0.0], t)
        assert ratio == pytest.approx(1 / math.e, rel=1e-6)

    def test_rejects_nonpositive_time(self, three_piece):
        with pytest.raises(ValueError):
            conditional_hazard(params1(1.0, 1.0), three_piece, [1.0], 0.0)

    def test_is_minus_dlogS(self, three_piece):
        pv = params1(1.2, -0.7)
        for t in (0.3, 0.77, 1.4, 1.9, 4.0):
            h = 1e-6
            dlogS = (
                math.log(conditional_survival(pv, three_piece, [1.0], t + h))
                - math.log(conditional_survival(pv, three_piece, [1.0], t - h))
            ) / (2 * h)
            assert -dlogS == pytest.approx(conditional_hazard(pv, three_piece, [1.0], t), rel=1e-6)


SCATTERED = np.array([0.05, 0.3, 0.9, 1.0, 1.2, 1.99, 2.5, 7.0, 40.0, 150.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-2, 2))
def test_ph_reduction(coef, z):
    pe = PiecewiseExponential(GRID3, np.exp(LOG_RATES3))
    pv = params1(coef, coef)
    ratio = conditional_hazard(pv, pe, [z], SCATTERED) / conditional_hazard(pv, pe, [0.0], SCATTERED)
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-2, 2))
def test_po_reduction(coef, z):
    # theta = 1 (phi = 0) gives S = 1 / (1 + lam R0): odds ratio lam for all t
    pe = PiecewiseExponential(GRID3, np.exp(LOG_RATES3))
    pv = params1(coef, 0.0)
    ts = SCATTERED[:7]  # odds stay representable

    def odds(zz):
        S = conditional_survival(pv, pe, [zz], ts)
        return -np.expm1(np.log(S)) / S

    ratio = odds(z) / odds(0.0)
    np.testing.assert_allclose(ratio, math.exp(coef * z), rtol=1e-10)


def test_psi_zero_is_not_po():
    pe = PiecewiseExponential(GRID3, np.exp(LOG_RATES3))
    pv = params1(0.0, 1.0)
    S1 = conditional_survival(pv, pe, [1.0], SCATTERED[:7])
    S0 = conditional_survival(pv, pe, [0.0], SCATTERED[:7])
    ratio = ((1 - S1) / S1) / ((1 - S0) / S0)
    assert np.ptp(ratio) > 0.1


class TestLogLikelihood:
    def test_null_is_pe_loglik(self):
        data = random_dataset(np.random.default_rng(1), n=25, p=2)
        grid = TimeGrid((0.5, 1.0, 3.0))
        log_rates = np.log([0.4, 0.3, 0.6, 0.2])
        pv = ParameterVector([0, 0], [0, 0], log_rates)
        pe = pv.baseline(grid)
        H = np.array([cum_hazard(pe, t) for t in data.time])
        h = np.array([pe.hazard(t) for t in data.time])
        expected = np.sum(data.status * np.log(h) - H)
        assert log_likelihood(pv, grid, data) == pytest.approx(expected, rel=1e-13)

    def test_single_subject(self, three_piece):
        data = SurvivalData.from_arrays([1.5], [1], [[1.0]])
        pv = params1(1.0, -1.0)
        expected = math.log(conditional_hazard(pv, three_piece, [1.0], 1.5)) + math.log(
            conditional_survival(pv, three_piece, [1.0], 1.5)
        )
        assert log_likelihood(pv, GRID3, data) == pytest.approx(expected, rel=1e-13)
        # mpmath: log h + log S
        assert log_likelihood(pv, GRID3, data) == pytest.approx(-2.50194319811225, rel=1e-13)

    def test_censored_subject_contributes_log_survival(self, three_piece):
        data = SurvivalData.from_arrays([2.5], [0], [[1.0]])
        pv = params1(0.4, -0.9)
        expected = math.log(conditional_survival(pv, three_piece, [1.0], 2.5))
        assert log_likelihood(pv, GRID3, data) == pytest.approx(expected, rel=1e-13)

    def test_row_permutation(self):
        rng = np.random.default_rng(2)
        data = random_dataset(rng, n=40, p=3)
        grid = TimeGrid((0.5, 2.0))
        pv = ParameterVector(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3) - 1)
        a = log_likelihood(pv, grid, data)
        b = log_likelihood(pv, grid, data.permuted(rng.permutation(data.n)))
        assert a == pytest.approx(b, rel=1e-13)

    @pytest.mark.parametrize("scale", [50.0, 300.0, 800.0])
    def test_finite_for_extreme_parameters(self, scale):
        data = random_dataset(np.random.default_rng(3), n=20, p=1)
        grid = TimeGrid((1.0,))
        for pv in (
            ParameterVector([scale], [-scale], [0.0, 0.0]),
            ParameterVector([-scale], [scale], [5.0, 5.0]),
            ParameterVector([1.0], [1.0], [np.log(scale), np.log(scale)]),
        ):
            assert np.isfinite(log_likelihood(pv, grid, data))
            assert np.all(np.isfinite(log_likelihood_gradient(pv, grid, data)))


def central_differences(f, x, rel_step=1e-6):
    g = np.empty_like(x)
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestGradient:
    def test_pe_score_at_null(self):
        data = random_dataset(np.random.default_rng(4), n=30, p=2)
        grid = TimeGrid(tuple(data.event_times()[:-1]))
        terms = LikelihoodTerms(data, grid)
        rates = np.exp(np.random.default_rng(5).normal(size=grid.m) - 1)
        pv = ParameterVector([0, 0], [0, 0], np.log(rates))
        g = log_likelihood_gradient(pv, grid, data)[4:]
        expected = terms.events_per_interval - rates * terms.exposure.sum(axis=0)
        np.testing.assert_allclose(g, expected, rtol=1e-12, atol=1e-12)

    def test_identical_subjects_identical_scores(self):
        data = SurvivalData.from_arrays([1.3, 1.3], [1, 1], [[0.5], [0.5]])
        terms = LikelihoodTerms(data, GRID3)
        scores = terms.subject_scores(np.array([0.3, -0.2, *LOG_RATES3]))
        np.testing.assert_array_equal(scores[0], scores[1])

    def test_matches_finite_differences_50_points(self):
        rng = np.random.default_rng(20240611)
        worst = 0.0
        for _ in range(50):
            p = int(rng.integers(1, 4))
            data = random_dataset(rng, n=int(rng.integers(5, 40)), p=p)
            ev = data.event_times()
            cuts = tuple(np.unique(rng.choice(ev, size=min(len(ev), 4), replace=False)))
            grid = TimeGrid(cuts)
            terms = LikelihoodTerms(data, grid)
            x = np.concatenate([rng.normal(0, 1, 2 * p), rng.normal(-1, 1, grid.m)])
            g = terms.gradient(x)
            fd = central_differences(terms.loglik, x)
            rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)
            worst = max(worst, rel.max())
        assert worst <= 1e-5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_gradient_property(seed):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, n=15, p=2)
    grid = TimeGrid((0.7, 2.5))
    terms = LikelihoodTerms(data, grid)
    x = np.concatenate([rng.normal(0, 1.5, 4), rng.normal(-1, 1, 3)])
    fd = central_differences(terms.loglik, x)
    np.testing.assert_allclose(terms.gradient(x), fd, rtol=1e-5, atol=1e-5)
    np.testing.assert_allclose(terms.subject_scores(x).sum(axis=0), terms.gradient(x), rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(-2, 2))
def test_survival_bounds(psi, phi, z):
    pe = PiecewiseExponential(GRID3, np.exp(LOG_RATES3))
    pv = params1(psi, phi)
    ts = np.concatenate([[0.0], np.geomspace(1e-6, 500, 60)])
    S = conditional_survival(pv, pe, [z], ts)
    assert S[0] == 1.0
    assert np.all((S >= 0) & (S <= 1))
    assert np.all(np.diff(S) <= 1e-15)
