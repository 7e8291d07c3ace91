"""Log-log fits and refinement ratio classification"""
import numpy as np
import pytest

from SublinearDirichlet.scaling import (
    RatioVerdict,
    classify_ratios,
    error_reduced,
    fit_loglog_slope,
    reduction_factors,
    refinement_ratios,
)


def test_exact_power_law():
    r = np.array([0.1, 0.2, 0.4, 0.8])
    fit = fit_loglog_slope(r, 3.0 * r ** 1.5)
    assert fit.defined
    assert fit.slope == pytest.approx(1.5, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-12)
    assert fit.error == pytest.approx(0.0, abs=1e-20)


def test_window_and_nonpositive_values():
    r = np.array([0.1, 0.2, 0.4, 0.8])
    y = np.array([0.0, 4.0, 16.0, 1.0])
    fit = fit_loglog_slope(r, y, window=(0.15, 0.5))
    assert fit.n_points == 2
    assert fit.slope == pytest.approx(2.0)
    undefined = fit_loglog_slope(r, np.zeros(4))
    assert not undefined.defined
    assert undefined.n_points == 0


def test_ratios_and_reduction():
    np.testing.assert_allclose(refinement_ratios([1.0, 2.0, 3.0]), [2.0, 1.5])
    np.testing.assert_allclose(reduction_factors([1.0, 0.25, 0.0625]), [4.0, 4.0])
    assert error_reduced(1e-3, 2e-4)
    assert not error_reduced(1e-3, 5e-4)
    assert error_reduced(1e-15, 2e-15, floor=1e-12)


@pytest.mark.parametrize("ratios, verdict", [
    ([1.4, 1.05], RatioVerdict.BOUNDED),
    ([1.1, 1.15], RatioVerdict.BOUNDED),
    ([1.67, 1.57], RatioVerdict.INCONCLUSIVE),
    ([2.956, 1.947, 1.550], RatioVerdict.INCONCLUSIVE),
    ([1.5, 1.5], RatioVerdict.INCONCLUSIVE),
    ([1.3, 1.6, 2.4], RatioVerdict.DIVERGING),
    ([1.3, 1.5], RatioVerdict.DIVERGING),
    ([1.3, 1.2], RatioVerdict.INCONCLUSIVE),
    ([1.5], RatioVerdict.INCONCLUSIVE),
    ([np.inf, 1.5], RatioVerdict.INCONCLUSIVE),
])
def test_classify_ratios(ratios, verdict):
    assert classify_ratios(ratios) == verdict
