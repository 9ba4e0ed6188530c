import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jclab.stats import (
    LineFit,
    Records,
    StatsError,
    bin_average,
    eta_ent,
    eta_ent_maxent,
    fit_line,
    pearson,
    summarize,
)

floats = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def _records(x, y, s_in=None, e_atoms=None):
    return Records("meyer_wallach", x, np.zeros_like(y) if s_in is None else s_in, y, e_atoms)


def test_fit_matches_normal_equations_and_polyfit():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, 500)
    y = 0.3 + 0.25 * x + 0.05 * rng.standard_normal(500)
    fit = fit_line(x, y)
    design = np.column_stack([np.ones_like(x), x])
    b0, b1 = np.linalg.solve(design.T @ design, design.T @ y)
    assert fit.slope == pytest.approx(b1, abs=1e-12)
    assert fit.intercept == pytest.approx(b0, abs=1e-12)
    np.testing.assert_allclose(np.polyfit(x, y, 1), [fit.slope, fit.intercept], atol=1e-12)
    assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


def test_angle_of_known_slopes():
    assert LineFit(1.0, 0.0).slope_angle_deg == pytest.approx(45.0)
    assert LineFit(-math.tan(math.radians(25)), 1.0).slope_angle_deg == pytest.approx(-25.0)
    assert LineFit(0.0, 2.0)(np.array([0.0, 5.0])).tolist() == [2.0, 2.0]


def test_eta_definitions():
    fit = LineFit(0.5, 0.4)
    assert eta_ent([0.5, 0.3, 0.7], fit) == pytest.approx((0.5 - 0.4) / 0.5)
    assert eta_ent_maxent(0.8, fit) == pytest.approx(0.5)
    with pytest.raises(StatsError):
        eta_ent([0.0, 0.0], fit)
    with pytest.raises(StatsError):
        eta_ent_maxent(-1.0, fit)


def test_degenerate_inputs_raise():
    with pytest.raises(StatsError):
        fit_line([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])
    with pytest.raises(StatsError):
        pearson([0.0, 1.0], [2.0, 2.0])
    with pytest.raises(StatsError):
        fit_line([1.0], [2.0])
    with pytest.raises(StatsError):
        fit_line([1.0, 2.0], [2.0])


def test_bins_are_half_open_and_skip_empty_ones():
    x = np.array([0.0, 0.05, 0.1, 0.35, 0.399999])
    y = np.array([1.0, 3.0, 5.0, 7.0, 9.0])
    bins = bin_average(x, y, 0.1)
    assert [round(b.center, 10) for b in bins] == [0.05, 0.15, 0.35]
    assert [b.mean for b in bins] == [2.0, 5.0, 8.0]
    assert [b.count for b in bins] == [2, 1, 2]
    assert bin_average([], [], 0.1) == []
    with pytest.raises(ValueError):
        bin_average(x, y, 0.0)


def test_flat_response_is_flagged():
    x = np.linspace(0, 1, 20)
    res = summarize("flat", _records(x, np.full(20, 0.42) + 1e-12 * x))
    assert res.flat_response and res.pearson_r is None
    assert res.fit.slope == 0.0 and res.fit.intercept == pytest.approx(0.42)
    assert res.to_dict()["flat_response"] is True


def test_summary_uses_the_requested_column():
    x = np.linspace(0, 1, 50)
    s_in = 0.2 * x
    s_t = 0.5 + 0.1 * x + 0.01 * np.sin(40 * x)
    res = summarize("d", _records(x, s_t, s_in=s_in), "delta_s")
    direct = fit_line(x, s_t - s_in)
    assert res.fit == direct
    d = res.to_dict()
    assert d["means"]["delta_s"] == pytest.approx(np.mean(s_t - s_in))
    assert d["n_samples"] == 50 and sum(b["count"] for b in d["bins"]) == 50


def test_records_columns_and_rows():
    rec = _records([0.1, 0.2], np.array([0.5, 0.6]), s_in=np.array([0.0, 0.1]),
                   e_atoms=np.array([[0.1, -0.1], [0.2, 0.4]]))
    rows = list(rec.rows())
    assert rows[1].delta_s == pytest.approx(0.5) and rows[1].e_mean == pytest.approx(0.3)
    assert rec.column("delta_s_bits").tolist() == pytest.approx([0.5, 0.5])
    with pytest.raises(ValueError):
        Records("x", [0.1], [0.0, 0.0], [0.1, 0.2])
    with pytest.raises(KeyError):
        _records([0.1, 0.2], np.array([0.5, 0.6])).column("e_mean")


@given(arrays(float, st.integers(5, 40), elements=floats), arrays(float, 40, elements=floats),
       st.floats(0.1, 10), st.floats(-5, 5), st.floats(0.1, 10), st.floats(-5, 5))
def test_pearson_is_affine_invariant_and_fit_transforms_covariantly(x, y, a, b, c, d):
    y = y[: len(x)]
    assume(np.ptp(x) > 1e-3 and np.ptp(y) > 1e-3)
    r = pearson(x, y)
    assert pearson(a * x + b, c * y + d) == pytest.approx(r, abs=1e-7)
    assert pearson(x, -y) == pytest.approx(-r, abs=1e-9)
    fit, scaled = fit_line(x, y), fit_line(a * x + b, c * y + d)
    assert scaled.slope == pytest.approx(c * fit.slope / a, rel=1e-6, abs=1e-9)
    assert -1.0 <= r <= 1.0


@given(arrays(float, st.integers(3, 30), elements=floats))
def test_exact_lines_are_recovered(x):
    assume(np.ptp(x) > 1e-3)
    fit = fit_line(x, 0.7 - 0.3 * x)
    assert fit.slope == pytest.approx(-0.3, abs=1e-9)
    assert fit.intercept == pytest.approx(0.7, abs=1e-8)
