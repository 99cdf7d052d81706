import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats as sps

from rentrep.stats import (
    cohens_d, contrast_table, density_curve, effect_magnitude, t_sf_two_sided, trim_outliers,
    welch_t_test,
)

samples = arrays(float, st.integers(2, 40), elements=st.floats(-1e3, 1e3))


def test_cohens_d_hand_value():
    assert cohens_d([2, 4], [0, 2]) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert cohens_d([1, 2, 3], [1, 2, 3]) == 0


def test_cohens_d_zero_spread():
    with pytest.raises(ValueError, match="zero"):
        cohens_d([1, 1], [1, 1])


@settings(max_examples=100, deadline=None)
@given(samples, samples, st.floats(0.01, 100), st.floats(-100, 100))
def test_cohens_d_antisymmetric_and_invariant(a, b, scale, shift):
    assume(np.std(np.concatenate([a - a.mean(), b - b.mean()])) > 1e-3)
    d = cohens_d(a, b)
    assert cohens_d(b, a) == pytest.approx(-d, abs=1e-9)
    assert cohens_d(scale * a + shift, scale * b + shift) == pytest.approx(d, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("d,label", [
    (0.1999999, "negligible"), (0.2, "small"), (0.4999999, "small"), (0.5, "medium"),
    (0.7999999, "medium"), (0.8, "large"), (-0.8, "large"), (-0.2, "small"),
])
def test_magnitude_thresholds(d, label):
    assert effect_magnitude(d) == label


def test_welch_identical_samples():
    t, df, p = welch_t_test([1, 2, 3, 4], [1, 2, 3, 4])
    assert t == 0 and p == 1


def test_welch_detects_shift():
    rng = np.random.default_rng(0)
    assert welch_t_test(rng.normal(1, 1, 1000), rng.normal(0, 1, 1000)).p < 1e-10


@settings(max_examples=100, deadline=None)
@given(samples, samples, st.booleans())
def test_t_test_matches_scipy(a, b, equal_var):
    assume(a.var() > 1e-6 and b.var() > 1e-6)
    ours = welch_t_test(a, b, equal_var=equal_var)
    ref = sps.ttest_ind(a, b, equal_var=equal_var)
    assert ours.t == pytest.approx(ref.statistic, rel=1e-9, abs=1e-9)
    assert ours.p == pytest.approx(ref.pvalue, rel=1e-7, abs=1e-12)


@given(samples, samples, st.floats(-1e3, 1e3))
def test_t_test_location_invariant(a, b, c):
    assume(a.var() > 1e-3 and b.var() > 1e-3)
    r1, r2 = welch_t_test(a, b), welch_t_test(a + c, b + c)
    assert r1.t == pytest.approx(r2.t, rel=1e-6, abs=1e-6)
    assert r1.p == pytest.approx(r2.p, rel=1e-5, abs=1e-9)


@given(st.floats(0, 50), st.floats(0, 50), st.floats(1, 500))
def test_p_value_range_and_monotone(t1, t2, df):
    p1, p2 = t_sf_two_sided(t1, df), t_sf_two_sided(t2, df)
    assert 0 <= p1 <= 1
    if t1 < t2:
        assert p1 >= p2


def test_welch_both_constant():
    with pytest.raises(ValueError):
        welch_t_test([1, 1, 1], [2, 2])


def test_trim_normal_tail_mass():
    x = np.random.default_rng(1).normal(size=10_000)
    kept = trim_outliers(x, 2).mean()
    assert abs(kept - 0.9545) < 0.01


def test_trim_identity_cases():
    assert trim_outliers([1.0, 2.0, 3.0], 3).all()
    assert trim_outliers([5.0] * 10, 2).all()


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(3, 100), elements=st.floats(-1e4, 1e4)))
def test_trim_nested(x):
    k2, k3 = trim_outliers(x, 2), trim_outliers(x, 3)
    assert np.all(k3[k2])


def _contrast_frame(seed=0, n=2000):
    rng = np.random.default_rng(seed)
    return pd.DataFrame({
        "class": ["over"] * n + ["under"] * n,
        "city_id": np.tile(["A", "B"], n),
        "x": np.concatenate([rng.normal(1, 1, n), rng.normal(0, 1, n)]),
        "const": 1.0,
        "lambda": np.concatenate([rng.uniform(1.01, 3, n), rng.uniform(0.1, 0.99, n)]),
    })


def test_contrast_table_recovers_generated_d():
    (row, flat) = contrast_table(_contrast_frame(), ["x", "const"])
    assert row.variable == "x" and abs(row.cohen_d - 1.0) < 0.1
    assert row.significant_at_05 and row.magnitude == "large"
    assert flat.variable == "const" and flat.cohen_d is None and "zero" in flat.flag


def test_contrast_per_city_and_swap():
    df = _contrast_frame(1, 300)
    rows = contrast_table(df, ["x"], grouping="city")
    assert [r.city_id for r in rows] == ["A", "B"]
    swapped = df.assign(**{"class": df["class"].map({"over": "under", "under": "over"})})
    for r, s in zip(rows, contrast_table(swapped, ["x"], grouping="city")):
        assert s.cohen_d == pytest.approx(-r.cohen_d, abs=1e-12)
        assert s.delta == pytest.approx(-r.delta, abs=1e-12)
        assert s.p_value == pytest.approx(r.p_value, rel=1e-9)


def test_contrast_small_group_flagged():
    df = pd.DataFrame({"class": ["over", "under", "under"], "city_id": "A",
                       "x": [1.0, 2.0, 3.0], "lambda": [2.0, 0.5, 0.4]})
    (row,) = contrast_table(df, ["x"])
    assert row.cohen_d is None and row.flag == "group smaller than 2"


def test_contrast_trim_drops_joint_outliers():
    df = _contrast_frame(2, 200)
    df.loc[0, "lambda"] = 1e6
    (trimmed,) = contrast_table(df, ["x"], trim_k=3)
    assert trimmed.n_over == 199


def test_density_normal_peak():
    curve = density_curve(np.random.default_rng(2).normal(size=10_000))
    peak = curve.density.max()
    assert 0.37 <= peak <= 0.43
    assert abs(curve.grid[curve.density.argmax()]) < 0.2
    assert len(curve.grid) == 256


def test_density_two_point_mass_bimodal():
    curve = density_curve([0.0] * 50 + [10.0] * 50)
    integral = np.trapezoid(curve.density, curve.grid)
    assert 0.95 <= integral <= 1.0
    mid = curve.density[np.abs(curve.grid - 5).argmin()]
    assert mid < 0.1 * curve.density.max()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 2000),
       st.sampled_from(["normal", "uniform", "exponential", "lognormal"]))
def test_density_integrates_to_one(seed, n, dist):
    x = getattr(np.random.default_rng(seed), dist)(size=n)
    curve = density_curve(x)
    assert 0.95 <= np.trapezoid(curve.density, curve.grid) <= 1.0 + 1e-9


def test_density_zero_variance():
    with pytest.raises(ValueError):
        density_curve([3.0, 3.0, 3.0])
