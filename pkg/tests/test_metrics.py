import numpy as np
import pandas as pd
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rentrep.metrics import (
    affordability_share, class_by_majority, classify, expected_counts, gini, gini_reports,
    log_representation, majority, representation, representation_table, share_comparison,
)

from oracles import gini_mad


def test_expected_counts_direct():
    phi = expected_counts([5, 45], 100)
    assert phi[0] == 10.0


def test_expected_counts_uniform():
    assert np.allclose(expected_counts(np.full(8, 3.0), 40), 5.0)


def test_expected_counts_zero_inventory():
    with pytest.raises(ValueError):
        expected_counts([0, 0], 10)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(1, 200), elements=st.floats(0, 1e4)), st.integers(0, 10**6))
def test_expected_counts_sum(tau, kappa_c):
    assume(tau.sum() > 0)
    assert expected_counts(tau, kappa_c).sum() == pytest.approx(kappa_c, rel=1e-9, abs=1e-9)


def test_representation_values():
    assert representation(10, 10) == 1.0
    assert representation(20, 10) == pytest.approx(21 / 11, abs=1e-15)
    assert representation(0, 0) == 1.0


counts = st.floats(0, 1e6)


@given(counts, counts)
def test_log_symmetry(a, b):
    assert log_representation(a, b) == -log_representation(b, a)
    assert np.log(representation(a, b)) == pytest.approx(-np.log(representation(b, a)), abs=1e-12)


@given(counts, counts, st.floats(1e-3, 1e3))
def test_representation_monotone(k, phi, dk):
    assert representation(k + dk, phi) > representation(k, phi)
    assert representation(k, phi + dk) < representation(k, phi)


def test_gini_cases():
    assert gini([3, 3, 3, 3]) == 0
    assert gini([0] * 99 + [7]) == pytest.approx(0.99, abs=1e-15)
    assert gini([1, 2, 3, 4]) == pytest.approx(0.25, abs=1e-15)
    assert gini_mad([1, 2, 3, 4]) == pytest.approx(0.25, abs=1e-15)
    assert np.isnan(gini([0, 0, 0]))


vectors = arrays(float, st.integers(1, 60), elements=st.floats(0, 1e6))


@settings(max_examples=100, deadline=None)
@given(vectors, st.floats(1e-3, 1e3))
def test_gini_properties(x, c):
    assume(x.sum() > 0)
    g = gini(x)
    assert g == pytest.approx(gini_mad(x), abs=1e-10)
    assert g == pytest.approx(gini(c * x), abs=1e-12)
    assert -1e-12 <= g <= (x.size - 1) / x.size + 1e-12


def test_classify_and_majority():
    assert list(classify([1.5, 0.2, 1.0])) == ["over", "under", "exact"]
    assert list(majority([0.6, 0.1, 0.33], [0.1, 0.1, 0.33], [0.1, 0.55, 0.33])) == [
        "white", "hispanic", "none"]
    assert list(majority([0.5], [0.5], [0])) == ["none"]


def _frame():
    return pd.DataFrame({
        "tract_id": ["a", "b", "c", "d", "e"],
        "city_id": ["X", "X", "X", "Y", "Y"],
        "tau": [10, 30, 60, 0, 0],
        "kappa": [40, 30, 30, 5, 2],
        "white": [0.8, 0.2, 0.1, 0.5, 0.5],
        "black": [0.1, 0.7, 0.1, 0.2, 0.2],
        "hispanic": [0.05, 0.05, 0.75, 0.2, 0.2],
    })


def test_representation_table_and_city_exclusion():
    table, errors = representation_table(_frame())
    assert errors == [{"city_id": "Y", "error": "city has no vacant units for rent"}]
    assert list(table["phi"]) == pytest.approx([10, 30, 60])
    assert list(table["class"]) == ["over", "exact", "under"]
    assert list(table["majority"]) == ["white", "black", "hispanic"]
    assert list(table["very_under"]) == [False, False, False]
    assert (table["lambda"] > 0).all()
    assert np.allclose(table["log_lambda"], np.log(table["lambda"]), atol=1e-15)


def test_class_by_majority_rates():
    table, _ = representation_table(_frame())
    ct = class_by_majority(table).set_index("majority")
    assert ct.loc["white", "over_rate"] == 1.0
    assert ct.loc["hispanic", "under"] == 1


def test_gini_reports_include_pooled_and_mean():
    table, _ = representation_table(_frame())
    reps = {r.city_id: r for r in gini_reports(table)}
    assert set(reps) == {"X", "ALL", "MEAN"}
    assert reps["X"].gini_observed == pytest.approx(gini([40, 30, 30]))


def test_share_comparison():
    table, _ = representation_table(_frame())
    assert share_comparison(table, np.ones(3, bool)) == (1.0, 1.0)
    assert share_comparison(table, np.zeros(3, bool)) == (0.0, 0.0)
    exp_, obs = share_comparison(table, table["majority"] == "white")
    assert (exp_, obs) == (pytest.approx(0.1), pytest.approx(0.4))


@settings(max_examples=50, deadline=None)
@given(arrays(float, 12, elements=st.floats(0.1, 100)), arrays(int, 12, elements=st.integers(0, 50)),
       arrays(int, 12, elements=st.integers(0, 3)))
def test_share_partition_sums_to_one(tau, kappa, label):
    assume(kappa.sum() > 0)
    df = pd.DataFrame({"tract_id": [f"t{i:02d}" for i in range(12)], "city_id": "X",
                       "tau": tau, "kappa": kappa, "white": 0.0, "black": 0.0, "hispanic": 0.0})
    table, _ = representation_table(df)
    total = sum(share_comparison(table, label == g)[0] for g in range(4))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_share_detects_generated_bias():
    rng = np.random.default_rng(5)
    n = 400
    white = rng.uniform(size=n)
    tau = rng.integers(20, 80, n).astype(float)
    kappa = rng.poisson(tau * np.where(white > 0.5, 2.0, 1.0))
    df = pd.DataFrame({"tract_id": [f"t{i:03d}" for i in range(n)], "city_id": "X", "tau": tau,
                       "kappa": kappa, "white": white, "black": 0.0, "hispanic": 0.0})
    table, _ = representation_table(df)
    exp_, obs = share_comparison(table, table["majority"] == "white")
    assert obs > exp_


def test_affordability():
    income = 53_657
    assert 12 * 1200 < 0.30 * income
    assert affordability_share([1200], income) == 1.0
    assert affordability_share([0.3 * 40_000 / 12], 40_000) == 0.0
    assert affordability_share([1, 1, 1], 10_000) == 1.0
    with pytest.raises(ValueError):
        affordability_share([1000], 0)
