import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairlens.errors import BudgetExceeded
from fairlens.explain import (
    Baseline,
    ShapConfig,
    aggregate,
    auto_baseline,
    exact_shapley,
    explain_dataset,
    impute_baseline,
    kernel_shap,
    sample_coalitions,
    shapley_kernel,
)


def permutation_shapley(x, model, baseline_rows):
    """Oracle: average marginal contribution over every feature ordering."""
    m = len(x)

    def v(members):
        rows = baseline_rows.copy()
        for j in members:
            rows[:, j] = x[j]
        return float(np.mean(model(rows)))

    phi = np.zeros(m)
    perms = list(itertools.permutations(range(m)))
    for order in perms:
        members = []
        prev = v(members)
        for j in order:
            members.append(j)
            cur = v(members)
            phi[j] += cur - prev
            prev = cur
    return phi / len(perms)


def interaction_model(rows):
    rows = np.asarray(rows, dtype=float)
    return rows[:, 0] * rows[:, 1] + np.sin(rows[:, 2]) + np.where(rows[:, 3] > 0.5, 2.0, -1.0) * rows[:, 0]


class TestExact:
    def test_matches_permutation_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=4)
        base = Baseline(rng.normal(size=(3, 4)))
        phi, base_value = exact_shapley(x, interaction_model, base)
        np.testing.assert_allclose(phi, permutation_shapley(x, interaction_model, base.rows), atol=1e-12)
        assert base_value == pytest.approx(np.mean(interaction_model(base.rows)))

    def test_efficiency(self):
        x = np.array([1.0, 2.0, 0.3, 0.9])
        base = Baseline(np.zeros(4))
        phi, b = exact_shapley(x, interaction_model, base)
        assert phi.sum() == pytest.approx(interaction_model(x[None])[0] - b, abs=1e-12)

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            exact_shapley(np.zeros(21), lambda r: np.zeros(len(r)), Baseline(np.zeros(21)))


def linear(w, b=0.0):
    w = np.asarray(w, dtype=float)
    return lambda rows: np.asarray(rows, dtype=float) @ w + b


class TestKernel:
    def test_linear_closed_form(self):
        w = np.array([0.5, -2.0, 1.0, 3.0, 0.0, 1.5])
        x = np.array([1.0, 2.0, -1.0, 0.5, 9.0, 2.0])
        base = Baseline(np.array([[0.0, 1.0, 1.0, 0.0, 0.0, 2.0], [2.0, 1.0, 0.0, 1.0, 4.0, 0.0]]))
        ex = kernel_shap(x, linear(w, 0.3), base, ShapConfig(num_samples=40, mode="sampled"))
        np.testing.assert_allclose(ex.phi, w * (x - base.rows.mean(axis=0)), atol=1e-9)

    def test_full_budget_equals_exact(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=4)
        base = Baseline(rng.normal(size=(2, 4)))
        ex = kernel_shap(x, interaction_model, base, ShapConfig(num_samples=14, mode="sampled"))
        np.testing.assert_allclose(ex.phi, exact_shapley(x, interaction_model, base)[0], atol=1e-6)

    def test_sampled_close_to_exact(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=8)
        base = Baseline(rng.normal(size=(1, 8)))

        def model(rows):
            rows = np.asarray(rows, dtype=float)
            return rows @ np.arange(1, 9) + rows[:, 0] * rows[:, 1] + np.tanh(rows[:, 5] * rows[:, 6])

        exact = exact_shapley(x, model, base)[0]
        ex = kernel_shap(x, model, base, ShapConfig(num_samples=200, mode="sampled"), np.random.default_rng(0))
        assert ex.phi.sum() == pytest.approx(exact.sum(), abs=1e-9)
        np.testing.assert_allclose(ex.phi, exact, atol=0.05 * np.abs(exact).max())

    def test_constant_model_zero(self):
        ex = kernel_shap(np.arange(5.0), lambda r: np.full(len(r), 3.0), Baseline(np.zeros(5)),
                         ShapConfig(num_samples=50, mode="sampled"))
        np.testing.assert_allclose(ex.phi, 0, atol=1e-12)

    def test_symmetric_features(self):
        model = lambda r: np.asarray(r, float)[:, 0] * np.asarray(r, float)[:, 1]
        ex = kernel_shap(np.array([2.0, 2.0, 5.0]), model, Baseline(np.zeros(3)),
                         ShapConfig(num_samples=10, mode="sampled"))
        assert ex.phi[0] == pytest.approx(ex.phi[1], abs=1e-12)
        assert ex.phi[2] == pytest.approx(0, abs=1e-12)

    def test_single_feature(self):
        ex = kernel_shap(np.array([3.0]), linear([2.0]), Baseline(np.array([1.0])))
        assert ex.phi.tolist() == [4.0]

    def test_call_budget(self):
        m, budget, nb = 10, 100, 3
        calls = []

        def model(rows):
            calls.append(len(rows))
            return np.asarray(rows, float).sum(axis=1)

        ex = kernel_shap(np.ones(m), model, Baseline(np.zeros((nb, m))), ShapConfig(num_samples=budget, mode="sampled"))
        assert sum(calls) == ex.evaluations <= budget * nb + nb + 1

    def test_budget_floor(self):
        with pytest.raises(ValueError):
            kernel_shap(np.ones(10), linear(np.ones(10)), Baseline(np.zeros(10)), ShapConfig(num_samples=20, mode="sampled"))


class TestCoalitions:
    def test_full_enumeration(self):
        masks, w = sample_coalitions(5, 30, np.random.default_rng(0))
        assert len(masks) == 30 and len({m.tobytes() for m in masks}) == 30
        for mask, wt in zip(masks, w):
            s = int(mask.sum())
            assert wt / w.sum() == pytest.approx(
                shapley_kernel(5, s) / sum(shapley_kernel(5, k) * math.comb(5, k) for k in range(1, 5)))

    def test_budget_respected_and_deterministic(self):
        a = sample_coalitions(30, 500, np.random.default_rng(7))
        b = sample_coalitions(30, 500, np.random.default_rng(7))
        assert len(a[0]) <= 500
        np.testing.assert_array_equal(a[0], b[0])
        assert np.all(a[0].sum(axis=1) > 0) and np.all(a[0].sum(axis=1) < 30)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_dummy_and_efficiency_property(m, seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=m)
    w[-1] = 0.0  # the last feature is a dummy
    x, base = rng.normal(size=m), Baseline(rng.normal(size=(2, m)))
    model = lambda r: np.tanh(np.asarray(r, float) @ w)
    phi, b = exact_shapley(x, model, base)
    assert phi[-1] == pytest.approx(0, abs=1e-12)
    assert phi.sum() == pytest.approx(model(x[None])[0] - b, abs=1e-9)
    ex = kernel_shap(x, model, base, ShapConfig(num_samples=max(2 ** m, 2 * m + 4), mode="sampled"), np.random.default_rng(seed))
    np.testing.assert_allclose(ex.phi, phi, atol=1e-6)


def test_linearity_of_games():
    rng = np.random.default_rng(4)
    x, base = rng.normal(size=5), Baseline(rng.normal(size=(1, 5)))
    f = lambda r: np.asarray(r, float)[:, 0] * np.asarray(r, float)[:, 2]
    g = lambda r: np.cos(np.asarray(r, float)[:, 1] + np.asarray(r, float)[:, 4])
    h = lambda r: 2 * f(r) - 3 * g(r)
    pf, pg, ph = (exact_shapley(x, k, base)[0] for k in (f, g, h))
    np.testing.assert_allclose(ph, 2 * pf - 3 * pg, atol=1e-12)


class TestDataset:
    def rows(self, n=12, m=15, seed=0):
        return np.random.default_rng(seed).normal(size=(n, m))

    def model(self, rows):
        rows = np.asarray(rows, float)
        return rows[:, 0] * rows[:, 1] + rows[:, 2:].sum(axis=1)

    def test_workers_do_not_change_results(self):
        rows = self.rows()
        base = auto_baseline(rows)
        cfg = ShapConfig(num_samples=64, seed=11)
        r1 = explain_dataset(rows, self.model, base, cfg, workers=1)
        r4 = explain_dataset(rows, self.model, base, cfg, workers=4)
        assert r1.mode == "sampled"
        np.testing.assert_array_equal(r1.local, r4.local)

    def test_seed_changes_sampling(self):
        rows = self.rows()
        base = auto_baseline(rows)
        a = explain_dataset(rows, self.model, base, ShapConfig(num_samples=64, seed=1))
        b = explain_dataset(rows, self.model, base, ShapConfig(num_samples=64, seed=2))
        assert not np.array_equal(a.local, b.local)

    def test_auto_mode_exact_for_small_m(self):
        rows = self.rows(m=4)
        r = explain_dataset(rows, self.model, auto_baseline(rows))
        assert r.mode == "exact"
        np.testing.assert_allclose(r.local.sum(axis=1), r.outputs - r.base_value, atol=1e-12)

    def test_ranking_ties_keep_column_order(self):
        rows = np.ones((3, 3))
        r = explain_dataset(rows, lambda x: np.zeros(len(x)), Baseline(np.zeros(3)), feature_names=["c", "a", "b"])
        assert [name for name, _ in r.ranking()] == ["c", "a", "b"]


def test_aggregation_examples():
    local = np.array([[1.0, -2.0], [-3.0, 0.0], [2.0, 1.0]])
    np.testing.assert_allclose(aggregate(local, "mean_abs"), [2.0, 1.0])
    np.testing.assert_allclose(aggregate(local, "median"), [1.0, 0.0])
    np.testing.assert_allclose(aggregate(local, "mean"), [0.0, -1 / 3])


def test_auto_baseline_mixed():
    matrix = np.array([[1.0, "x"], [3.0, "y"], [np.nan, "y"]], dtype=object)
    base = auto_baseline(matrix, ["numeric", "categorical"])
    assert base.rows[0].tolist() == [2.0, "y"] and base.source == "auto"
    user = Baseline(np.array([[None, "x"]], dtype=object))
    assert impute_baseline(user, base).rows[0].tolist() == [2.0, "x"]
