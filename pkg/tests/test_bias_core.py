import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairlens.bias import GroupLabelCounts, Undefined, class_imbalance, divergence_suite, dpl, pre_training_metrics, tally
from fairlens.bias.pretraining import conditional_demographic_disparity, demographic_disparity
from fairlens.errors import DegenerateFacet, LengthMismatch


def oracle_counts(labels, is_d):
    """Loop-count oracle for the group/label table."""
    t = {"a0": 0, "a1": 0, "d0": 0, "d1": 0}
    for y, d in zip(labels, is_d):
        t[("d" if d else "a") + str(int(y))] += 1
    return t


def scalar_kl(qa, qd):
    return qa * math.log(qa / qd) + (1 - qa) * math.log((1 - qa) / (1 - qd))


class TestTally:
    def test_running_example(self):
        labels = [1, 1, 1, 1, 0, 0, 1, 0, 0, 0]
        is_d = np.array([False] * 6 + [True] * 4)
        c = tally(np.array(labels), is_d)
        assert c.n == 10
        assert c.q_a == pytest.approx(2 / 3, abs=1e-15)
        assert c.q_d == pytest.approx(1 / 4, abs=1e-15)

    def test_all_positive(self):
        c = tally(np.ones(5, dtype=np.int8), np.array([0, 0, 1, 1, 1], dtype=bool))
        assert c.q_a == c.q_d == 1

    def test_single_d_row(self):
        c = tally(np.array([1, 1, 0]), np.array([False, False, True]))
        assert c.n_d == 1 and c.q_d == 0

    def test_degenerate(self):
        with pytest.raises(DegenerateFacet):
            tally(np.array([1, 0]), np.array([True, True]))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            tally(np.array([1, 0, 1]), np.array([True, False]))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 1), st.booleans()), min_size=2, max_size=300), st.integers(1, 4))
    def test_identities_and_oracle(self, rows, workers):
        labels = np.array([r[0] for r in rows], dtype=np.int8)
        is_d = np.array([r[1] for r in rows])
        if is_d.all() or not is_d.any():
            return
        c = tally(labels, is_d, workers=workers)
        o = oracle_counts(labels, is_d)
        assert (c.n_a0, c.n_a1, c.n_d0, c.n_d1) == (o["a0"], o["a1"], o["d0"], o["d1"])
        assert c.n == c.n_a + c.n_d and c.n1 == c.n_a1 + c.n_d1 and c.n0 == c.n_a0 + c.n_d0


class TestScalarMetrics:
    def test_ci(self):
        assert class_imbalance(GroupLabelCounts(2, 4, 3, 1)) == pytest.approx(0.2, rel=1e-12)
        assert class_imbalance(GroupLabelCounts(1, 1, 1, 1)) == 0

    def test_dpl(self):
        assert dpl(GroupLabelCounts(2, 4, 3, 1)) == pytest.approx(5 / 12, abs=1e-12)
        assert dpl(GroupLabelCounts(1, 1, 2, 2)) == 0

    def test_worked_divergences(self):
        d = divergence_suite(GroupLabelCounts(2, 4, 3, 1), p=1)
        assert d["KL"] == pytest.approx(scalar_kl(2 / 3, 1 / 4), rel=1e-9)
        assert d["KL"] == pytest.approx(0.3836, abs=1e-4)
        assert d["KS"] == pytest.approx(5 / 12, rel=1e-9)
        assert d["TVD"] == pytest.approx(5 / 12, rel=1e-9)
        assert d["LP"] == pytest.approx(5 / 6, rel=1e-9)

    def test_infinite_kl(self):
        d = divergence_suite(GroupLabelCounts(0, 3, 4, 0))  # q_a = 1, q_d = 0
        assert d["KL"] == math.inf
        assert d["JS"] == pytest.approx(math.log(2), rel=1e-12)
        assert d["KS"] == 1

    def test_identical_distributions(self):
        d = divergence_suite(GroupLabelCounts(3, 1, 6, 2))
        assert all(v == 0 for v in d.values())


class TestConditionalDisparity:
    def two_strata(self):
        # S1: 6 rows, negatives 3 (2 in d), positives 3 (1 in d); S2: 4 rows, each class 2 (1 in d)
        y = [0, 0, 0, 1, 1, 1] + [0, 0, 1, 1]
        d = [1, 1, 0, 1, 0, 0] + [1, 0, 1, 0]
        s = ["S1"] * 6 + ["S2"] * 4
        return np.array(y), np.array(d, dtype=bool), s

    def test_hand_example(self):
        y, d, s = self.two_strata()
        value, parts = conditional_demographic_disparity(y, d, s)
        assert value == pytest.approx(0.2, abs=1e-12)
        by_key = {p.stratum_key: p for p in parts}
        assert by_key["S1"].dd_i == pytest.approx(1 / 3, abs=1e-12)
        assert by_key["S2"].dd_i == pytest.approx(0, abs=1e-12)
        assert sum(p.n_i for p in parts) == 10

    def test_single_stratum_is_global_dd(self):
        y, d, _ = self.two_strata()
        value, _ = conditional_demographic_disparity(y, d, ["all"] * 10)
        dd, _ = demographic_disparity(y, d)
        assert value == pytest.approx(dd, abs=1e-15)

    def test_identically_distributed(self):
        y = np.array([0, 0, 1, 1] * 2)
        d = np.array([1, 0, 1, 0] * 2, dtype=bool)
        value, _ = conditional_demographic_disparity(y, d, ["p"] * 4 + ["q"] * 4)
        assert value == pytest.approx(0, abs=1e-15)

    def test_empty_class_flagged(self):
        y = np.array([1, 1, 0, 1])
        d = np.array([1, 0, 1, 0], dtype=bool)
        # stratum u has no negatives, v has both classes
        _, parts = conditional_demographic_disparity(y, d, ["u", "u", "v", "v"])
        flagged = {p.stratum_key: p.flagged for p in parts}
        assert flagged == {"u": True, "v": False}


def _two_groups(draw_rows):
    labels = np.array([r[0] for r in draw_rows], dtype=np.int8)
    is_d = np.array([r[1] for r in draw_rows])
    return labels, is_d


_rows = st.lists(st.tuples(st.integers(0, 1), st.booleans()), min_size=2, max_size=200).filter(
    lambda rs: any(r[1] for r in rs) and not all(r[1] for r in rs))


@settings(max_examples=200, deadline=None)
@given(_rows, st.floats(1, 5))
def test_divergence_properties(rows, p):
    c = tally(*_two_groups(rows))
    d = divergence_suite(c, p)
    assert d["KL"] >= 0
    assert -1e-15 <= d["JS"] <= math.log(2) + 1e-15
    assert 0 <= d["KS"] <= 1 and 0 <= d["TVD"] <= 1
    assert d["TVD"] == 0.5 * divergence_suite(c, 1)["LP"]
    assert -1 <= class_imbalance(c) <= 1 and -1 <= dpl(c) <= 1


@settings(max_examples=200, deadline=None)
@given(_rows)
def test_exchange_symmetry(rows):
    c = tally(*_two_groups(rows))
    s = c.swapped()
    assert class_imbalance(s) == pytest.approx(-class_imbalance(c), abs=1e-15)
    assert dpl(s) == pytest.approx(-dpl(c), abs=1e-15)
    d, ds = divergence_suite(c), divergence_suite(s)
    for k in ("JS", "TVD", "KS", "LP"):
        assert ds[k] == pytest.approx(d[k], abs=1e-12)
    # KL(P_a || P_d) becomes KL(P_d || P_a)
    if 0 < c.q_a < 1 and 0 < c.q_d < 1:
        assert ds["KL"] == pytest.approx(scalar_kl(c.q_d, c.q_a), rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(_rows, st.randoms(use_true_random=False))
def test_permutation_invariance(rows, rnd):
    labels, is_d = _two_groups(rows)
    perm = list(range(len(labels)))
    rnd.shuffle(perm)
    strata = [i % 3 for i in range(len(labels))]
    a = pre_training_metrics(labels, is_d, ["CI", "DPL", "KL", "JS", "LP", "TVD", "KS", "CDDL"], strata)
    b = pre_training_metrics(labels[perm], is_d[perm], ["CI", "DPL", "KL", "JS", "LP", "TVD", "KS", "CDDL"],
                             [strata[i] for i in perm])
    for k in a:
        va, vb = (a[k][0], b[k][0]) if k == "CDDL" else (a[k], b[k])
        if isinstance(va, Undefined):
            assert isinstance(vb, Undefined)
        elif math.isinf(va):
            assert va == vb
        else:
            assert vb == pytest.approx(va, abs=1e-12)


def test_dpl_undefined_without_group():
    assert isinstance(dpl(GroupLabelCounts(0, 0, 1, 1)), Undefined)
