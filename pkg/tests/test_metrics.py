import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from equitable_fl.data import Dataset
from equitable_fl.errors import ContractViolation
from equitable_fl.metrics import client_disagreement, evaluate, nmi, sigma_acc
from equitable_fl.model import ModelParams, param_count


def cd_oracle(losses):
    pairs = list(itertools.combinations(losses, 2))
    return sum(abs(a - b) for a, b in pairs) / len(pairs)


def nmi_oracle(pred, truth):
    n = len(pred)
    joint = Counter(zip(pred, truth))
    pc, tc = Counter(pred), Counter(truth)
    mi = sum(c / n * math.log(c * n / (pc[a] * tc[b])) for (a, b), c in joint.items())
    hp = -sum(c / n * math.log(c / n) for c in pc.values())
    ht = -sum(c / n * math.log(c / n) for c in tc.values())
    return mi / math.sqrt(hp * ht)


class TestCD:
    def test_equal(self):
        assert client_disagreement([0.5, 0.5]) == 0

    def test_pair(self):
        assert client_disagreement([0.5, 0.7]) == pytest.approx(0.2, abs=1e-15)

    def test_three(self):
        assert cd_oracle([0, 1, 2]) == 4 / 3
        assert client_disagreement([0, 1, 2]) == pytest.approx(4 / 3, abs=1e-12)

    def test_too_few(self):
        with pytest.raises(ContractViolation):
            client_disagreement([1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 10), min_size=2, max_size=10), st.floats(0, 5),
           st.randoms(use_true_random=False))
    def test_properties(self, losses, alpha, r):
        cd = client_disagreement(losses)
        assert cd == pytest.approx(cd_oracle(losses), abs=1e-9)
        shuffled = losses[:]
        r.shuffle(shuffled)
        assert client_disagreement(shuffled) == pytest.approx(cd, abs=1e-9)
        assert client_disagreement([alpha * x for x in losses]) == pytest.approx(alpha * cd, abs=1e-9)


class TestSigmaAcc:
    def test_zero(self):
        assert sigma_acc([0.7, 0.7], 0.7) == 0

    def test_symmetric(self):
        assert sigma_acc([1, 0], 0.5) == 0.5

    def test_formula(self):
        expected = math.sqrt(((0.9 - 0.8) ** 2 + 0 + (0.7 - 0.8) ** 2) / 3)
        assert expected == pytest.approx(0.08165, abs=1e-5)
        assert sigma_acc([0.9, 0.8, 0.7], 0.8) == pytest.approx(expected, abs=1e-15)

    def test_empty(self):
        with pytest.raises(ContractViolation):
            sigma_acc([], 0.5)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=10), st.floats(0, 1))
    def test_zero_iff_equal(self, accs, g):
        assert (sigma_acc(accs, g) == 0) == all(a == g for a in accs)


class TestNMI:
    def test_identical(self):
        assert nmi([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == pytest.approx(1.0, abs=1e-12)

    def test_constant_vs_balanced(self):
        assert nmi([0, 0, 0, 0], [0, 0, 1, 1]) == 0.0

    def test_both_constant(self):
        assert nmi([3, 3], [1, 1]) == 1.0

    def test_independent(self):
        assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-12)

    def test_contingency_oracle(self):
        pred, truth = [0, 0, 1, 1], [0, 0, 1, 2]
        # I = ln 2, H(pred) = ln 2, H(truth) = 1.5 ln 2 -> 1/sqrt(1.5)
        assert nmi_oracle(pred, truth) == pytest.approx(1 / math.sqrt(1.5), abs=1e-12)
        assert nmi(pred, truth) == pytest.approx(nmi_oracle(pred, truth), abs=1e-12)

    def test_arithmetic_variant(self):
        assert nmi([0, 0, 1, 1], [0, 0, 1, 2], average="arithmetic") == pytest.approx(
            math.log(2) / (1.25 * math.log(2)), abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            nmi([0, 1], [0])

    def test_matches_sklearn(self):
        sk = pytest.importorskip("sklearn.metrics")
        r = np.random.default_rng(0)
        for _ in range(20):
            a, b = r.integers(0, 4, 30), r.integers(0, 3, 30)
            assert nmi(a, b) == pytest.approx(
                sk.normalized_mutual_info_score(b, a, average_method="geometric"), abs=1e-12)

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=20))
    def test_symmetric_bounded_relabel(self, pairs):
        a = [p for p, _ in pairs]
        b = [t for _, t in pairs]
        v = nmi(a, b)
        assert 0.0 <= v <= 1.0
        assert nmi(b, a) == pytest.approx(v, abs=1e-12)
        assert nmi([7 - x for x in a], b) == pytest.approx(v, abs=1e-12)


def perfect_net():
    # 2 inputs, 2 classes: logits = 10 * x
    return ModelParams((2, 2), [10, 0, 0, 10, 0, 0])


class TestEvaluate:
    def test_perfect(self):
        ds = Dataset(np.eye(2).repeat(3, axis=0), [0, 0, 0, 1, 1, 1], 2)
        losses, accs, g = evaluate(perfect_net(), [ds, ds.subset([0])], ds)
        assert accs == [1.0, 1.0] and g == 1.0
        assert sigma_acc(accs, g) == 0

    def test_zero_net(self):
        r = np.random.default_rng(0)
        ds = Dataset(r.standard_normal((1000, 3)), np.repeat(np.arange(10), 100), 10)
        p = ModelParams((3, 10), np.zeros(param_count((3, 10))))
        losses, accs, g = evaluate(p, [ds], ds)
        assert losses[0] == pytest.approx(math.log(10), abs=1e-12)
        assert abs(accs[0] - 0.1) <= 3 * math.sqrt(0.1 * 0.9 / 1000)

    def test_single_sample(self):
        ds = Dataset([[1.0, 0.0]], [1], 2)
        _, accs, _ = evaluate(perfect_net(), [ds], ds)
        assert accs[0] in (0.0, 1.0)

    def test_empty_shard(self):
        ds = Dataset(np.zeros((0, 2)), np.zeros(0, int), 2)
        with pytest.raises(ContractViolation):
            evaluate(perfect_net(), [ds], Dataset([[1.0, 0.0]], [0], 2))
