import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_bag
from rmisvm.data import Dataset, SynthConfig, generate_synthetic
from rmisvm.evaluation import (
    CvReport,
    DetectionCurve,
    accuracy,
    detection_rate_curve,
    kfold_cv,
    stratified_folds,
)
from rmisvm.misvm import MisvmConfig
from rmisvm.model import HyperParams


def balanced(n_pos, n_neg, seed=0):
    rng = np.random.default_rng(seed)
    bags = [make_bag(rng.standard_normal((2, 3)), 1, f"p{i:03d}") for i in range(n_pos)]
    bags += [make_bag(rng.standard_normal((2, 3)), 0, f"n{i:03d}") for i in range(n_neg)]
    return Dataset(tuple(bags), 3)


class TestAccuracy:
    def test_values(self):
        assert accuracy([1, 0, 1], [1, 0, 1]) == 1.0
        assert accuracy([1, 0], [0, 1]) == 0.0
        assert accuracy([1, 1, 0, 0], [1, 0, 1, 0]) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy([1], [1, 0])


class TestFolds:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 25), st.integers(2, 25), st.integers(2, 6), st.integers(0, 10**6))
    def test_partition_and_stratification(self, n_pos, n_neg, k, seed):
        data = balanced(n_pos, n_neg)
        folds = stratified_folds(data, k, seed)
        flat = np.concatenate(folds)
        assert sorted(flat.tolist()) == list(range(data.n))
        pos_counts = [int(np.sum(data.labels[f] == 1)) for f in folds]
        assert max(pos_counts) - min(pos_counts) <= 1
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1

    def test_independent_of_input_order(self):
        data = balanced(7, 9)
        rev = Dataset(tuple(reversed(data.bags)), data.dim)
        ids = lambda d, fs: [sorted(d.bags[i].id for i in f) for f in fs]
        assert ids(data, stratified_folds(data, 4, 3, 1)) == ids(rev, stratified_folds(rev, 4, 3, 1))

    def test_repeats_differ(self):
        data = balanced(10, 10)
        assert [f.tolist() for f in stratified_folds(data, 5, 0, 0)] != [
            f.tolist() for f in stratified_folds(data, 5, 0, 1)
        ]


class TestKfold:
    def test_oracle_weights_are_perfect(self):
        res = generate_synthetic(SynthConfig(noise=0.0), 0)
        oracle = lambda d, s: 10.0 * res.direction
        rep = kfold_cv(res.data, k=5, repeats=3, trainer=oracle)
        assert rep.mean == 1.0 and rep.std == 0.0
        assert len(rep.per_run_accuracy) == 3

    def test_always_positive_is_base_rate(self):
        data = balanced(10, 10)
        # zero weights give P = 1 - 2^-m >= 0.5: always label 1
        rep = kfold_cv(data, k=5, repeats=2, trainer=lambda d, s: np.zeros(d.dim))
        assert rep.mean == 0.5

    def test_too_few_bags_per_class(self):
        with pytest.raises(ValueError):
            kfold_cv(balanced(3, 20), k=5, repeats=1)

    def test_bad_trainer(self):
        with pytest.raises(ValueError):
            kfold_cv(balanced(5, 5), k=2, repeats=1, trainer="svm")

    def test_deterministic_and_order_invariant(self):
        data, _ = generate_synthetic(SynthConfig(n_pos_bags=10, n_neg_bags=10, dim=20), 0)
        hp = HyperParams(T=300)
        a = kfold_cv(data, hp, k=5, repeats=2, seed=4)
        b = kfold_cv(data, hp, k=5, repeats=2, seed=4)
        rev = Dataset(tuple(reversed(data.bags)), data.dim)
        c = kfold_cv(rev, hp, k=5, repeats=2, seed=4)
        assert a == b == c

    def test_misvm_trainer(self):
        data, _ = generate_synthetic(SynthConfig(n_pos_bags=6, n_neg_bags=6, dim=10), 0)
        rep = kfold_cv(data, k=3, repeats=1, trainer="misvm", misvm_cfg=MisvmConfig(inner_iters=500))
        assert rep.trainer == "misvm"
        assert 0.0 <= rep.mean <= 1.0

    def test_seed_matters(self):
        data, _ = generate_synthetic(SynthConfig(n_pos_bags=10, n_neg_bags=10, dim=20), 0)
        hp = HyperParams(T=200)
        reps = {kfold_cv(data, hp, k=5, repeats=2, seed=s).per_run_accuracy for s in range(4)}
        assert len(reps) > 1


class TestReports:
    def test_cv_formats(self):
        rep = CvReport(2, 10, (0.8, 0.9), 0.85, 0.05)
        text = rep.to_text()
        assert "85.00 +/- 5.00 %" in text
        kv = dict(line.split("=", 1) for line in rep.to_kv().splitlines())
        assert float(kv["mean"]) == 0.85 and float(kv["std"]) == 0.05
        assert kv["repeats"] == "2" and kv["folds"] == "10"
        assert float(kv["run2"]) == 0.9

    def test_curve_formats(self):
        c = DetectionCurve((1, 5), (0.25, 1.0))
        assert c.to_kv() == "1\t0.25\n5\t1.0\n"
        assert c.to_text().splitlines()[0] == "k\tdetection_rate"


class TestDetectionCurve:
    def test_full_k_is_one(self, synth_sets):
        data, gt = synth_sets[0]
        w = np.random.default_rng(0).standard_normal(data.dim)
        m = max(len(b) for b in data.bags)
        assert detection_rate_curve(w, data, gt, [m]).rates == (1.0,)

    def test_random_weights_hit_rate_equals_fraction(self):
        # w orthogonal to the class direction: scores carry no label information
        cfg = SynthConfig(n_pos_bags=1000, n_neg_bags=1, instances_per_bag=20, positive_fraction=0.25, dim=10)
        res = generate_synthetic(cfg, 0)
        w = np.random.default_rng(1).standard_normal(cfg.dim)
        w -= (w @ res.direction) * res.direction
        rate = detection_rate_curve(w, res.data, res.truth, [1]).rates[0]
        assert abs(rate - 0.25) <= 0.05

    def test_oracle_weights_k1(self):
        res = generate_synthetic(SynthConfig(), 0)
        assert detection_rate_curve(res.direction, res.data, res.truth, [1]).rates[0] >= 0.9

    def test_monotone_and_sorted(self, synth_sets):
        data, gt = synth_sets[3]
        w = np.random.default_rng(2).standard_normal(data.dim)
        c = detection_rate_curve(w, data, gt, [10, 1, 3, 3, 20])
        assert c.k_values == (1, 3, 10, 20)
        assert all(a <= b for a, b in zip(c.rates, c.rates[1:]))

    def test_misaligned_truth(self, synth_sets):
        data, gt = synth_sets[0]
        other, _ = generate_synthetic(SynthConfig(n_pos_bags=2, n_neg_bags=2), 0)
        with pytest.raises(ValueError):
            detection_rate_curve(np.zeros(other.dim), other, gt, [1])

    def test_rejects_bad_k(self, synth_sets):
        data, gt = synth_sets[0]
        with pytest.raises(ValueError):
            detection_rate_curve(np.zeros(data.dim), data, gt, [0])
