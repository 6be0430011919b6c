import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crowdem.errors import DegenerateWorkerError
from crowdem.estep import posterior, posterior_all, sample_stat
from crowdem.model import ConfusionTensor, LabelSet
from crowdem.oracles import brute_posterior
from tests.helpers import random_confusion

TWO_WORKERS = ConfusionTensor([
    [[0.9, 0.1], [0.2, 0.8]],
    [[0.6, 0.4], [0.3, 0.7]],
])


def random_item(rng, m, k, size):
    workers = rng.choice(m, size=size, replace=False)
    return [(int(i), int(rng.integers(1, k + 1))) for i in workers]


def test_empty_observation_gives_uniform():
    p = posterior(TWO_WORKERS, [])
    assert p.tolist() == [0.5, 0.5]


def test_uninformative_worker():
    c = ConfusionTensor.uniform(1, 2)
    assert posterior(c, [(0, 1)]) == pytest.approx([0.5, 0.5], abs=1e-15)


def test_two_worker_example():
    p = posterior(TWO_WORKERS, [(0, 1), (1, 2)])
    assert p == pytest.approx([0.72, 0.28], abs=1e-12)
    assert abs(p.sum() - 1) <= 1e-12


def test_matches_exact_oracle_on_1000_cases():
    rng = np.random.default_rng(1234)
    worst = 0.0
    for _ in range(1000):
        m, k = int(rng.integers(1, 8)), int(rng.integers(2, 6))
        c = random_confusion(rng, m, k)
        obs = random_item(rng, m, k, int(rng.integers(0, m + 1)))
        exact = np.array([float(v) for v in brute_posterior(c, obs)])
        worst = max(worst, float(np.max(np.abs(posterior(c, obs) - exact))))
    assert worst < 1e-12


def test_many_observations_do_not_underflow():
    m = 400
    c = ConfusionTensor(np.tile([[0.9, 0.1], [0.1, 0.9]], (m, 1, 1)))
    p = posterior(c, [(i, 1) for i in range(m)])
    assert np.all(np.isfinite(p))
    assert p[0] == 1.0
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 10), k=st.integers(2, 5))
def test_log_domain_agrees_with_linear_domain(seed, m, k):
    rng = np.random.default_rng(seed)
    c = random_confusion(rng, m, k)
    obs = random_item(rng, m, k, int(rng.integers(1, m + 1)))
    linear = np.ones(k)
    for i, g in obs:
        linear *= c.values[i, :, g - 1]
    linear /= linear.sum()
    np.testing.assert_allclose(posterior(c, obs), linear, rtol=1e-10, atol=0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_observation_order_does_not_matter(seed):
    rng = np.random.default_rng(seed)
    c = random_confusion(rng, 6, 3)
    obs = random_item(rng, 6, 3, 6)
    np.testing.assert_allclose(posterior(c, obs), posterior(c, obs[::-1]), rtol=0, atol=1e-13)


class TestPosteriorAll:
    def test_single_item_reduces_to_posterior(self):
        labels = LabelSet.from_rows([("a", "w1", 1), ("a", "w2", 2)], k=2)
        p = posterior_all(TWO_WORKERS, labels)
        assert p.values.shape == (1, 2)
        np.testing.assert_array_equal(p.values[0], posterior(TWO_WORKERS, [(0, 1), (1, 2)]))

    def test_matches_per_item_calls(self, toy_labels, rng):
        c = random_confusion(rng, toy_labels.m, toy_labels.k)
        p = posterior_all(c, toy_labels)
        for j in range(toy_labels.n):
            np.testing.assert_array_equal(p.values[j], posterior(c, toy_labels.item_observations(j)))

    def test_unlabeled_item_is_uniform(self):
        labels = LabelSet(k=3, worker_ids=["w"], item_ids=["a", "b"], workers=[0], items=[0], labels=[2])
        p = posterior_all(ConfusionTensor.uniform(1, 3), labels)
        np.testing.assert_allclose(p.values[1], [1 / 3] * 3, atol=1e-15)

    def test_item_permutation_permutes_rows(self, small_instance, rng):
        labels = small_instance.labels
        perm = rng.permutation(labels.n)
        inverse = np.argsort(perm)
        permuted = LabelSet(
            k=labels.k, worker_ids=labels.worker_ids,
            item_ids=[labels.item_ids[j] for j in perm],
            workers=labels.workers, items=inverse[labels.items], labels=labels.labels,
        )
        c = small_instance.confusion
        np.testing.assert_array_equal(posterior_all(c, permuted).values, posterior_all(c, labels).values[perm])

    def test_threads_are_bit_identical(self, small_instance):
        c, labels = small_instance.confusion, small_instance.labels
        np.testing.assert_array_equal(posterior_all(c, labels, threads=4).values,
                                      posterior_all(c, labels, threads=1).values)

    def test_threads_default_from_environment(self, small_instance, monkeypatch):
        monkeypatch.setenv("CROWDEM_THREADS", "3")
        c, labels = small_instance.confusion, small_instance.labels
        np.testing.assert_array_equal(posterior_all(c, labels).values,
                                      posterior_all(c, labels, threads=1).values)


class TestSampleStat:
    def test_empty_observation_is_zero(self):
        assert not np.any(sample_stat(TWO_WORKERS, []))

    def test_two_worker_example(self):
        a = sample_stat(TWO_WORKERS, [(0, 1), (1, 2)])
        np.testing.assert_allclose(a[0, :, 0], [0.72, 0.28], atol=1e-12)
        np.testing.assert_allclose(a[1, :, 1], [0.72, 0.28], atol=1e-12)
        assert a[0, :, 1].tolist() == [0.0, 0.0]
        assert a[1, :, 0].tolist() == [0.0, 0.0]
        assert a.sum() == pytest.approx(2.0, abs=1e-12)

    def test_single_observation_unrolls_definition(self, rng):
        c = random_confusion(rng, 3, 3)
        a = sample_stat(c, [(1, 2)])
        p = posterior(c, [(1, 2)])
        expected = np.zeros((3, 3, 3))
        expected[1, :, 1] = p
        np.testing.assert_array_equal(a, expected)


class TestZeroLikelihood:
    # Worker w1 rules out class 2 and worker w2 rules out class 1.
    OPPOSED = ConfusionTensor([
        [[1.0, 0.0], [0.0, 1.0]],
        [[0.0, 1.0], [1.0, 0.0]],
    ], strict=False)

    def test_posterior_all_names_item_and_worker(self):
        labels = LabelSet.from_rows([("b", "w1", 2), ("a", "w1", 1), ("a", "w2", 1)], k=2)
        with pytest.raises(DegenerateWorkerError) as err:
            posterior_all(self.OPPOSED, labels)
        assert err.value.worker == 0
        assert err.value.worker_id == "w1"
        assert "w1" in str(err.value)
        assert "item 'a'" in str(err.value)

    def test_single_item_reports_worker_index(self):
        with pytest.raises(DegenerateWorkerError) as err:
            posterior(self.OPPOSED, [(1, 1), (0, 1)])
        assert err.value.worker == 1
        assert err.value.worker_id is None

    def test_partial_zeros_are_fine(self):
        p = posterior(self.OPPOSED, [(0, 1)])
        assert p.tolist() == [1.0, 0.0]
