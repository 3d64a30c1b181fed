import numpy as np
import pytest

from segnn.baselines import (
    FewShotConfig,
    construct_pairs,
    draw_shots,
    fewshot_train,
    mean_same_class_cosine,
    train_logreg,
)
from segnn.errors import FewShotConfigError, SingleClassError


def test_logreg_separable_toy_set_reaches_full_accuracy():
    rng = np.random.default_rng(3)
    x0 = rng.normal(size=(20, 2)) + [-3.0, 0.0]
    x1 = rng.normal(size=(20, 2)) + [3.0, 0.0]
    x = np.vstack([x0, x1])
    y = np.array([0] * 20 + [1] * 20)
    model = train_logreg(x, y)
    assert np.mean(model.predict(x) == y) == 1.0


def test_logreg_identical_features_predicts_class_prior():
    x = np.ones((10, 3))
    y = np.array([1] * 7 + [0] * 3)
    model = train_logreg(x, y)
    assert model.predict_proba(x[0:1])[0] == pytest.approx(0.7, abs=0.01)


def test_logreg_two_point_boundary_is_midway():
    # analytic check: by symmetry the optimum satisfies w . mid + b = 0,
    # so the midpoint probability must be exactly one half at convergence
    a = np.array([0.5, -1.0])
    b = np.array([2.5, 3.0])
    x = np.vstack([a, b])
    y = np.array([0, 1])
    model = train_logreg(x, y, steps=12000)
    mid = (a + b) / 2.0
    assert abs(model.predict_proba(mid[None, :])[0] - 0.5) < 1e-6


def test_logreg_single_class_raises():
    with pytest.raises(SingleClassError):
        train_logreg(np.ones((4, 2)), np.zeros(4))


def test_logreg_is_deterministic():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(12, 4))
    y = (rng.random(12) < 0.5).astype(int)
    y[:2] = [0, 1]
    m1 = train_logreg(x, y, steps=200)
    m2 = train_logreg(x, y, steps=200)
    assert np.array_equal(m1.weights, m2.weights) and m1.bias == m2.bias


def _labels(n_per_class=25):
    return np.array([0] * n_per_class + [1] * n_per_class)


@pytest.mark.parametrize("m", [2, 5, 10, 20])
def test_construct_pairs_counts(m):
    triples = construct_pairs(_labels(), m, seed=7)
    expected_per_class = m * (m - 1) // 2
    for c in (0, 1):
        positives = [t for t in triples if t.anchor_class == c and t.s == 1]
        negatives = [t for t in triples if t.anchor_class == c and t.s == 0]
        assert len(positives) == expected_per_class
        assert len(negatives) == expected_per_class
    assert len(triples) == 4 * expected_per_class


def test_construct_pairs_class_constraints():
    labels = _labels()
    for t in construct_pairs(labels, 5, seed=3):
        if t.s == 1:
            assert labels[t.i] == labels[t.j] == t.anchor_class
        else:
            assert labels[t.i] == t.anchor_class
            assert labels[t.j] != t.anchor_class


def test_construct_pairs_deterministic_and_seed_sensitive():
    labels = _labels()
    assert construct_pairs(labels, 5, seed=9) == construct_pairs(labels, 5, seed=9)
    assert construct_pairs(labels, 5, seed=9) != construct_pairs(labels, 5, seed=10)


def test_construct_pairs_errors():
    with pytest.raises(FewShotConfigError):
        construct_pairs(_labels(), 1, seed=0)
    with pytest.raises(FewShotConfigError):
        construct_pairs(np.array([0, 0, 0, 1]), 2, seed=0)


def test_draw_shots_without_replacement():
    shots = draw_shots(_labels(), 20, seed=5)
    for c in (0, 1):
        assert len(set(shots[c].tolist())) == 20


def _toy_embeddings(n_per_class=25, d=12, seed=2, gap=2.0):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=(n_per_class, d)) + gap
    x1 = rng.normal(size=(n_per_class, d)) - gap
    return np.vstack([x0, x1]), _labels(n_per_class)


def test_fewshot_identity_ablation_reduces_to_logreg():
    x, y = _toy_embeddings()
    config = FewShotConfig(shots=5, epochs=0, seed=21)
    model = fewshot_train(x, y, config)
    assert np.array_equal(model.projection, np.eye(x.shape[1]))
    shots = model.shot_indices
    direct = train_logreg(x[shots], y[shots])
    assert np.array_equal(model.head.weights, direct.weights)
    assert model.head.bias == direct.bias


def test_fewshot_m5_consumes_forty_triples():
    x, y = _toy_embeddings()
    model = fewshot_train(x, y, FewShotConfig(shots=5, seed=1))
    assert model.n_triples == 40


def test_fewshot_same_class_cosine_does_not_decrease():
    x, y = _toy_embeddings(gap=1.0)
    config = FewShotConfig(shots=10, seed=4, learning_rate=1e-3)
    shots = draw_shots(y, config.shots, config.seed)
    from segnn.baselines import construct_pairs_from_shots

    triples = construct_pairs_from_shots(shots, config.seed)
    before = mean_same_class_cosine(x, triples, np.eye(x.shape[1]))
    model = fewshot_train(x, y, config)
    after = mean_same_class_cosine(x, triples, model.projection)
    assert after >= before - 1e-12


def test_fewshot_default_learning_rate_also_trains():
    x, y = _toy_embeddings()
    model = fewshot_train(x, y, FewShotConfig(shots=5, seed=8))
    preds = model.predict(x)
    assert preds.shape == (len(y),)


def test_fewshot_config_validation():
    with pytest.raises(FewShotConfigError):
        FewShotConfig(shots=1)
    with pytest.raises(FewShotConfigError):
        FewShotConfig(shots=5, learning_rate=0)
