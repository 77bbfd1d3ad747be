import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from optotact import tactile
from optotact.classifier import (
    SoftmaxShapeClassifier,
    _softmax,
    classify_image,
    confusion_matrix,
    cross_entropy,
    gradient_check,
    load_model,
    save_model,
    train_on_images,
)
from optotact.features import EmptyContactError, extract_feature_matrix


def toy_features(n_per_class=12, n_classes=4, seed=0, spread=4.0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0, spread, size=(n_classes, 6))
    X = np.vstack([centers[c] + rng.normal(0, 0.5, size=(n_per_class, 6)) for c in range(n_classes)])
    y = np.repeat([f"class{c}" for c in range(n_classes)], n_per_class)
    return X, y


class TestTraining:
    def test_memorizes_toy_images(self):
        samples = tactile.generate_dataset(5, seed=3)
        images = [s.image for s in samples]
        clf = train_on_images(images, epochs=60, seed=0)
        X = extract_feature_matrix(images)
        y = np.array([s.label for s in samples])
        assert (clf.predict(X) == y).mean() == 1.0

    def test_epoch_one_descends_over_seeds(self, features2000):
        X, y = features2000
        train_idx, _ = tactile.stratified_split(y, 0.8, seed=7)
        drops = []
        for seed in range(5):
            clf = SoftmaxShapeClassifier(seed=seed).fit(X[train_idx], y[train_idx])
            drops.append(clf.loss_history_[0] - clf.loss_history_[1])
            assert clf.loss_history_[0] == pytest.approx(math.log(10), rel=1e-12)
        assert np.mean(drops) > 0

    def test_zero_learning_rate_uniform_loss(self):
        X, y = toy_features(n_per_class=8, n_classes=10)
        clf = SoftmaxShapeClassifier(learning_rate=0.0, seed=0).fit(X, y)
        assert np.array_equal(clf.weights_, np.zeros_like(clf.weights_))
        assert clf.final_loss_ == pytest.approx(math.log(10), rel=1e-12)

    def test_single_class_rejected(self):
        X = np.random.default_rng(0).normal(size=(10, 4))
        with pytest.raises(ValueError, match="two classes"):
            SoftmaxShapeClassifier().fit(X, ["same"] * 10)

    def test_bit_for_bit_determinism(self):
        X, y = toy_features()
        a = SoftmaxShapeClassifier(seed=9).fit(X, y)
        b = SoftmaxShapeClassifier(seed=9).fit(X, y)
        assert np.array_equal(a.weights_, b.weights_)

    def test_unlabelled_images_rejected(self):
        samples = tactile.generate_dataset(1, seed=0)
        bare = tactile.TactileImage(samples[0].image.pixels, label=None)
        with pytest.raises(ValueError, match="label"):
            train_on_images([bare, samples[1].image])

    def test_get_params_and_clone(self):
        clf = SoftmaxShapeClassifier(epochs=7, logit_gain=25.0)
        params = clf.get_params()
        assert params["epochs"] == 7 and params["logit_gain"] == 25.0
        assert clone(clf).epochs == 7


class TestPredict:
    def test_probabilities_sum_to_one(self, trained_classifier, features2000):
        clf, (_, val_idx) = trained_classifier
        X, _ = features2000
        probs = clf.predict_proba(X[val_idx])
        assert np.abs(probs.sum(axis=1) - 1.0).max() <= 1e-12

    def test_zero_weight_model_uniform(self):
        X, y = toy_features(n_classes=10)
        clf = SoftmaxShapeClassifier(learning_rate=0.0).fit(X, y)
        probs = clf.predict_proba(X[:5])
        assert np.allclose(probs, 0.1, atol=1e-12)

    def test_score_shift_invariance(self):
        # Adding a constant to every class score leaves softmax unchanged.
        rng = np.random.default_rng(1)
        scores = rng.normal(size=(20, 10))
        assert np.allclose(_softmax(scores), _softmax(scores + 123.4), atol=1e-12)
        assert (np.argmax(_softmax(scores), 1) == np.argmax(_softmax(scores + 7.0), 1)).all()

    def test_held_out_accuracy_gate(self, trained_classifier, features2000):
        clf, (_, val_idx) = trained_classifier
        X, y = features2000
        accuracy = (clf.predict(X[val_idx]) == y[val_idx]).mean()
        assert accuracy >= 0.95

    def test_predict_before_fit(self):
        with pytest.raises(NotFittedError):
            SoftmaxShapeClassifier().predict(np.zeros((1, 10)))

    def test_classify_image_and_empty_contact(self, trained_classifier, dataset2000):
        clf, _ = trained_classifier
        sample = dataset2000[0]
        label, probs = classify_image(clf, sample.image)
        assert label in tactile.SHAPE_CLASSES
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        blank = tactile.TactileImage(np.full((120, 160, 3), 0.7))
        with pytest.raises(EmptyContactError):
            classify_image(clf, blank)


class TestGradientCheck:
    def test_random_batch_small_error(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(8, 10))
        labels = rng.integers(0, 10, size=8)
        weights = rng.normal(0, 0.5, size=(10, 11))
        assert gradient_check(weights, X, labels) <= 1e-5

    def test_zero_weights_bias_gradient_closed_form(self):
        # With zero weights, probabilities are uniform; the bias gradient per
        # class is (1/n_classes) - fraction of batch in that class.
        n_classes, per_class = 5, 3
        X = np.random.default_rng(0).normal(size=(n_classes * per_class, 4))
        labels = np.repeat(np.arange(n_classes), per_class)
        weights = np.zeros((n_classes, 5))
        from optotact.classifier import _add_bias, _loss_and_grad

        _, grad = _loss_and_grad(weights, _add_bias(X), labels)
        expected = 1.0 / n_classes - per_class / len(labels)
        assert grad[:, 0] == pytest.approx(np.full(n_classes, expected), abs=1e-12)

    def test_duplicated_batch_same_gradient(self):
        from optotact.classifier import _add_bias, _loss_and_grad

        rng = np.random.default_rng(7)
        X = rng.normal(size=(6, 3))
        labels = rng.integers(0, 3, size=6)
        weights = rng.normal(size=(3, 4))
        _, single = _loss_and_grad(weights, _add_bias(X), labels)
        _, doubled = _loss_and_grad(
            weights, _add_bias(np.vstack([X, X])), np.concatenate([labels, labels])
        )
        assert doubled == pytest.approx(single, rel=1e-12)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            gradient_check(np.zeros((3, 4)), np.zeros((0, 3)), np.zeros(0, dtype=int))

    def test_cross_entropy_uniform_value(self):
        weights = np.zeros((10, 11))
        X = np.random.default_rng(2).normal(size=(16, 11))
        labels = np.random.default_rng(3).integers(0, 10, size=16)
        assert cross_entropy(weights, X, labels) == pytest.approx(math.log(10), rel=1e-12)


class TestPersistence:
    def test_model_round_trip(self, trained_classifier, features2000, tmp_path):
        clf, (_, val_idx) = trained_classifier
        X, _ = features2000
        path = tmp_path / "model.csv"
        save_model(path, clf)
        loaded = load_model(path)
        assert np.array_equal(loaded.weights_, clf.weights_)
        assert np.array_equal(loaded.classes_, clf.classes_)
        assert loaded.logit_gain == clf.logit_gain
        assert np.allclose(loaded.predict_proba(X[val_idx]), clf.predict_proba(X[val_idx]))

    def test_reject_garbage(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("not,a,model\n")
        with pytest.raises(ValueError):
            load_model(path)


class TestConfusion:
    def test_counts(self):
        labels = ["a", "b", "c"]
        counts = confusion_matrix(["a", "a", "b", "c"], ["a", "b", "b", "c"], labels)
        assert counts[0, 0] == 1 and counts[0, 1] == 1
        assert counts[1, 1] == 1 and counts[2, 2] == 1
        assert counts.sum() == 4
