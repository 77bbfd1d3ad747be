import numpy as np
import pytest

from optotact import classifier, features, tactile
from optotact.physics import AdcModel, StructureSpec


@pytest.fixture(scope="session")
def structure():
    return StructureSpec()


@pytest.fixture(scope="session")
def adc_quiet():
    return AdcModel(noise_sigma=0.0)


@pytest.fixture(scope="session")
def dataset2000():
    """The full-size synthetic set shared by the classifier and acceptance tests."""
    return tactile.generate_dataset(200, seed=1234)


@pytest.fixture(scope="session")
def features2000(dataset2000):
    X = features.extract_feature_matrix([s.image for s in dataset2000])
    y = np.array([s.label for s in dataset2000])
    return X, y


@pytest.fixture(scope="session")
def trained_classifier(features2000):
    X, y = features2000
    train_idx, val_idx = tactile.stratified_split(y, 0.8, seed=7)
    clf = classifier.SoftmaxShapeClassifier(seed=0).fit(X[train_idx], y[train_idx])
    return clf, (train_idx, val_idx)
