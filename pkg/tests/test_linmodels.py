import json

import numpy as np
import pytest

from specfid.errors import DataError
from specfid.imagecore import load_corpus, synth_corpus
from specfid.linmodels import (
    Standardizer,
    cluster_by_top_frequency,
    fit_standardizer,
    hinge_objective,
    hinge_subgradient,
    kmeans,
    load_model,
    logreg_gradient,
    preprocess,
    save_model,
    top_populated_column,
    train_linsvm,
    train_logreg,
)
from specfid.spectrum import batch_profiles, profile_matrix


class TestStandardizer:
    def test_constant_column_becomes_zero(self):
        data = np.array([[3.0, 1.0], [3.0, 2.0], [3.0, 4.0]])
        out = fit_standardizer(data).apply(data)
        assert np.all(out[:, 0] == 0.0)

    def test_standardized_data_is_preserved(self, rng):
        data = rng.standard_normal((50, 3))
        data = (data - data.mean(axis=0)) / data.std(axis=0)
        assert np.allclose(fit_standardizer(data).apply(data), data, atol=1e-12)

    def test_random_matrix(self, rng):
        data = rng.random((100, 10)) * 40 + 7
        out = fit_standardizer(data).apply(data)
        assert np.all(np.abs(out.mean(axis=0)) <= 1e-10)
        assert np.all(np.abs(out.std(axis=0) - 1.0) <= 1e-10)

    def test_width_mismatch(self, rng):
        with pytest.raises(ValueError):
            fit_standardizer(rng.random((4, 3))).apply(rng.random((4, 2)))

    def test_ragged_input(self):
        with pytest.raises(ValueError):
            fit_standardizer([[1.0, 2.0], [3.0]])

    @pytest.mark.parametrize("train", [train_logreg, train_linsvm])
    def test_predictions_ignore_feature_scale(self, rng, train):
        x = rng.standard_normal((80, 4))
        y = (x @ np.array([1.0, -2.0, 0.5, 0.0]) > 0).astype(float)
        x[:, 0] += 3.0
        scales = np.array([1e-3, 7.0, 250.0, 0.5])
        predictions = []
        for features in (x, x * scales):
            standardizer = fit_standardizer(features)
            model, _ = train(standardizer.apply(features), y, epochs=300)
            predictions.append(model.predict(standardizer.apply(features)))
        assert np.array_equal(predictions[0], predictions[1])

    def test_rebuilt_from_stats(self, rng):
        data = rng.random((30, 3)) * 5
        fitted = fit_standardizer(data)
        rebuilt = Standardizer.from_stats(fitted.mean, fitted.std)
        assert np.allclose(rebuilt.apply(data), fitted.apply(data), atol=1e-12)
        with pytest.raises(ValueError):
            Standardizer.from_stats([0.0, 1.0], [1.0])


def test_preprocess_is_log1p():
    assert np.allclose(preprocess([[0.0, np.e - 1.0]]), [[0.0, 1.0]])


class TestLogisticRegression:
    def test_separated_data(self):
        labels = np.array([0, 1] * 10)
        _, accuracy = train_logreg(labels.astype(float), labels, epochs=200)
        assert accuracy == 1.0

    def test_indistinguishable_classes(self, rng):
        vectors = rng.standard_normal((100, 4))
        features = np.vstack([vectors, vectors])
        labels = np.r_[np.zeros(100), np.ones(100)]
        model, accuracy = train_logreg(features, labels)
        assert accuracy == 0.5
        assert np.allclose(model.weights, 0.0)

    def test_gradient_at_zero(self):
        x = np.array([[1.0], [2.0]])
        y = np.array([0.0, 1.0])
        grad_w, grad_b = logreg_gradient(np.zeros(1), 0.0, x, y)
        assert grad_w == pytest.approx([(0.5 * 1.0 - 0.5 * 2.0) / 2])
        assert grad_b == pytest.approx(0.0)

    def test_loss_never_increases(self, rng):
        for trial in range(20):
            data = rng.standard_normal((60, 5))
            x = fit_standardizer(data).apply(data)
            y = (x @ rng.standard_normal(5) + 0.5 * rng.standard_normal(60) > 0).astype(float)
            y[:2] = [0, 1]
            model, _ = train_logreg(x, y, epochs=100, lr=0.5 - 0.02 * trial)
            assert np.all(np.diff(model.loss_history) <= 1e-12)

    def test_label_swap_negates_model(self, rng):
        x = rng.standard_normal((40, 3))
        y = (x[:, 0] + 0.3 * rng.standard_normal(40) > 0).astype(float)
        model, accuracy = train_logreg(x, y, epochs=300)
        swapped, swapped_accuracy = train_logreg(x, 1.0 - y, epochs=300)
        assert np.allclose(swapped.weights, -model.weights, atol=1e-9)
        assert swapped.bias == pytest.approx(-model.bias, abs=1e-9)
        assert swapped_accuracy == accuracy

    @pytest.mark.parametrize("labels", [[0, 0, 0], [1, 1, 1], [0, 2, 1]])
    def test_rejects_bad_labels(self, labels):
        with pytest.raises(ValueError):
            train_logreg(np.arange(3.0), labels)


class TestLinearSvm:
    def test_two_points(self):
        model, accuracy = train_linsvm([[-1.0], [1.0]], [0, 1])
        assert accuracy == 1.0
        assert model.weights[0] > 0

    def test_label_swap_negates_weights(self, rng):
        x = rng.standard_normal((30, 4))
        y = (x[:, 1] > 0).astype(float)
        model, accuracy = train_linsvm(x, y, epochs=500)
        swapped, swapped_accuracy = train_linsvm(x, 1.0 - y, epochs=500)
        assert np.allclose(swapped.weights, -model.weights, atol=1e-12)
        assert swapped_accuracy == accuracy

    def test_subgradient_matches_finite_differences(self, rng):
        h = 1e-6
        for _ in range(10):
            x = rng.standard_normal((20, 3))
            y = (rng.random(20) > 0.5).astype(float)
            w = rng.standard_normal(3)
            b = float(rng.standard_normal())
            margins = (2 * y - 1) * (x @ w + b)
            if np.min(np.abs(margins - 1.0)) < 1e-3:
                continue
            grad_w, grad_b = hinge_subgradient(w, b, x, y, 0.1)
            for j in range(3):
                step = np.eye(3)[j] * h
                numeric = (
                    hinge_objective(w + step, b, x, y, 0.1) - hinge_objective(w - step, b, x, y, 0.1)
                ) / (2 * h)
                assert grad_w[j] == pytest.approx(numeric, abs=1e-6)
            numeric_b = (hinge_objective(w, b + h, x, y, 0.1) - hinge_objective(w, b - h, x, y, 0.1)) / (2 * h)
            assert grad_b == pytest.approx(numeric_b, abs=1e-6)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            train_linsvm([[0.0], [1.0]], [1, 1])


class TestKMeans:
    def test_repeated_points(self):
        data = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]])
        result = kmeans(data, 2, seed=3)
        assert sorted(map(tuple, result.centroids)) == [(0.0, 0.0), (5.0, 5.0)]
        assert result.inertia == 0.0

    def test_single_cluster_is_mean(self, rng):
        data = rng.standard_normal((30, 3))
        result = kmeans(data, 1)
        assert np.allclose(result.centroids[0], data.mean(axis=0))
        assert result.inertia == pytest.approx(data.var(axis=0).sum() * 30)

    def test_separated_blobs(self, rng):
        for seed in range(10):
            data = np.vstack([rng.standard_normal((25, 2)), rng.standard_normal((25, 2)) + 10.0])
            result = kmeans(data, 2, seed=seed)
            first, second = result.assignments[:25], result.assignments[25:]
            assert len(set(first)) == 1 and len(set(second)) == 1
            assert first[0] != second[0]

    def test_inertia_never_increases(self, rng):
        data = rng.standard_normal((200, 4))
        result = kmeans(data, 5, seed=1)
        assert np.all(np.diff(result.inertia_history) <= 1e-9)
        assert result.inertia == pytest.approx(result.inertia_history[-1])

    def test_deterministic(self, rng):
        data = rng.standard_normal((60, 3))
        first, second = kmeans(data, 3, seed=8), kmeans(data, 3, seed=8)
        assert np.array_equal(first.assignments, second.assignments)
        assert np.array_equal(first.centroids, second.centroids)

    @pytest.mark.parametrize("k", [0, 4])
    def test_bad_k(self, k):
        with pytest.raises(ValueError):
            kmeans(np.zeros((3, 2)), k)


def test_top_populated_column():
    profiles = np.array([[1.0, 2.0, 0.0, 0.0], [1.0, 0.0, 3.0, 0.0]])
    assert top_populated_column(profiles) == 2


def test_top_frequency_clusters_mirror_kmeans():
    profiles = np.array([[9.0, 0.0], [9.0, 0.0], [9.0, 20.0], [9.0, 20.0]])
    result = cluster_by_top_frequency(profiles, k=2)
    assert result.feature_index == 1
    assert result.inertia == 0.0
    assert result.assignments.tolist() == [0, 0, 1, 1]
    assert np.allclose(result.profile_means, [[9.0, 0.0], [9.0, 20.0]])


def test_top_frequency_recovers_noise_modes(tmp_path):
    manifest = synth_corpus("bimodal-noise", 200, 16, 2024, str(tmp_path), workers=4)
    _, images = load_corpus(str(tmp_path / "manifest.json"))
    profiles = profile_matrix(batch_profiles(images, workers=4))
    result = cluster_by_top_frequency(profiles, k=2, seed=0)
    modes = np.array([entry.mode for entry in manifest.entries])
    assert np.mean(result.assignments == modes) >= 0.95
    column = result.feature_index
    assert result.profile_means[1, column] >= 10 * result.profile_means[0, column]


def test_model_artifact(tmp_path, rng):
    x = rng.standard_normal((20, 3))
    y = (x[:, 0] > 0).astype(float)
    standardizer = fit_standardizer(x)
    model, _ = train_linsvm(standardizer.apply(x), y, epochs=50)
    path = str(tmp_path / "model.json")
    save_model(path, model, standardizer)
    loaded, loaded_standardizer = load_model(path)
    assert loaded.kind == "linsvm"
    assert np.array_equal(loaded.weights, model.weights)
    assert np.array_equal(loaded_standardizer.std, standardizer.std)
    with open(path, encoding="utf-8") as f:
        assert json.load(f)["preprocess"] == "log1p+zscore"


def test_invalid_model_artifact(tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{"kind": "tree"}')
    with pytest.raises(DataError):
        load_model(str(path))


def test_model_artifact_with_mismatched_sizes(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(
        json.dumps(
            {
                "kind": "logreg",
                "weights": [1.0, 2.0],
                "bias": 0.0,
                "standardizer": {"mean": [0.0], "std": [1.0]},
            }
        )
    )
    with pytest.raises(DataError):
        load_model(str(path))
