import logging

import numpy as np
import pytest

from specfid import fidelity
from specfid.errors import DataError
from specfid.fidelity import (
    FidelityReport,
    build_report,
    cloaking_score,
    evaluate_cs,
    evaluate_cs_budgets,
    evaluate_detection,
    evaluate_transfer,
    format_report_table,
    spectral_difference,
)
from specfid.imagecore import Image, load_corpus, synth_corpus
from specfid.spectrum import azimuthal_integral, batch_profiles, profile_matrix


def _noise_profiles(rng, amplitude, count, n=8):
    """Profiles of smooth-free images: mid-grey plus white noise of the given amplitude."""
    images = [Image(0.5 + amplitude * rng.standard_normal((n, n))) for _ in range(count)]
    return profile_matrix([azimuthal_integral(image) for image in images])


@pytest.fixture(scope="module")
def texture_profiles(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("texture")
    synth_corpus("gauss-texture", 2000, 8, 77, str(out_dir), workers=4)
    _, images = load_corpus(str(out_dir / "manifest.json"))
    return profile_matrix(batch_profiles(images, workers=4))


class TestSpectralDifference:
    def test_identical_sets(self, rng):
        profiles = rng.random((10, 7))
        assert spectral_difference(profiles, profiles) == 0.0

    def test_constant_log_shift(self, rng):
        real = rng.random((12, 7)) * 100
        c = 0.3
        generated = np.expm1(np.log1p(real) + c)
        assert spectral_difference(real, generated) == pytest.approx(7 * c, rel=1e-9)

    def test_matches_two_pass(self, rng):
        real, generated = rng.random((15, 9)) * 50, rng.random((8, 9)) * 50
        for scale, transform in (("log1p", np.log1p), ("raw", lambda m: m)):
            real_mean = [sum(transform(real[:, j])) / 15 for j in range(9)]
            gen_mean = [sum(transform(generated[:, j])) / 8 for j in range(9)]
            expected = sum(abs(a - b) for a, b in zip(real_mean, gen_mean))
            assert spectral_difference(real, generated, scale=scale) == pytest.approx(expected, rel=1e-12)

    def test_is_a_metric_on_means(self, rng):
        a, b, c = (rng.random((6, 5)) * 10 for _ in range(3))
        assert spectral_difference(a, b) == pytest.approx(spectral_difference(b, a))
        assert spectral_difference(a, c) <= spectral_difference(a, b) + spectral_difference(b, c) + 1e-12

    def test_rejects_bad_input(self, rng):
        with pytest.raises(DataError):
            spectral_difference(rng.random((3, 4)), rng.random((3, 5)))
        with pytest.raises(ValueError):
            spectral_difference(np.zeros((0, 4)), rng.random((3, 4)))
        with pytest.raises(ValueError):
            spectral_difference(rng.random((3, 4)), rng.random((3, 4)), scale="db")


class TestCloakingScore:
    @pytest.mark.parametrize(
        "accuracy,expected",
        [(0.979, 0.042), (0.989, 0.022), (0.991, 0.018), (0.5, 1.0), (1.0, 0.0), (0.0, 0.0)],
    )
    def test_values(self, accuracy, expected):
        assert cloaking_score(accuracy) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("accuracy", [-0.01, 1.01])
    def test_out_of_range(self, accuracy):
        with pytest.raises(ValueError):
            cloaking_score(accuracy)

    def test_symmetric(self):
        for accuracy in np.linspace(0, 1, 21):
            assert cloaking_score(accuracy) == pytest.approx(cloaking_score(1 - accuracy), abs=1e-12)


class TestEvaluateCs:
    def test_same_corpus_halves_score_high(self, texture_profiles):
        for seed in range(5):
            order = np.random.default_rng(seed).permutation(len(texture_profiles))
            half = len(order) // 2
            result = evaluate_cs(texture_profiles[order[:half]], texture_profiles[order[half:]])
            assert result.cs >= 0.9

    def test_separable_sets_score_low(self, rng):
        real = _noise_profiles(rng, 0.02, 100)
        generated = _noise_profiles(rng, 0.2, 100)
        result = evaluate_cs(real, generated)
        assert result.cs <= 0.05
        assert result.train_accuracy >= 0.975

    def test_deterministic(self, rng):
        real, generated = rng.random((40, 7)), rng.random((30, 7))
        first = evaluate_cs(real, generated, epochs=100, seed=4)
        second = evaluate_cs(real, generated, epochs=100, seed=4)
        assert first == second
        assert first.per_class == 30

    def test_label_swap(self, rng):
        real, generated = rng.random((50, 7)) * 5, rng.random((50, 7)) * 6
        forward = evaluate_cs(real, generated, epochs=200)
        backward = evaluate_cs(generated, real, epochs=200)
        assert forward.cs == pytest.approx(backward.cs, abs=1e-9)

    def test_subsampling_log_level(self, rng, caplog):
        real, generated = rng.random((20, 5)), rng.random((10, 5))

        def levels():
            return [r.levelno for r in caplog.records if r.getMessage().startswith("Sampling")]

        with caplog.at_level(logging.DEBUG, logger="specfid.fidelity"):
            evaluate_cs(real, generated, epochs=10, subsample_expected=True)
            assert levels() == [logging.DEBUG]
            caplog.clear()
            evaluate_cs(real, generated, epochs=10)
            assert levels() == [logging.WARNING]

    def test_budgets_keep_order(self, rng):
        real, generated = rng.random((20, 5)), rng.random((20, 5)) + 0.1
        results = evaluate_cs_budgets(real, generated, [50, 10])
        assert [r.epochs for r in results] == [50, 10]


class TestDetection:
    def test_identical_distributions_near_chance(self, texture_profiles):
        for seed in range(5):
            order = np.random.default_rng(100 + seed).permutation(len(texture_profiles))
            half = len(order) // 2
            result = evaluate_detection(
                texture_profiles[order[:half]], texture_profiles[order[half:]], seed=seed
            )
            assert 0.4 <= result.test_acc <= 0.6
            assert result.n_train == 1600 and result.n_test == 400

    @pytest.mark.parametrize("model", ["lr", "svm"])
    def test_separable_corpora(self, rng, model):
        real = _noise_profiles(rng, 0.02, 100)
        generated = _noise_profiles(rng, 0.2, 100)
        assert evaluate_detection(real, generated, model=model, seed=1).test_acc >= 0.95

    def test_transfer_to_indistinguishable_pair(self, rng):
        train_real = _noise_profiles(rng, 0.02, 100)
        train_gen = _noise_profiles(rng, 0.2, 100)
        eval_real = _noise_profiles(rng, 0.1, 200)
        eval_gen = _noise_profiles(rng, 0.1, 200)
        result = evaluate_transfer(train_real, train_gen, eval_real, eval_gen)
        assert result.train_acc >= 0.95
        assert result.transfer_acc == pytest.approx(0.5, abs=0.1)

    @pytest.mark.parametrize("split", [0.0, 1.0, 1.5])
    def test_bad_split(self, rng, split):
        with pytest.raises(ValueError):
            evaluate_detection(rng.random((10, 4)), rng.random((10, 4)), split=split)

    @pytest.mark.parametrize("count,split", [(2, 0.4), (1, 0.8), (10, 0.95)])
    def test_fold_without_class(self, rng, count, split):
        with pytest.raises(DataError):
            evaluate_detection(rng.random((count, 4)), rng.random((count, 4)), split=split)

    def test_transfer_pair_of_other_length(self, rng):
        with pytest.raises(DataError):
            evaluate_transfer(
                rng.random((10, 4)), rng.random((10, 4)), rng.random((10, 5)), rng.random((10, 5))
            )

    def test_split_is_reproducible(self, rng):
        real, generated = rng.random((30, 4)), rng.random((70, 4)) + 1.0
        first = evaluate_detection(real, generated, split=0.8, seed=3)
        second = evaluate_detection(real, generated, split=0.8, seed=3)
        assert first.n_train == 80 and first.n_test == 20
        assert first.test_acc == second.test_acc
        assert np.array_equal(first.model.weights, second.model.weights)

    def test_folds_keep_class_ratio(self):
        labels = np.array([0.0] * 30 + [1.0] * 70)
        train_idx, test_idx = fidelity._stratified_split(labels, 0.8, 5)
        assert np.intersect1d(train_idx, test_idx).size == 0
        assert np.sum(labels[test_idx] == 0) == 6
        assert np.sum(labels[test_idx] == 1) == 14

    def test_unknown_model(self, rng):
        with pytest.raises(ValueError):
            evaluate_detection(rng.random((10, 4)), rng.random((10, 4)), model="forest")


class TestReport:
    def test_cs_matches_lr_accuracy(self, rng):
        real = _noise_profiles(rng, 0.05, 40)
        generated = _noise_profiles(rng, 0.08, 40)
        report = build_report(real, generated, seed=3)
        assert report.cs == cloaking_score(report.lr.train_acc)
        assert report.n_real == report.n_generated == 40
        assert report.config["preprocess"] == "log1p+zscore"

    def test_inconsistent_report_rejected(self):
        with pytest.raises(ValueError):
            FidelityReport(
                sd=0.0,
                cs=0.5,
                lr={"train_acc": 0.5, "test_acc": 0.5},
                svm={"train_acc": 0.5, "test_acc": 0.5},
                n_real=1,
                n_generated=1,
            )

    def test_table_row_order(self, rng):
        report = build_report(rng.random((20, 5)), rng.random((20, 5)) + 0.5, cs_epochs=50)
        names = [line.split()[0] for line in format_report_table(report).splitlines()]
        assert names == [
            "sd",
            "cs",
            "lr_train_acc",
            "lr_test_acc",
            "svm_train_acc",
            "svm_test_acc",
            "n_real",
            "n_generated",
        ]
