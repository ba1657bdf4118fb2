"""
Fidelity metrics between a real and a generated image set: Spectral Difference,
Cloaking Score and the LR/SVM detection harness.

All functions take profile sets either as a (samples, L) matrix or as a list of
:class:`~specfid.spectrum.SpectralProfile`.

.. moduleauthor:: Team Indigo

Classes
-------
CsResult, DetectionResult, TransferResult
    Outcomes of the individual evaluations.
FidelityReport
    Pydantic model of the report JSON.

Functions
---------
spectral_difference
    L1 distance between mean profiles.
cloaking_score
    1 - 2 |accuracy - 0.5|.
evaluate_cs, evaluate_cs_budgets
    Cloaking score of a logistic regression trained on all profiles.
evaluate_detection, evaluate_transfer
    Held-out and transfer accuracies of LR/SVM detectors.
build_report, format_report_table
    Full report and its fixed-order text rendering.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from sklearn.model_selection import train_test_split

from specfid.config import CS_EPOCHS, CS_LR, DETECT_SPLIT, PREPROCESS
from specfid.errors import DataError
from specfid.linmodels import (
    LinearModel,
    Standardizer,
    fit_standardizer,
    preprocess,
    train_linsvm,
    train_logreg,
)
from specfid.spectrum import SpectralProfile, profile_matrix

logger = logging.getLogger(__name__)

ProfileSet = Union[np.ndarray, Sequence[SpectralProfile]]
SdScale = Literal["log1p", "raw"]
DetectorKind = Literal["lr", "svm"]


def as_profile_matrix(profiles: ProfileSet) -> np.ndarray:
    """Coerce a profile set to a non-empty (samples, L) float matrix."""
    if isinstance(profiles, np.ndarray):
        matrix = np.atleast_2d(np.asarray(profiles, dtype=np.float64))
        if matrix.ndim != 2 or matrix.shape[0] == 0 or matrix.shape[1] == 0:
            raise ValueError("A profile set must be a non-empty (samples, L) matrix")
        return matrix
    return profile_matrix(list(profiles))


def _pair(real: ProfileSet, gen: ProfileSet) -> Tuple[np.ndarray, np.ndarray]:
    real_m = as_profile_matrix(real)
    gen_m = as_profile_matrix(gen)
    if real_m.shape[1] != gen_m.shape[1]:
        raise DataError(
            f"Profile length mismatch: real {real_m.shape[1]}, generated {gen_m.shape[1]}"
        )
    return real_m, gen_m


def spectral_difference(real: ProfileSet, gen: ProfileSet, scale: SdScale = "log1p") -> float:
    """Sum over radii of |mean real profile - mean generated profile|.

    :param real: Real profiles
    :type real: numpy.ndarray | list[SpectralProfile]
    :param gen: Generated profiles
    :type gen: numpy.ndarray | list[SpectralProfile]
    :param scale: ``log1p`` compares log1p-scaled profiles, ``raw`` the linear power
    :type scale: str
    :return: Non-negative spectral difference
    :rtype: float
    :raises ValueError: On empty sets or an unknown scale
    :raises DataError: If the two sets have different profile lengths
    """
    real_m, gen_m = _pair(real, gen)
    if scale == "log1p":
        real_m, gen_m = np.log1p(real_m), np.log1p(gen_m)
    elif scale != "raw":
        raise ValueError(f"Unknown SD scale {scale!r}")
    return float(np.sum(np.abs(real_m.mean(axis=0) - gen_m.mean(axis=0))))


def cloaking_score(accuracy: float) -> float:
    """Map a real-vs-generated training accuracy to 1 - 2 |accuracy - 0.5|.

    :param accuracy: Training accuracy in [0, 1]
    :type accuracy: float
    :return: Score in [0, 1]; 1 means the sets are linearly indistinguishable
    :rtype: float
    :raises ValueError: If accuracy is outside [0, 1]
    """
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"Accuracy must be in [0, 1], got {accuracy}")
    return min(1.0, max(0.0, 1.0 - 2.0 * abs(accuracy - 0.5)))


def _labelled(real_m: np.ndarray, gen_m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    features = np.vstack([real_m, gen_m])
    labels = np.concatenate([np.zeros(len(real_m)), np.ones(len(gen_m))])
    return features, labels


def _corresponding(
    real_m: np.ndarray, gen_m: np.ndarray, seed: int, expected: bool
) -> Tuple[np.ndarray, np.ndarray]:
    if len(real_m) == len(gen_m):
        return real_m, gen_m
    count = min(len(real_m), len(gen_m))
    logger.log(
        logging.DEBUG if expected else logging.WARNING,

        "Sampling %d of %d real and %d generated profiles", count, len(real_m), len(gen_m)
    )
    rng = np.random.default_rng(seed)
    real_idx = np.sort(rng.choice(len(real_m), count, replace=False))
    gen_idx = np.sort(rng.choice(len(gen_m), count, replace=False))
    return real_m[real_idx], gen_m[gen_idx]


@dataclass
class CsResult:
    cs: float
    train_accuracy: float
    epochs: int
    per_class: int


def evaluate_cs(
    real: ProfileSet,
    gen: ProfileSet,
    epochs: int = CS_EPOCHS,
    lr: float = CS_LR,
    seed: int = 0,
    subsample_expected: bool = False,
) -> CsResult:
    """Cloaking score of a logistic regression trained on every profile.

    When the sets differ in size, ``min(n_real, n_generated)`` profiles are drawn
    from each side with ``seed``. Features are log1p profiles standardized over
    the whole training set, and the training accuracy feeds the score.

    :param real: Real profiles
    :type real: numpy.ndarray | list[SpectralProfile]
    :param gen: Generated profiles
    :type gen: numpy.ndarray | list[SpectralProfile]
    :param epochs: Full-batch gradient steps
    :type epochs: int
    :param lr: Step size
    :type lr: float
    :param seed: Seed of the subsampling
    :type seed: int
    :param subsample_expected: Log the subsampling at DEBUG instead of WARNING
    :type subsample_expected: bool
    :return: Score, accuracy and protocol details
    :rtype: CsResult
    """
    real_m, gen_m = _corresponding(*_pair(real, gen), seed, subsample_expected)
    features, labels = _labelled(preprocess(real_m), preprocess(gen_m))
    standardized = fit_standardizer(features).apply(features)
    _, accuracy = train_logreg(standardized, labels, epochs=epochs, lr=lr, seed=seed)
    result = CsResult(cloaking_score(accuracy), accuracy, epochs, len(real_m))
    logger.debug("CS %.4f from accuracy %.4f after %d epochs", result.cs, accuracy, epochs)
    return result


def evaluate_cs_budgets(
    real: ProfileSet,
    gen: ProfileSet,
    budgets: Sequence[int],
    lr: float = CS_LR,
    seed: int = 0,
) -> List[CsResult]:
    """:func:`evaluate_cs` at several epoch budgets, in the given order."""
    return [evaluate_cs(real, gen, epochs=epochs, lr=lr, seed=seed) for epochs in budgets]


@dataclass
class DetectionResult:
    """Train- and held-out accuracy of one detector on a stratified split."""

    train_acc: float
    test_acc: float
    model: LinearModel
    standardizer: Standardizer
    n_train: int
    n_test: int


def _stratified_split(
    labels: np.ndarray, split: float, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    try:
        train_idx, test_idx = train_test_split(
            np.arange(len(labels)), train_size=split, stratify=labels, random_state=seed
        )
    except ValueError as e:
        raise DataError(f"Split {split} cannot be stratified: {e}") from e
    for cls in (0, 1):
        for name, fold in (("train", train_idx), ("test", test_idx)):
            if not np.any(labels[fold] == cls):
                raise DataError(f"Split {split} leaves the {name} fold without class {cls}")
    return np.sort(train_idx), np.sort(test_idx)


def _fit_detector(
    features: np.ndarray, labels: np.ndarray, model: DetectorKind, seed: int
) -> Tuple[LinearModel, Standardizer, float]:
    standardizer = fit_standardizer(features)
    standardized = standardizer.apply(features)
    if model == "lr":
        fitted, accuracy = train_logreg(standardized, labels, seed=seed)
    elif model == "svm":
        fitted, accuracy = train_linsvm(standardized, labels, seed=seed)
    else:
        raise ValueError(f"Unknown detector {model!r}")
    return fitted, standardizer, accuracy


def evaluate_detection(
    real: ProfileSet,
    gen: ProfileSet,
    split: float = DETECT_SPLIT,
    model: DetectorKind = "lr",
    seed: int = 0,
) -> DetectionResult:
    """Train a detector on a shuffled stratified split and test on the rest.

    :param real: Real profiles, label 0
    :type real: numpy.ndarray | list[SpectralProfile]
    :param gen: Generated profiles, label 1
    :type gen: numpy.ndarray | list[SpectralProfile]
    :param split: Fraction of each class used for training, in (0, 1)
    :type split: float
    :param model: ``lr`` or ``svm``
    :type model: str
    :param seed: Seed of the shuffle
    :type seed: int
    :return: Accuracies and the fitted detector
    :rtype: DetectionResult
    :raises ValueError: If split is outside (0, 1) or the model is unknown
    :raises DataError: If the profile lengths differ or the split leaves a fold without a class
    """
    if not 0.0 < split < 1.0:
        raise ValueError(f"split must be in (0, 1), got {split}")
    features, labels = _labelled(*(preprocess(m) for m in _pair(real, gen)))
    train_idx, test_idx = _stratified_split(labels, split, seed)
    fitted, standardizer, train_acc = _fit_detector(
        features[train_idx], labels[train_idx], model, seed
    )
    test_acc = fitted.accuracy(standardizer.apply(features[test_idx]), labels[test_idx])
    logger.debug("%s detector: train %.4f, test %.4f", model, train_acc, test_acc)
    return DetectionResult(train_acc, test_acc, fitted, standardizer, len(train_idx), len(test_idx))


@dataclass
class TransferResult:
    train_acc: float
    transfer_acc: float


def evaluate_transfer(
    train_real: ProfileSet,
    train_gen: ProfileSet,
    eval_real: ProfileSet,
    eval_gen: ProfileSet,
    model: DetectorKind = "lr",
    seed: int = 0,
) -> TransferResult:
    """Train a detector on one real/generated pair and score it on another.

    The evaluation pair is standardized with the statistics of the training pair.

    :return: Accuracy on the training pair and on the evaluation pair
    :rtype: TransferResult
    """
    features, labels = _labelled(*(preprocess(m) for m in _pair(train_real, train_gen)))
    fitted, standardizer, train_acc = _fit_detector(features, labels, model, seed)
    eval_real_m, eval_gen_m = _pair(eval_real, eval_gen)
    if eval_real_m.shape[1] != features.shape[1]:
        raise DataError("Transfer pairs have different profile lengths")
    eval_features, eval_labels = _labelled(preprocess(eval_real_m), preprocess(eval_gen_m))
    transfer_acc = fitted.accuracy(standardizer.apply(eval_features), eval_labels)
    return TransferResult(train_acc, transfer_acc)


class Accuracies(BaseModel):
    train_acc: float = Field(ge=0.0, le=1.0)
    test_acc: float = Field(ge=0.0, le=1.0)


class FidelityReport(BaseModel):
    """Report JSON of a real/generated comparison.

    ``lr.train_acc`` is the cloaking-score training accuracy over all profiles,
    so ``cs`` always equals ``1 - 2 |lr.train_acc - 0.5|``; ``lr.test_acc`` comes
    from the held-out split.
    """

    sd: float = Field(ge=0.0)
    cs: float = Field(ge=0.0, le=1.0)
    lr: Accuracies
    svm: Accuracies
    n_real: int = Field(ge=1)
    n_generated: int = Field(ge=1)
    config: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _cs_matches_accuracy(self) -> "FidelityReport":
        if abs(self.cs - cloaking_score(self.lr.train_acc)) > 1e-12:
            raise ValueError("cs does not match the logistic-regression training accuracy")
        return self


def build_report(
    real: ProfileSet,
    gen: ProfileSet,
    seed: int = 0,
    split: float = DETECT_SPLIT,
    sd_scale: SdScale = "log1p",
    cs_epochs: int = CS_EPOCHS,
    cs_lr: float = CS_LR,
) -> FidelityReport:
    """SD, CS and both detectors' accuracies for one real/generated pair.

    :return: The full report, with its configuration echoed
    :rtype: FidelityReport
    """
    real_m, gen_m = _pair(real, gen)
    cs = evaluate_cs(real_m, gen_m, epochs=cs_epochs, lr=cs_lr, seed=seed)
    lr_detect = evaluate_detection(real_m, gen_m, split=split, model="lr", seed=seed)
    svm_detect = evaluate_detection(real_m, gen_m, split=split, model="svm", seed=seed)
    return FidelityReport(
        sd=spectral_difference(real_m, gen_m, scale=sd_scale),
        cs=cs.cs,
        lr=Accuracies(train_acc=cs.train_accuracy, test_acc=lr_detect.test_acc),
        svm=Accuracies(train_acc=svm_detect.train_acc, test_acc=svm_detect.test_acc),
        n_real=len(real_m),
        n_generated=len(gen_m),
        config={
            "seed": seed,
            "split": split,
            "sd_scale": sd_scale,
            "cs_epochs": cs_epochs,
            "cs_lr": cs_lr,
            "preprocess": PREPROCESS,
        },
    )


def format_report_table(report: FidelityReport) -> str:
    """Two-column text table in a fixed row order."""
    rows = [
        ("sd", f"{report.sd:.6f}"),
        ("cs", f"{report.cs:.6f}"),
        ("lr_train_acc", f"{report.lr.train_acc:.6f}"),
        ("lr_test_acc", f"{report.lr.test_acc:.6f}"),
        ("svm_train_acc", f"{report.svm.train_acc:.6f}"),
        ("svm_test_acc", f"{report.svm.test_acc:.6f}"),
        ("n_real", str(report.n_real)),
        ("n_generated", str(report.n_generated)),
    ]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)
