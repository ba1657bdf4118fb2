"""Shared fixtures and numerical helpers for the test suite."""

from typing import Callable, List, Sequence

import numpy as np
import pytest

from specfid.autodiff import Tape, Tensor, grad
from specfid.imagecore import Image

FD_STEP = 1e-5


def rel_err(actual: np.ndarray, expected: np.ndarray) -> float:
    """max |actual - expected| relative to the larger magnitude of the two."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = max(np.max(np.abs(actual)), np.max(np.abs(expected)), 1e-8)
    return float(np.max(np.abs(actual - expected)) / scale)


def finite_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        plus = f(x)
        x[idx] = orig - h
        minus = f(x)
        x[idx] = orig
        out[idx] = (plus - minus) / (2 * h)
    return out


def gradient_error(
    build: Callable[[Tape, List[Tensor]], Tensor], arrays: Sequence[np.ndarray]
) -> float:
    """Largest relative error between tape gradients and finite differences.

    ``build`` receives a fresh tape and one leaf per array and returns a scalar.
    """
    tape = Tape()
    leaves = [tape.leaf(a) for a in arrays]
    analytic = [g.value for g in grad(build(tape, leaves), leaves)]
    worst = 0.0
    for position, array in enumerate(arrays):

        def scalar(perturbed: np.ndarray, position=position) -> float:
            inner = Tape()
            values = [perturbed if i == position else a for i, a in enumerate(arrays)]
            return float(build(inner, [inner.leaf(v) for v in values]).value)

        numeric = finite_difference(scalar, array)
        worst = max(worst, rel_err(analytic[position], numeric))
    return worst


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def random_image(rng) -> Callable[[int], Image]:
    def make(n: int) -> Image:
        return Image(rng.random((n, n)))

    return make
