"""
Up-sampling operators and a numerical check of the spectral replicas they create.

For a length-N signal a with DFT A, the factor-2 "bed of nails" signal
u = (a_0, 0, a_1, 0, ...) has the 2N-point DFT

    U(k) = sum_j exp(-2 pi i (2 j) k / (2 N)) a_j = A(k mod N),

so the upper half of its spectrum is an exact copy of the base band. Writing
u as a times a Dirac comb and applying the convolution theorem to a periodic a
gives the same replicas with an extra 1/2 factor from the comb normalization;
the direct identity above has no such factor and is what gets verified here.
Nearest-neighbour up-sampling adds the shifted copy b_j = a_j at odd positions,
which multiplies the replica by (1 + exp(-pi i k / N)).

.. moduleauthor:: Team Indigo
"""

import logging
from dataclasses import dataclass, field
from typing import List, Literal

import numpy as np

from specfid.imagecore import Image
from specfid.spectrum import direct_dft1d, dft2

logger = logging.getLogger(__name__)

UpsampleMethod = Literal["bed-of-nails", "nearest", "bilinear"]


@dataclass(frozen=True)
class Signal1D:
    """Finite real 1D signal."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size < 1:
            raise ValueError("A signal needs at least one sample")
        if not np.all(np.isfinite(values)):
            raise ValueError("Signal contains non-finite values")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass
class ReplicaReport:
    """Outcome of :func:`verify_replica`.

    ``max_abs_err`` compares the bed-of-nails spectrum with the periodic base
    band; ``nearest_max_abs_err`` compares the nearest-neighbour spectrum with
    its closed form. ``scale`` is max |A| and sets the relative tolerance.
    """

    max_abs_err: float
    nearest_max_abs_err: float
    scale: float
    replica_positions: List[int] = field(default_factory=list)

    def holds(self, rtol: float = 1e-9) -> bool:
        bound = rtol * max(self.scale, 1.0)
        return self.max_abs_err <= bound and self.nearest_max_abs_err <= 2 * bound


def _upsample_axis(values: np.ndarray, method: str, axis: int) -> np.ndarray:
    values = np.moveaxis(values, axis, -1)
    shape = values.shape[:-1] + (2 * values.shape[-1],)
    up = np.zeros(shape)
    up[..., 0::2] = values
    if method == "nearest":
        up[..., 1::2] = values
    elif method == "bilinear":
        up[..., 1::2] = values
        # each inserted sample becomes the mean of itself and its two neighbours
        right = np.roll(up, -1, axis=-1)
        up[..., 1::2] = (up[..., 0::2] + up[..., 1::2] + right[..., 1::2]) / 3.0
    elif method != "bed-of-nails":
        raise ValueError(f"Unknown up-sampling method {method!r}")
    return np.moveaxis(up, -1, axis)


def upsample1d(sig: Signal1D, method: UpsampleMethod = "bed-of-nails") -> Signal1D:
    """Double a signal's length.

    Even indices carry a_j; odd indices carry 0 (bed-of-nails), a_j (nearest) or
    (2 a_j + a_{j+1}) / 3 with periodic wrap (bilinear).

    :param sig: Input signal
    :type sig: Signal1D
    :param method: ``bed-of-nails``, ``nearest`` or ``bilinear``
    :type method: str
    :return: Signal of length 2N
    :rtype: Signal1D
    """
    return Signal1D(_upsample_axis(sig.values, method, axis=0))


def upsample2d(image: Image, method: UpsampleMethod = "bed-of-nails", factor: int = 2) -> Image:
    """Separable factor-2 up-sampling of an image along both axes.

    :param image: Input image
    :type image: Image
    :param method: ``bed-of-nails``, ``nearest`` or ``bilinear``
    :type method: str
    :param factor: Must be 2
    :type factor: int
    :return: Image with doubled height and width
    :rtype: Image
    :raises ValueError: For any factor other than 2
    """
    if factor != 2:
        raise ValueError(f"Only factor 2 is supported, got {factor}")
    up = _upsample_axis(image.pixels, method, axis=0)
    return Image(_upsample_axis(up, method, axis=1))


def verify_replica(sig: Signal1D) -> ReplicaReport:
    """Compare the 2N-point spectra of up-sampled signals with the base band.

    :param sig: Signal with N >= 2
    :type sig: Signal1D
    :return: Maximum deviations and the positions of the replicated band
    :rtype: ReplicaReport
    :raises ValueError: If the signal is shorter than 2 samples
    """
    n = len(sig)
    if n < 2:
        raise ValueError("Replica check needs N >= 2")
    base = direct_dft1d(sig.values)
    k = np.arange(2 * n)
    periodic = base[k % n]

    nails = direct_dft1d(upsample1d(sig, "bed-of-nails").values)
    nearest = direct_dft1d(upsample1d(sig, "nearest").values)
    nearest_expected = (1.0 + np.exp(-1j * np.pi * k / n)) * periodic

    report = ReplicaReport(
        max_abs_err=float(np.max(np.abs(nails - periodic))),
        nearest_max_abs_err=float(np.max(np.abs(nearest - nearest_expected))),
        scale=float(np.max(np.abs(base))),
        replica_positions=list(range(n, 2 * n)),
    )
    logger.debug("Replica check N=%d: %s", n, report)
    return report


def verify_replica_2d(image: Image) -> float:
    """Maximum deviation of the bed-of-nails 2D spectrum from the periodic base band.

    :param image: Source image of size M x N
    :type image: Image
    :return: max |U(k, l) - F(k mod M, l mod N)| over the 2M x 2N grid
    :rtype: float
    """
    m, n = image.pixels.shape
    base = dft2(image, method="direct").values
    up = dft2(upsample2d(image, "bed-of-nails"), method="direct").values
    rows = np.arange(2 * m) % m
    cols = np.arange(2 * n) % n
    return float(np.max(np.abs(up - base[np.ix_(rows, cols)])))


def replica_band_ratio(values: np.ndarray) -> float:
    """Fraction of a signal's power above the Nyquist frequency of its half-rate source.

    For a 2N-sample signal this is the power at DFT indices whose circular
    distance from DC exceeds N / 2, the band filled by replicas.
    """
    length = values.size
    power = np.abs(direct_dft1d(values)) ** 2
    k = np.arange(length)
    distance = np.minimum(k, length - k)
    total = power.sum()
    return float(power[distance > length / 4].sum() / total) if total > 0 else 0.0


def upsample_demo_rows(sig: Signal1D) -> List[List[float]]:
    """Spectrum magnitudes of a signal and its three up-sampled versions.

    :param sig: Base signal of length N
    :type sig: Signal1D
    :return: Rows ``(k, |A(k mod N)|, |U_nails(k)|, |U_nearest(k)|, |U_bilinear(k)|)``
        for k = 0 .. 2N - 1
    :rtype: list[list[float]]
    """
    n = len(sig)
    base = np.abs(direct_dft1d(sig.values))
    columns = [np.abs(direct_dft1d(_upsample_axis(sig.values, method, axis=0)))
               for method in ("bed-of-nails", "nearest", "bilinear")]
    return [
        [float(k), float(base[k % n])] + [float(col[k]) for col in columns]
        for k in range(2 * n)
    ]
