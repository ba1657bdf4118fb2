"""
Discrete Fourier transforms, power spectra and azimuthal-integral profiles.

The forward transform is the unnormalized DFT

    F(k, l) = sum_m sum_n exp(-2 pi i m k / M) exp(-2 pi i n l / N) I(m, n)

computed row-column with an iterative radix-2 FFT for power-of-two lengths and
by direct summation otherwise. Profiles aggregate the DC-centred power spectrum
over integer radii; an n x n image yields ceil(n / sqrt(2)) + 1 values so that
the corner frequencies beyond the inscribed circle are kept.

.. moduleauthor:: Team Indigo
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Literal, Sequence, Tuple

import numpy as np

from specfid.errors import DataError, ImageError
from specfid.imagecore import Image

logger = logging.getLogger(__name__)

ProfileMode = Literal["binned", "interpolated"]
DftMethod = Literal["auto", "fft", "direct"]


@dataclass(frozen=True)
class Spectrum:
    """Complex frequency grid of an image, DC at index (0, 0)."""

    values: np.ndarray

    @property
    def re(self) -> np.ndarray:
        return self.values.real

    @property
    def im(self) -> np.ndarray:
        return self.values.imag

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SpectralProfile:
    """Radially aggregated power of an n x n image, index = integer radius."""

    values: np.ndarray
    n: int

    def __len__(self) -> int:
        return len(self.values)


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@lru_cache(maxsize=None)
def _bit_reverse_indices(n: int) -> np.ndarray:
    levels = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for bit in range(levels):
        rev |= ((idx >> bit) & 1) << (levels - 1 - bit)
    return rev


def fft1d(x: np.ndarray) -> np.ndarray:
    """Radix-2 decimation-in-time FFT along the last axis.

    :param x: Real or complex array whose last axis has power-of-two length
    :type x: numpy.ndarray
    :return: Unnormalized forward transform
    :rtype: numpy.ndarray
    :raises ValueError: If the last axis length is not a power of two
    """
    n = x.shape[-1]
    if not _is_power_of_two(n):
        raise ValueError(f"radix-2 FFT needs a power-of-two length, got {n}")
    lead = x.shape[:-1]
    a = np.asarray(x, dtype=np.complex128)[..., _bit_reverse_indices(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return a


def direct_dft1d(x: np.ndarray) -> np.ndarray:
    """Direct O(N^2) DFT along the last axis."""
    n = x.shape[-1]
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return np.asarray(x, dtype=np.complex128) @ basis.T


def _dft_along_last(x: np.ndarray, method: DftMethod) -> np.ndarray:
    if method == "fft" or (method == "auto" and _is_power_of_two(x.shape[-1])):
        return fft1d(x)
    return direct_dft1d(x)


def dft2(image: Image, method: DftMethod = "auto") -> Spectrum:
    """Unnormalized 2D DFT of an image, computed row-column.

    :param image: Source image
    :type image: Image
    :param method: ``auto`` uses the radix-2 FFT for power-of-two axes and direct
        summation otherwise; ``fft`` and ``direct`` force one path
    :type method: str
    :return: The image's spectrum
    :rtype: Spectrum
    """
    rows = _dft_along_last(image.pixels, method)
    values = _dft_along_last(rows.T, method).T
    return Spectrum(values)


def direct_dft2(image: Image) -> Spectrum:
    """Brute-force quadruple-sum DFT, used as an oracle for small images."""
    m_size, n_size = image.pixels.shape
    m = np.arange(m_size)
    n = np.arange(n_size)
    row_basis = np.exp(-2j * np.pi * np.outer(m, m) / m_size)
    col_basis = np.exp(-2j * np.pi * np.outer(n, n) / n_size)
    # einsum keeps the sum written exactly as the definition reads
    values = np.einsum("km,ln,mn->kl", row_basis, col_basis, image.pixels)
    return Spectrum(values)


def power_spectrum(spec: Spectrum, shifted: bool = True) -> np.ndarray:
    """Per-bin squared magnitude, with DC moved to (M // 2, N // 2) if shifted.

    :param spec: Spectrum to square
    :type spec: Spectrum
    :param shifted: Whether to centre the DC bin
    :type shifted: bool
    :return: Real power grid
    :rtype: numpy.ndarray
    """
    power = spec.re**2 + spec.im**2
    return np.fft.fftshift(power) if shifted else power


def profile_length(n: int) -> int:
    """Number of profile entries for an n x n image: ceil(n / sqrt(2)) + 1."""
    return math.ceil(n / math.sqrt(2)) + 1


@lru_cache(maxsize=None)
def ring_index(n: int) -> np.ndarray:
    """Rounded distance of every shifted bin from the DC bin at (n // 2, n // 2)."""
    centre = n // 2
    rows, cols = np.indices((n, n))
    rings = np.rint(np.hypot(rows - centre, cols - centre)).astype(np.int64)
    rings.setflags(write=False)
    return rings


def _bilinear(grid: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear samples of grid at (ys, xs); samples outside the grid read as zero."""
    n_rows, n_cols = grid.shape
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    dy = ys - y0
    dx = xs - x0
    out = np.zeros_like(ys, dtype=np.float64)
    for oy, wy in ((0, 1.0 - dy), (1, dy)):
        for ox, wx in ((0, 1.0 - dx), (1, dx)):
            yy = y0 + oy
            xx = x0 + ox
            inside = (yy >= 0) & (yy < n_rows) & (xx >= 0) & (xx < n_cols)
            values = np.zeros_like(out)
            values[inside] = grid[yy[inside], xx[inside]]
            out += wy * wx * values
    return out


def _interpolated_profile(power: np.ndarray, length: int) -> np.ndarray:
    centre = power.shape[0] // 2
    profile = np.zeros(length)
    profile[0] = power[centre, centre]
    for r in range(1, length):
        samples = max(8, math.ceil(2 * math.pi * r))
        phi = 2 * math.pi * np.arange(samples) / samples
        ys = centre + r * np.sin(phi)
        xs = centre + r * np.cos(phi)
        profile[r] = (2 * math.pi * r / samples) * _bilinear(power, ys, xs).sum()
    return profile


def azimuthal_integral(image: Image, mode: ProfileMode = "binned") -> SpectralProfile:
    """Azimuthal integral of the centred power spectrum.

    ``binned`` sums every bin whose distance from DC rounds to r, so the profile
    partitions the total power exactly. ``interpolated`` integrates bilinear
    samples along the circle of radius r.

    :param image: Square image with n >= 2
    :type image: Image
    :param mode: ``binned`` or ``interpolated``
    :type mode: str
    :return: Profile of length ceil(n / sqrt(2)) + 1
    :rtype: SpectralProfile
    :raises ImageError: If the image is not square or smaller than 2 x 2
    :raises ValueError: On an unknown mode
    """
    if image.height != image.width:
        raise ImageError(f"Azimuthal integral needs a square image, got {image.pixels.shape}")
    n = image.height
    if n < 2:
        raise ImageError("Azimuthal integral needs n >= 2")
    power = power_spectrum(dft2(image), shifted=True)
    length = profile_length(n)
    if mode == "binned":
        values = np.bincount(ring_index(n).ravel(), weights=power.ravel(), minlength=length)
    elif mode == "interpolated":
        values = _interpolated_profile(power, length)
    else:
        raise ValueError(f"Unknown profile mode {mode!r}")
    return SpectralProfile(values[:length], n)


def batch_profiles(
    images: Sequence[Image], mode: ProfileMode = "binned", workers: int = 1
) -> List[SpectralProfile]:
    """Profiles of many images, computed on a thread pool in input order."""
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(lambda image: azimuthal_integral(image, mode), images))


def profile_matrix(profiles: Sequence[SpectralProfile]) -> np.ndarray:
    """Stack profiles into a (count, L) matrix, checking equal lengths."""
    if not profiles:
        raise ValueError("At least one profile is required")
    lengths = {len(p) for p in profiles}
    if len(lengths) > 1:
        raise ValueError(f"Profiles have different lengths: {sorted(lengths)}")
    return np.vstack([p.values for p in profiles])


def profile_stats(
    profiles: Sequence[SpectralProfile],
) -> Tuple[SpectralProfile, SpectralProfile]:
    """Per-index mean and population standard deviation of a profile set.

    :param profiles: Non-empty list of equally long profiles
    :type profiles: list[SpectralProfile]
    :return: (mean, std)
    :rtype: tuple[SpectralProfile, SpectralProfile]
    :raises ValueError: If the list is empty or lengths differ
    """
    matrix = profile_matrix(profiles)
    n = profiles[0].n
    return SpectralProfile(matrix.mean(axis=0), n), SpectralProfile(matrix.std(axis=0), n)


def write_profile_csv(path: str, labels: Sequence[str], profiles: np.ndarray) -> None:
    """Write profiles as ``label,r0,...,r{L-1}`` rows.

    Values are written with ``repr`` so a read reproduces them exactly.
    """
    profiles = np.atleast_2d(profiles)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["label"] + [f"r{i}" for i in range(profiles.shape[1])])
        for label, row in zip(labels, profiles):
            writer.writerow([label] + [repr(float(v)) for v in row])


def read_profile_csv(path: str) -> Tuple[List[str], np.ndarray]:
    """Read a profile CSV.

    :param path: CSV written by :func:`write_profile_csv`
    :type path: str
    :return: Labels and a (rows, L) profile matrix
    :rtype: tuple[list[str], numpy.ndarray]
    :raises DataError: On a missing file, bad header, label or value
    """
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataError(f"Cannot read profile CSV {path}: {e}") from e
    if rows and rows[0][:1] == ["stat"]:
        raise DataError(f"{path} holds profile statistics, not profiles")
    if not rows or not rows[0] or rows[0][0] != "label":
        raise DataError(f"{path} is missing the 'label,r0,...' header")
    width = len(rows[0]) - 1
    labels: List[str] = []
    values: List[List[float]] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width + 1:
            raise DataError(f"{path}:{lineno}: expected {width + 1} fields, got {len(row)}")
        if row[0] not in ("real", "generated"):
            raise DataError(f"{path}:{lineno}: unknown label {row[0]!r}")
        try:
            parsed = [float(v) for v in row[1:]]
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: {e}") from e
        if not all(math.isfinite(v) and v >= 0 for v in parsed):
            raise DataError(f"{path}:{lineno}: profile values must be finite and >= 0")
        labels.append(row[0])
        values.append(parsed)
    if not values:
        raise DataError(f"{path} contains no profiles")
    return labels, np.asarray(values)


def write_stats_csv(path: str, mean: np.ndarray, std: np.ndarray) -> None:
    """Write per-radius statistics as ``stat,r0,...,r{L-1}`` with a ``mean`` and a ``std`` row.

    The ``stat`` header keeps these files apart from profile CSVs.
    """
    mean, std = np.ravel(mean), np.ravel(std)
    if mean.size != std.size:
        raise ValueError(f"mean has {mean.size} values, std {std.size}")
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["stat"] + [f"r{i}" for i in range(mean.size)])
        writer.writerow(["mean"] + [repr(float(v)) for v in mean])
        writer.writerow(["std"] + [repr(float(v)) for v in std])


def read_stats_csv(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """Read a file written by :func:`write_stats_csv`.

    :return: (mean, std) vectors
    :rtype: tuple[numpy.ndarray, numpy.ndarray]
    :raises DataError: On a missing file or anything but a header, a mean and a std row
    """
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            rows = [row for row in csv.reader(f) if row]
    except OSError as e:
        raise DataError(f"Cannot read stats CSV {path}: {e}") from e
    if len(rows) != 3 or rows[0][:1] != ["stat"] or [rows[1][0], rows[2][0]] != ["mean", "std"]:
        raise DataError(f"{path} is not a stats CSV (expected stat header, mean and std rows)")
    width = len(rows[0])
    if any(len(row) != width for row in rows[1:]):
        raise DataError(f"{path}: rows differ in length")
    try:
        mean, std = (np.array([float(v) for v in row[1:]]) for row in rows[1:])
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e
    return mean, std
