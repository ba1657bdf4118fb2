"""
Image representation, file IO, deterministic synthetic corpora and corpus manifests.

Every spectral quantity in the toolkit is defined on a single grayscale channel
with pixel values in [0, 1]; colour inputs are reduced with the BT.601 luminance
weights when they are loaded.

.. moduleauthor:: Team Indigo

Classes
-------
Image
    Validated H x W grayscale pixel grid.
ManifestEntry, CorpusManifest
    Pydantic models for the JSON corpus manifest.

Functions
---------
load_image
    Read a PNG or binary PGM file into an Image.
save_image
    Write an Image as an 8-bit PNG or PGM file.
synth_corpus
    Generate a reproducible synthetic corpus and its manifest.
load_manifest, load_corpus
    Read a manifest and the images it references.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError
from pydantic import BaseModel, Field, ValidationError

from specfid.config import BIMODAL_AMPLITUDES, LUMA_WEIGHTS, MANIFEST_NAME, SYNTH_KINDS
from specfid.errors import DataError, ImageError

logger = logging.getLogger(__name__)

Label = Literal["real", "generated"]
SynthKind = Literal["gauss-texture", "checker", "blobs", "bimodal-noise"]

_SUPPORTED_FORMATS = ("PNG", "PPM")
_SUPPORTED_MODES = ("1", "L", "LA", "P", "RGB", "RGBA")


@dataclass(frozen=True)
class Image:
    """Grayscale image with row-major pixels in [0, 1].

    Non-finite pixels are rejected; finite values outside [0, 1] are clamped.
    """

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=np.float64)
        if pixels.ndim != 2:
            raise ImageError(f"Expected a 2D pixel grid, got shape {pixels.shape}")
        if pixels.size == 0:
            raise ImageError("Image has zero size")
        if not np.all(np.isfinite(pixels)):
            raise ImageError("Image contains non-finite pixel values")
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            logger.warning("Clamping pixel values outside [0, 1]")
            pixels = np.clip(pixels, 0.0, 1.0)
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


class ManifestEntry(BaseModel):
    """One image of a corpus.

    :param path: Image path, relative to the manifest's directory
    :type path: str
    :param label: Class of the image
    :type label: str
    :param mode: Generating amplitude mode, only set for bimodal-noise corpora
    :type mode: int | None
    """

    path: str
    label: Label
    mode: Optional[int] = None


class CorpusManifest(BaseModel):
    """JSON manifest describing a corpus of equally sized images."""

    seed: int = Field(ge=0, lt=2**64)
    kind: str
    size: int = Field(gt=0)
    entries: List[ManifestEntry]

    def save(self, path: str) -> None:
        """Write the manifest as JSON.

        :param path: Destination file
        :type path: str
        """
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.model_dump_json(indent=2, exclude_none=True))
            f.write("\n")


def _luminance(rgb: np.ndarray) -> np.ndarray:
    wr, wg, wb = LUMA_WEIGHTS
    return wr * rgb[..., 0] + wg * rgb[..., 1] + wb * rgb[..., 2]


def load_image(path: str) -> Image:
    """Load a PNG or binary PGM file as a grayscale Image.

    Colour images are reduced to luminance with 0.299 R + 0.587 G + 0.114 B and
    8-bit values are scaled to [0, 1].

    :param path: Path to the image file
    :type path: str
    :return: The loaded image
    :rtype: Image
    :raises ImageError: If the file is unreadable, in an unsupported format or empty
    """
    try:
        with PILImage.open(path) as raster:
            raster.load()
            fmt = raster.format
            mode = raster.mode
            if fmt not in _SUPPORTED_FORMATS:
                raise ImageError(f"Unsupported image format {fmt} in {path}")
            if mode not in _SUPPORTED_MODES:
                raise ImageError(f"Unsupported pixel mode {mode} in {path}")
            if mode == "1":
                raster = raster.convert("L")
            elif mode == "P":
                raster = raster.convert("RGB")
            data = np.asarray(raster, dtype=np.float64)
    except UnidentifiedImageError as e:
        raise ImageError(f"Unsupported image file {path}: {e}") from e
    except OSError as e:
        raise ImageError(f"Unreadable image file {path}: {e}") from e

    if data.size == 0:
        raise ImageError(f"Zero-sized image {path}")
    if data.ndim == 3:
        # LA and RGBA carry an alpha channel that is ignored
        data = data[..., 0] if data.shape[2] == 2 else _luminance(data[..., :3])
    return Image(data / 255.0)


def save_image(image: Image, path: str) -> None:
    """Save an Image with 8-bit quantization.

    Files ending in ``.pgm`` are written as binary PGM (P5), everything else as PNG.

    :param image: Image to write
    :type image: Image
    :param path: Destination file
    :type path: str
    """
    quantized = np.rint(image.pixels * 255.0).astype(np.uint8)
    fmt = "PPM" if path.lower().endswith(".pgm") else "PNG"
    PILImage.fromarray(quantized).save(path, format=fmt)


def _rng_for(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed ^ index))


def _smooth_field(size: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian low-pass filtered white noise with zero mean and unit deviation."""
    noise = rng.standard_normal((size, size))
    sigma = rng.uniform(0.05, 0.15)
    freqs = np.fft.fftfreq(size)
    fy, fx = np.meshgrid(freqs, freqs, indexing="ij")
    kernel = np.exp(-(fx**2 + fy**2) / (2.0 * sigma**2))
    field = np.real(np.fft.ifft2(np.fft.fft2(noise) * kernel))
    std = field.std()
    return (field - field.mean()) / std if std > 0 else np.zeros_like(field)


def _gauss_texture(size: int, index: int, rng: np.random.Generator) -> Tuple[np.ndarray, None]:
    return np.clip(0.5 + 0.15 * _smooth_field(size, rng), 0.0, 1.0), None


def _checker(size: int, index: int, rng: np.random.Generator) -> Tuple[np.ndarray, None]:
    rows, cols = np.indices((size, size))
    return ((rows + cols + index) % 2).astype(np.float64), None


def _blobs(size: int, index: int, rng: np.random.Generator) -> Tuple[np.ndarray, None]:
    rows, cols = np.indices((size, size))
    canvas = np.zeros((size, size))
    for _ in range(int(rng.integers(3, 8))):
        cy, cx = rng.uniform(0, size, 2)
        sigma = rng.uniform(size / 16.0, size / 4.0)
        amplitude = rng.uniform(0.3, 1.0)
        canvas += amplitude * np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2 * sigma**2))
    return canvas / canvas.max(), None


def _bimodal_noise(size: int, index: int, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    base = 0.5 + 0.1 * _smooth_field(size, rng)
    mode = int(rng.random() < 0.5)
    noise = BIMODAL_AMPLITUDES[mode] * rng.standard_normal((size, size))
    return np.clip(base + noise, 0.0, 1.0), mode


_SYNTHESIZERS = {
    "gauss-texture": _gauss_texture,
    "checker": _checker,
    "blobs": _blobs,
    "bimodal-noise": _bimodal_noise,
}


def synth_corpus(
    kind: str,
    count: int,
    size: int,
    seed: int,
    out_dir: str,
    label: str = "real",
    workers: int = 1,
) -> CorpusManifest:
    """Generate a deterministic synthetic corpus and write its manifest.

    Image ``i`` is drawn from its own generator keyed by ``seed ^ i`` so images can
    be produced in parallel without changing the output.

    :param kind: One of gauss-texture, checker, blobs, bimodal-noise
    :type kind: str
    :param count: Number of images
    :type count: int
    :param size: Edge length, a power of two >= 8
    :type size: int
    :param seed: Unsigned 64-bit seed
    :type seed: int
    :param out_dir: Directory receiving the images and ``manifest.json``
    :type out_dir: str
    :param label: Label written for every entry
    :type label: str
    :param workers: Worker threads used for generation
    :type workers: int
    :return: The manifest that was written
    :rtype: CorpusManifest
    :raises ValueError: On invalid arguments
    :raises DataError: If the directory is not writable
    """
    if kind not in SYNTH_KINDS:
        raise ValueError(f"Unknown corpus kind {kind!r}; expected one of {SYNTH_KINDS}")
    if count < 1:
        raise ValueError("count must be >= 1")
    if size < 8 or size & (size - 1):
        raise ValueError(f"size must be a power of two >= 8, got {size}")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    if label not in ("real", "generated"):
        raise ValueError(f"label must be 'real' or 'generated', got {label!r}")

    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise DataError(f"Cannot create corpus directory {out_dir}: {e}") from e

    synthesize = _SYNTHESIZERS[kind]

    def make(index: int) -> ManifestEntry:
        pixels, mode = synthesize(size, index, _rng_for(seed, index))
        name = f"{index:04d}.png"
        try:
            save_image(Image(pixels), os.path.join(out_dir, name))
        except OSError as e:
            raise DataError(f"Cannot write {name} to {out_dir}: {e}") from e
        return ManifestEntry(path=name, label=label, mode=mode)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        entries = list(pool.map(make, range(count)))

    manifest = CorpusManifest(seed=seed, kind=kind, size=size, entries=entries)
    manifest.save(os.path.join(out_dir, MANIFEST_NAME))
    logger.info("Wrote %d %s images of size %d to %s", count, kind, size, out_dir)
    return manifest


def load_manifest(path: str) -> CorpusManifest:
    """Read and validate a corpus manifest.

    :param path: Path to the manifest JSON file
    :type path: str
    :return: The parsed manifest
    :rtype: CorpusManifest
    :raises DataError: If the file is missing or malformed
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            return CorpusManifest.model_validate(json.load(f))
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise DataError(f"Invalid manifest {path}: {e}") from e


def load_corpus(path: str) -> Tuple[CorpusManifest, List[Image]]:
    """Load a manifest and every image it lists.

    :param path: Path to the manifest JSON file
    :type path: str
    :return: The manifest and the images in entry order
    :rtype: tuple[CorpusManifest, list[Image]]
    :raises DataError: If an image is unreadable or the sizes differ
    """
    manifest = load_manifest(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    images = [load_image(os.path.join(base_dir, entry.path)) for entry in manifest.entries]
    shapes = {image.pixels.shape for image in images}
    if len(shapes) > 1:
        raise DataError(f"Corpus {path} mixes image sizes {sorted(shapes)}")
    return manifest, images
