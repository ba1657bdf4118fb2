"""
Spectral fidelity toolkit.

Measures how distinguishable generated images are from real ones in the
frequency domain: azimuthal-integral profiles, spectral difference, cloaking
score, shallow detectors and profile clustering, plus the up-sampling replica
demonstration and small adversarial models trained with a spectral
discriminator.
"""

try:
    from ._version import version as __version__  # type: ignore
except ImportError:
    __version__ = "0.0.0"
