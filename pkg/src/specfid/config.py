"""
This module contains default hyper-parameters, numeric guards and path settings.
All tunable constants used across the toolkit should be defined here so that the
command line front end and the library agree on a single set of defaults.
"""

import os
from typing import Final, Tuple

# Directory paths
CURRENT_DIR: Final[str] = os.path.dirname(__file__)
RUNS_DIR: Final[str] = os.path.join(os.getcwd(), "runs")
MANIFEST_NAME: Final[str] = "manifest.json"
PROFILE_CACHE_DB: Final[str] = os.path.join(RUNS_DIR, "profile_cache.db")

# Logging
LOG_FORMAT: Final[str] = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Numeric guards
SQRT_EPS: Final[float] = 1e-12
LOG_EPS: Final[float] = 1e-12
STD_FLOOR: Final[float] = 1e-12
LEAKY_SLOPE: Final[float] = 0.2

# Images
SYNTH_KINDS: Final[Tuple[str, ...]] = ("gauss-texture", "checker", "blobs", "bimodal-noise")
BIMODAL_AMPLITUDES: Final[Tuple[float, float]] = (0.02, 0.2)
LUMA_WEIGHTS: Final[Tuple[float, float, float]] = (0.299, 0.587, 0.114)

# Feature preprocessing recorded in every model artifact
PREPROCESS: Final[str] = "log1p+zscore"

# Cloaking score protocol (logistic regression)
CS_EPOCHS: Final[int] = 1000
CS_LR: Final[float] = 0.1
QUICK_CS_EPOCHS: Final[int] = 200

# Linear SVM detector
SVM_EPOCHS: Final[int] = 2000
SVM_LR: Final[float] = 0.01
SVM_REG: Final[float] = 1e-3

# Detection harness
DETECT_SPLIT: Final[float] = 0.8

# k-means
KMEANS_MAX_ITER: Final[int] = 100

# Adversarial training
GAN_LR: Final[float] = 0.0002
GAN_BATCH: Final[int] = 128
ADAM_BETAS: Final[Tuple[float, float]] = (0.5, 0.999)
RMSPROP_ALPHA: Final[float] = 0.99
OPTIM_EPS: Final[float] = 1e-8
GP_LAMBDA: Final[float] = 10.0
WGAN_CLIP: Final[float] = 0.01
LATENT_DIM: Final[int] = 32
HIDDEN_DIM: Final[int] = 128
SAMPLE_COUNT: Final[int] = 16

# Plots
SVG_HASH_SALT: Final[str] = "specfid"
