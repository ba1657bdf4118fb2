"""
Desk-scale adversarial training with a spatial discriminator and a spectral
discriminator.

Generator and spatial discriminator are small multilayer perceptrons standing
in for convolutional networks; the loss and discriminator math is the same. The
spectral discriminator is a fixed DFT, a fixed ring-binning matrix and one
trainable affine layer over the resulting profile, so it adds exactly
``ceil(n / sqrt(2)) + 1`` parameters. It is implemented with the autodiff
primitives, so its gradient reaches the generator's pixels.

Generator output lives in (-1, 1). Both discriminators see real and fake images
on the same scale: the spatial one in [-1, 1], the spectral one mapped back to
[0, 1] so its profiles are comparable with corpus profiles.

Random draws come from three independent streams spawned from the run seed:
``main`` for the generator, the spatial discriminator, shuffling, latent codes and
its gradient-penalty mixing, ``spectral`` for everything the spectral
discriminator draws, and ``eval`` for the fixed evaluation batch. Turning the
spectral discriminator off therefore leaves the other draws unchanged.

.. moduleauthor:: Team Indigo
"""

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from specfid import autodiff as ad
from specfid.autodiff import Tape, Tensor
from specfid.config import (
    ADAM_BETAS,
    CS_EPOCHS,
    GAN_BATCH,
    GAN_LR,
    GP_LAMBDA,
    HIDDEN_DIM,
    LATENT_DIM,
    OPTIM_EPS,
    QUICK_CS_EPOCHS,
    RMSPROP_ALPHA,
    SAMPLE_COUNT,
    WGAN_CLIP,
)
from specfid.errors import DataError, NumericError
from specfid.fidelity import FidelityReport, build_report, evaluate_cs, spectral_difference
from specfid.imagecore import Image, save_image
from specfid.spectrum import batch_profiles, profile_length, profile_matrix, ring_index

logger = logging.getLogger(__name__)

LossKind = Literal["dcgan", "lsgan", "wgan", "wgan-gp"]
DfScale = Literal["log1p", "raw"]
Activation = Literal["relu", "leaky_relu", "tanh", "sigmoid", "none"]

EVAL_BATCH_CAP = 512

_ACTIVATIONS = {
    "relu": ad.relu,
    "leaky_relu": ad.leaky_relu,
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "none": lambda x: x,
}


def uses_sigmoid(kind: LossKind) -> bool:
    """WGAN critics output raw scores; the other losses expect probabilities."""
    return kind in ("dcgan", "lsgan")


@dataclass
class MlpNet:
    """Fully connected network ``sizes[0] -> ... -> sizes[-1]``.

    ``params`` alternates (in, out) weight matrices and (out,) biases. Hidden
    layers use ``hidden``; the last layer uses ``output``.
    """

    sizes: Tuple[int, ...]
    params: List[np.ndarray]
    hidden: Activation = "leaky_relu"
    output: Activation = "none"

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise ValueError("An MLP needs at least an input and an output size")
        if len(self.params) != 2 * (len(self.sizes) - 1):
            raise ValueError(f"Expected {2 * (len(self.sizes) - 1)} parameter arrays")
        for layer, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            weight, bias = self.params[2 * layer], self.params[2 * layer + 1]
            if weight.shape != (n_in, n_out) or bias.shape != (n_out,):
                raise ValueError(
                    f"Layer {layer}: got {weight.shape} and {bias.shape}, "
                    f"expected {(n_in, n_out)} and {(n_out,)}"
                )
        if not all(np.all(np.isfinite(p)) for p in self.params):
            raise NumericError("MLP parameters must be finite")

    @classmethod
    def init(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        hidden: Activation = "leaky_relu",
        output: Activation = "none",
    ) -> "MlpNet":
        """Gaussian weights with deviation 1 / sqrt(fan_in), zero biases."""
        params: List[np.ndarray] = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            params.append(rng.standard_normal((n_in, n_out)) / math.sqrt(n_in))
            params.append(np.zeros(n_out))
        return cls(tuple(sizes), params, hidden, output)

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params))

    def bind(self, tape: Tape) -> List[Tensor]:
        """Record the parameters as leaves of ``tape``."""
        return [tape.leaf(p) for p in self.params]

    def freeze(self, tape: Tape) -> List[Tensor]:
        """Wrap the parameters as constants of ``tape``."""
        return [tape.constant(p) for p in self.params]

    def forward(self, x: Tensor, params: Sequence[Tensor]) -> Tensor:
        if x.value.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ValueError(f"Expected input of width {self.sizes[0]}, got shape {x.shape}")
        layers = len(self.sizes) - 1
        for layer in range(layers):
            x = ad.affine(x, params[2 * layer], params[2 * layer + 1])
            x = _ACTIVATIONS[self.hidden if layer < layers - 1 else self.output](x)
        return x


def _as_tensor(x: Union[Tensor, np.ndarray], tape: Optional[Tape] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return (tape or Tape()).constant(np.asarray(x, dtype=np.float64))


def generator_forward(
    G: MlpNet, z: Union[Tensor, np.ndarray], params: Optional[Sequence[Tensor]] = None
) -> Tensor:
    """Map a latent batch to an image batch.

    :param G: Generator network with tanh output of width n * n
    :type G: MlpNet
    :param z: (batch, latent_dim) codes
    :type z: Tensor | numpy.ndarray
    :param params: Parameters bound to z's tape; constants of G when omitted
    :type params: list[Tensor] | None
    :return: (batch, n, n) images in (-1, 1)
    :rtype: Tensor
    :raises ValueError: If the latent width does not match the generator
    """
    z = _as_tensor(z)
    if z.value.ndim != 2 or z.shape[1] != G.sizes[0]:
        raise ValueError(f"Latent batch must have width {G.sizes[0]}, got shape {z.shape}")
    n = math.isqrt(G.sizes[-1])
    flat = G.forward(z, params if params is not None else G.freeze(z.tape))
    return ad.reshape(flat, (z.shape[0], n, n))


@dataclass
class SpectralHead:
    """Spectral discriminator: |DFT|^2, ring sums, one affine layer.

    ``dft_cos`` and ``dft_sin`` map a row-major flattened image to the real and
    (negated) imaginary parts of its 2D DFT, in unshifted frequency order.
    ``ring_matrix[r, f]`` is 1 when frequency bin ``f`` lies on ring ``r`` of the
    centred spectrum. Only ``weights`` and ``bias`` are trained.
    """

    n: int
    dft_cos: np.ndarray
    dft_sin: np.ndarray
    ring_matrix: np.ndarray
    weights: np.ndarray
    bias: np.ndarray

    @classmethod
    def init(cls, n: int, rng: Optional[np.random.Generator] = None) -> "SpectralHead":
        """Build the fixed matrices for n x n images and draw the affine layer.

        Without ``rng`` the affine layer starts at zero.
        """
        if n < 2:
            raise ValueError("The spectral head needs n >= 2")
        k = np.arange(n)
        phase = np.outer(k, k) % n
        # angle[(k, l), (m, q)] = 2 pi ((k m + l q) mod n) / n
        angle = 2.0 * np.pi * ((phase[:, None, :, None] + phase[None, :, None, :]) % n) / n
        angle = angle.reshape(n * n, n * n)
        rings = np.fft.ifftshift(ring_index(n)).ravel()
        length = profile_length(n)
        ring_matrix = np.zeros((length, n * n))
        inside = rings < length
        ring_matrix[rings[inside], np.flatnonzero(inside)] = 1.0
        if rng is None:
            weights = np.zeros(length)
        else:
            weights = 0.01 * rng.standard_normal(length)
        return cls(n, np.cos(angle), np.sin(angle), ring_matrix, weights, np.zeros(1))

    @property
    def profile_length(self) -> int:
        return self.ring_matrix.shape[0]

    @property
    def params(self) -> List[np.ndarray]:
        return [self.weights, self.bias]

    @property
    def parameter_count(self) -> int:
        return self.weights.size + self.bias.size

    def bind(self, tape: Tape) -> List[Tensor]:
        return [tape.leaf(p) for p in self.params]

    def freeze(self, tape: Tape) -> List[Tensor]:
        return [tape.constant(p) for p in self.params]


def _flatten_images(head: SpectralHead, images: Union[Tensor, np.ndarray]) -> Tensor:
    images = _as_tensor(images)
    if images.value.ndim == 3:
        if images.shape[1:] != (head.n, head.n):
            raise ValueError(f"Expected {head.n}x{head.n} images, got shape {images.shape}")
        images = ad.reshape(images, (images.shape[0], head.n * head.n))
    if images.value.ndim != 2 or images.shape[1] != head.n * head.n:
        raise ValueError(f"Expected {head.n}x{head.n} images, got shape {images.shape}")
    return images


def spectral_profile(head: SpectralHead, images: Union[Tensor, np.ndarray]) -> Tensor:
    """Differentiable binned azimuthal integral of a (batch, n, n) or (batch, n * n) batch."""
    x = _flatten_images(head, images)
    tape = x.tape
    u = ad.matmul(x, tape.constant(head.dft_cos.T))
    v = ad.matmul(x, tape.constant(head.dft_sin.T))
    power = ad.add(ad.square(u), ad.square(v))
    return ad.matmul(power, tape.constant(head.ring_matrix.T))


def spectral_forward(
    head: SpectralHead,
    images: Union[Tensor, np.ndarray],
    params: Optional[Sequence[Tensor]] = None,
    scale: DfScale = "log1p",
    apply_sigmoid: bool = True,
) -> Tensor:
    """Realness scores of the spectral discriminator.

    :param head: Spectral discriminator
    :type head: SpectralHead
    :param images: (batch, n, n) or (batch, n * n) images in [0, 1]
    :type images: Tensor | numpy.ndarray
    :param params: ``[weights, bias]`` bound to the images' tape; constants when omitted
    :type params: list[Tensor] | None
    :param scale: ``log1p`` feeds log(1 + profile) to the affine layer, ``raw`` the profile
    :type scale: str
    :param apply_sigmoid: Squash the scores to (0, 1)
    :type apply_sigmoid: bool
    :return: (batch, 1) scores
    :rtype: Tensor
    :raises ValueError: If the image size does not match the head
    """
    profile = spectral_profile(head, images)
    tape = profile.tape
    weights, bias = params if params is not None else head.freeze(tape)
    if scale == "log1p":
        features = ad.log_eps(ad.add(profile, 1.0))
    elif scale == "raw":
        features = profile
    else:
        raise ValueError(f"Unknown spectral feature scale {scale!r}")
    scores = ad.affine(features, ad.reshape(weights, (head.profile_length, 1)), bias)
    return ad.sigmoid(scores) if apply_sigmoid else scores


def gradient_penalty(interpolates: Tensor, scores: Tensor) -> Tensor:
    """mean((||d scores / d interpolates||_2 - 1)^2) with the gradient kept on the tape.

    :param interpolates: (batch, d) leaf of mixed real and fake samples
    :type interpolates: Tensor
    :param scores: (batch, 1) critic scores of ``interpolates``
    :type scores: Tensor
    :return: Scalar penalty, differentiable with respect to the critic parameters
    :rtype: Tensor
    """
    (input_grad,) = ad.grad(ad.sum(scores), [interpolates], create_graph=True)
    if input_grad.value.ndim != 2:
        input_grad = ad.reshape(input_grad, (input_grad.shape[0], -1))
    norms = ad.sqrt_eps(ad.sum(ad.square(input_grad), axis=1))
    return ad.mean(ad.square(ad.sub(norms, 1.0)))


def loss_d(
    kind: LossKind,
    d_real: Tensor,
    d_fake: Tensor,
    gp_inputs: Optional[Tuple[Tensor, Tensor]] = None,
    gp_lambda: float = GP_LAMBDA,
) -> Tensor:
    """Discriminator loss on real and fake scores.

    ``dcgan``: -E[log D(x)] - E[log(1 - D(x_fake))];
    ``lsgan``: E[(D(x) - 1)^2] + E[D(x_fake)^2];
    ``wgan``: -E[D(x)] + E[D(x_fake)];
    ``wgan-gp``: the wgan loss plus ``gp_lambda`` times :func:`gradient_penalty`.

    :param gp_inputs: ``(interpolates, scores)`` for wgan-gp only
    :type gp_inputs: tuple[Tensor, Tensor] | None
    :raises ValueError: If gp_inputs is given for a loss without a penalty or missing for wgan-gp
    """
    if (kind == "wgan-gp") != (gp_inputs is not None):
        raise ValueError("gp_inputs are required for wgan-gp and only for wgan-gp")
    if kind == "dcgan":
        return ad.sub(
            ad.mul(ad.mean(ad.log_eps(d_real)), -1.0),
            ad.mean(ad.log_eps(ad.sub(1.0, d_fake))),
        )
    if kind == "lsgan":
        return ad.add(ad.mean(ad.square(ad.sub(d_real, 1.0))), ad.mean(ad.square(d_fake)))
    if kind in ("wgan", "wgan-gp"):
        loss = ad.sub(ad.mean(d_fake), ad.mean(d_real))
        if kind == "wgan-gp":
            loss = ad.add(loss, ad.mul(gradient_penalty(*gp_inputs), gp_lambda))
        return loss
    raise ValueError(f"Unknown loss kind {kind!r}")


def _generator_branch(kind: LossKind, d_fake: Tensor) -> Tensor:
    if kind == "dcgan":
        return ad.mul(ad.mean(ad.log_eps(d_fake)), -1.0)
    if kind == "lsgan":
        return ad.mean(ad.square(ad.sub(d_fake, 1.0)))
    if kind in ("wgan", "wgan-gp"):
        return ad.mul(ad.mean(d_fake), -1.0)
    raise ValueError(f"Unknown loss kind {kind!r}")


def loss_g(
    kind: LossKind,
    d_s_fake: Tensor,
    d_f_fake: Optional[Tensor] = None,
    spectral: bool = False,
) -> Tensor:
    """Generator loss; with the spectral branch on, the mean of both branch losses.

    :raises ValueError: If spectral is on but no spectral scores are given
    """
    spatial = _generator_branch(kind, d_s_fake)
    if not spectral:
        return spatial
    if d_f_fake is None:
        raise ValueError("Spectral generator loss needs the spectral discriminator's scores")
    return ad.mul(ad.add(spatial, _generator_branch(kind, d_f_fake)), 0.5)


class Adam:
    """Adam updating a list of parameter arrays in place."""

    def __init__(
        self,
        params: List[np.ndarray],
        lr: float = GAN_LR,
        betas: Tuple[float, float] = ADAM_BETAS,
        eps: float = OPTIM_EPS,
    ):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray]) -> None:
        beta1, beta2 = self.betas
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            m_hat = m / (1.0 - beta1**self.t)
            v_hat = v / (1.0 - beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class RMSprop:
    """RMSprop updating a list of parameter arrays in place."""

    def __init__(
        self,
        params: List[np.ndarray],
        lr: float = GAN_LR,
        alpha: float = RMSPROP_ALPHA,
        eps: float = OPTIM_EPS,
    ):
        self.params = params
        self.lr = lr
        self.alpha = alpha
        self.eps = eps
        self.sq = [np.zeros_like(p) for p in params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        for p, g, sq in zip(self.params, grads, self.sq):
            sq *= self.alpha
            sq += (1.0 - self.alpha) * g * g
            p -= self.lr * g / (np.sqrt(sq) + self.eps)


Optimizer = Union[Adam, RMSprop]


class TrainConfig(BaseModel):
    """Hyper-parameters of one training run.

    ``optimizer`` and ``n_critic`` default by loss: RMSprop and 5 critic steps for
    wgan, Adam for the rest, and 5 critic steps for wgan-gp.
    """

    loss: LossKind = "dcgan"
    spectral: bool = False
    epochs: int = Field(default=200, ge=0)
    batch: int = Field(default=GAN_BATCH, ge=2)
    lr: float = Field(default=GAN_LR, gt=0.0)
    optimizer: Optional[Literal["adam", "rmsprop"]] = None
    gp_lambda: float = Field(default=GP_LAMBDA, ge=0.0)
    clip: float = Field(default=WGAN_CLIP, gt=0.0)
    latent_dim: int = Field(default=LATENT_DIM, ge=1)
    hidden_dim: int = Field(default=HIDDEN_DIM, ge=1)
    image_size: int = 16
    n_critic: Optional[int] = Field(default=None, ge=1)
    df_scale: DfScale = "log1p"
    sample_count: int = Field(default=SAMPLE_COUNT, ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator("image_size")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value < 2 or value & (value - 1):
            raise ValueError(f"image_size must be a power of two >= 2, got {value}")
        return value

    @property
    def resolved_optimizer(self) -> str:
        if self.optimizer is not None:
            return self.optimizer
        return "rmsprop" if self.loss == "wgan" else "adam"

    @property
    def resolved_n_critic(self) -> int:
        if self.n_critic is not None:
            return self.n_critic
        return 5 if self.loss in ("wgan", "wgan-gp") else 1


@dataclass
class EpochRecord:
    epoch: int
    sd: float
    cs_quick: float
    d_s_loss: float
    d_f_loss: Optional[float]
    g_loss: float


@dataclass
class RunLog:
    """One row per completed epoch plus the outcome of the finished run.

    ``generated_profiles`` are the profiles of the final evaluation batch and
    ``real_profiles`` those of the training corpus.
    """

    rows: List[EpochRecord] = field(default_factory=list)
    sample_dir: Optional[str] = None
    final_sd: Optional[float] = None
    final_cs: Optional[float] = None
    generator: Optional[MlpNet] = field(default=None, repr=False)
    real_profiles: Optional[np.ndarray] = field(default=None, repr=False)
    generated_profiles: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class Networks:
    generator: MlpNet
    d_spatial: MlpNet
    d_spectral: Optional[SpectralHead]


def _streams(seed: int) -> Dict[str, np.random.Generator]:
    main, spectral, evaluation = np.random.SeedSequence(seed).spawn(3)
    return {
        "main": np.random.default_rng(main),
        "spectral": np.random.default_rng(spectral),
        "eval": np.random.default_rng(evaluation),
    }


def init_networks(
    config: TrainConfig, streams: Optional[Dict[str, np.random.Generator]] = None
) -> Networks:
    """Initialize G, the spatial discriminator and, if enabled, the spectral one.

    The same config always yields the same networks.
    """
    streams = streams or _streams(config.seed)
    pixels = config.image_size**2
    hidden = config.hidden_dim
    generator = MlpNet.init(
        (config.latent_dim, hidden, hidden, pixels), streams["main"], "relu", "tanh"
    )
    head_output = "sigmoid" if uses_sigmoid(config.loss) else "none"
    d_spatial = MlpNet.init((pixels, hidden, hidden, 1), streams["main"], "leaky_relu", head_output)
    d_spectral = SpectralHead.init(config.image_size, streams["spectral"]) if config.spectral else None
    return Networks(generator, d_spatial, d_spectral)


def _make_optimizer(config: TrainConfig, params: List[np.ndarray]) -> Optimizer:
    if config.resolved_optimizer == "rmsprop":
        return RMSprop(params, lr=config.lr)
    return Adam(params, lr=config.lr)


def _clip(params: Sequence[np.ndarray], clip: float) -> None:
    for p in params:
        np.clip(p, -clip, clip, out=p)


def _images_matrix(images: Union[Sequence[Image], np.ndarray], n: int) -> np.ndarray:
    if isinstance(images, np.ndarray):
        pixels = np.asarray(images, dtype=np.float64)
    else:
        pixels = np.stack([image.pixels for image in images]) if images else np.empty((0, n, n))
    if pixels.ndim != 3 or pixels.shape[1:] != (n, n):
        raise DataError(f"Training images must be {n}x{n}, got shape {pixels.shape[1:]}")
    if len(pixels) < 2:
        raise DataError("Training needs at least two images")
    return pixels


def _profiles_of(pixels: np.ndarray) -> np.ndarray:
    return profile_matrix(batch_profiles([Image(p) for p in pixels]))


def sample_images(G: MlpNet, count: int, rng: np.random.Generator) -> List[Image]:
    """Draw ``count`` generator samples, mapped to [0, 1]."""
    z = rng.standard_normal((count, G.sizes[0]))
    batch = generator_forward(G, z).value
    return [Image((b + 1.0) / 2.0) for b in batch]


class _Trainer:
    """State of one run: networks, optimizers, PRNG streams and fixed data."""

    def __init__(self, config: TrainConfig, real_pixels: np.ndarray):
        self.config = config
        self.streams = _streams(config.seed)
        self.nets = init_networks(config, self.streams)
        self.real = real_pixels.reshape(len(real_pixels), -1) * 2.0 - 1.0
        self.opt_g = _make_optimizer(config, self.nets.generator.params)
        self.opt_s = _make_optimizer(config, self.nets.d_spatial.params)
        self.opt_f = (
            _make_optimizer(config, self.nets.d_spectral.params) if config.spectral else None
        )
        eval_count = min(len(real_pixels), EVAL_BATCH_CAP)
        self.z_eval = self.streams["eval"].standard_normal((eval_count, config.latent_dim))
        self.eval_seed = int(self.streams["eval"].integers(0, 2**32))
        self.real_profiles = _profiles_of(real_pixels)
        self.step = 0

    def _spectral_scores(self, x_unit: Tensor, params: Sequence[Tensor]) -> Tensor:
        return spectral_forward(
            self.nets.d_spectral,
            x_unit,
            params,
            scale=self.config.df_scale,
            apply_sigmoid=uses_sigmoid(self.config.loss),
        )

    def _critic_step(
        self,
        real: np.ndarray,
        fake: np.ndarray,
        params_of: Sequence[np.ndarray],
        score: Callable[[Tensor, Sequence[Tensor]], Tensor],
        optimizer: Optimizer,
        rng: np.random.Generator,
    ) -> float:
        tape = Tape()
        params = [tape.leaf(p) for p in params_of]
        d_real = score(tape.constant(real), params)
        d_fake = score(tape.constant(fake), params)
        gp_inputs = None
        if self.config.loss == "wgan-gp":
            alpha = rng.random((len(real), 1))
            interpolates = tape.leaf(alpha * real + (1.0 - alpha) * fake)
            gp_inputs = (interpolates, score(interpolates, params))
        loss = loss_d(self.config.loss, d_real, d_fake, gp_inputs, self.config.gp_lambda)
        optimizer.step([g.value for g in ad.grad(loss, params)])
        if self.config.loss == "wgan":
            _clip(params_of, self.config.clip)
        return float(loss.value)

    def _generate(self, count: int) -> np.ndarray:
        z = self.streams["main"].standard_normal((count, self.config.latent_dim))
        return generator_forward(self.nets.generator, z).value.reshape(count, -1)

    def _generator_step(self, count: int) -> float:
        nets = self.nets
        tape = Tape()
        g_params = nets.generator.bind(tape)
        z = tape.constant(self.streams["main"].standard_normal((count, self.config.latent_dim)))
        fake = ad.reshape(generator_forward(nets.generator, z, g_params), (count, -1))
        d_s_fake = nets.d_spatial.forward(fake, nets.d_spatial.freeze(tape))
        d_f_fake = None
        if self.config.spectral:
            fake_unit = ad.mul(ad.add(fake, 1.0), 0.5)
            d_f_fake = self._spectral_scores(fake_unit, nets.d_spectral.freeze(tape))
        loss = loss_g(self.config.loss, d_s_fake, d_f_fake, self.config.spectral)
        self.opt_g.step([g.value for g in ad.grad(loss, g_params)])
        return float(loss.value)

    def train_step(self, real: np.ndarray) -> Tuple[float, Optional[float], Optional[float]]:
        nets = self.nets
        fake = self._generate(len(real))
        d_s = self._critic_step(
            real,
            fake,
            nets.d_spatial.params,
            lambda x, params: nets.d_spatial.forward(x, params),
            self.opt_s,
            self.streams["main"],
        )
        d_f = None
        if self.config.spectral:
            d_f = self._critic_step(
                (real + 1.0) / 2.0,
                (fake + 1.0) / 2.0,
                nets.d_spectral.params,
                self._spectral_scores,
                self.opt_f,
                self.streams["spectral"],
            )
        g = None
        self.step += 1
        if self.step % self.config.resolved_n_critic == 0:
            g = self._generator_step(len(real))
        return d_s, d_f, g

    def batches(self) -> List[np.ndarray]:
        order = self.streams["main"].permutation(len(self.real))
        size = min(self.config.batch, len(self.real))
        starts = range(0, len(order) - size + 1, size)
        return [self.real[order[start : start + size]] for start in starts]

    def evaluate(self, epochs: int) -> Tuple[float, float, np.ndarray]:
        batch = generator_forward(self.nets.generator, self.z_eval).value
        generated = _profiles_of((batch + 1.0) / 2.0)
        sd = spectral_difference(self.real_profiles, generated)
        cs = evaluate_cs(
            self.real_profiles,
            generated,
            epochs=epochs,
            seed=self.eval_seed,
            subsample_expected=True,
        ).cs
        return sd, cs, generated


_LOG_COLUMNS = ("epoch", "sd", "cs_quick", "d_s_loss", "d_f_loss", "g_loss")


def _format_cell(value) -> str:
    if value is None:
        return ""
    return repr(float(value)) if isinstance(value, float) else str(value)


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


class NetArtifact(BaseModel):
    sizes: List[int]
    params: List[List[float]]


class RunModelArtifact(BaseModel):
    """Flattened parameters written to ``model.json``."""

    generator: NetArtifact
    d_spatial: NetArtifact
    d_spectral: Optional[NetArtifact] = None


def _net_artifact(sizes: Sequence[int], params: Sequence[np.ndarray]) -> NetArtifact:
    return NetArtifact(sizes=list(sizes), params=[p.ravel().tolist() for p in params])


def _write_run_files(run_dir: str, trainer: "_Trainer") -> str:
    nets = trainer.nets
    artifact = RunModelArtifact(
        generator=_net_artifact(nets.generator.sizes, nets.generator.params),
        d_spatial=_net_artifact(nets.d_spatial.sizes, nets.d_spatial.params),
        d_spectral=(
            _net_artifact((nets.d_spectral.profile_length, 1), nets.d_spectral.params)
            if nets.d_spectral is not None
            else None
        ),
    )
    with open(os.path.join(run_dir, "model.json"), "w", encoding="utf-8") as f:
        f.write(artifact.model_dump_json(indent=2))
        f.write("\n")
    sample_dir = os.path.join(run_dir, "samples")
    os.makedirs(sample_dir, exist_ok=True)
    batch = generator_forward(nets.generator, trainer.z_eval[: trainer.config.sample_count]).value
    for index, pixels in enumerate(batch):
        save_image(Image((pixels + 1.0) / 2.0), os.path.join(sample_dir, f"{index:04d}.png"))
    return sample_dir


def train(
    config: TrainConfig,
    images: Union[Sequence[Image], np.ndarray],
    run_dir: Optional[str] = None,
) -> RunLog:
    """Train generator and discriminators on a corpus.

    Each step updates the spatial discriminator, then the spectral one when it is
    enabled, on the same fake batch; every ``n_critic``-th step also updates the
    generator. With the wgan loss all discriminator parameters are clipped to
    ``[-clip, clip]`` after each update. After every epoch the spectral difference
    and a quick cloaking score of a fixed evaluation batch are logged.

    When ``run_dir`` is given it receives ``config.json``, ``log.csv`` (written as
    epochs complete), ``model.json`` and ``samples/NNNN.png``.

    :param config: Run hyper-parameters
    :type config: TrainConfig
    :param images: Corpus images of size ``config.image_size``
    :type images: list[Image] | numpy.ndarray
    :param run_dir: Output directory, or None to keep everything in memory
    :type run_dir: str | None
    :return: Per-epoch log and final fidelity
    :rtype: RunLog
    :raises DataError: If the images do not match the configured size
    :raises NumericError: If a loss or update turns non-finite, naming epoch and step
    """
    real_pixels = _images_matrix(images, config.image_size)
    trainer = _Trainer(config, real_pixels)
    log = RunLog(generator=trainer.nets.generator, real_profiles=trainer.real_profiles)
    log_file = None
    writer = None
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as f:
            f.write(config.model_dump_json(indent=2))
            f.write("\n")
        log_file = open(os.path.join(run_dir, "log.csv"), "w", newline="", encoding="utf-8")
        writer = csv.writer(log_file, lineterminator="\n")
        writer.writerow(_LOG_COLUMNS)
    logger.info(
        "Training %s (spectral %s) for %d epochs on %d images",
        config.loss,
        "on" if config.spectral else "off",
        config.epochs,
        len(real_pixels),
    )
    try:
        for epoch in range(1, config.epochs + 1):
            losses: List[Tuple[float, Optional[float], Optional[float]]] = []
            for step, batch in enumerate(trainer.batches(), start=1):
                try:
                    losses.append(trainer.train_step(batch))
                except NumericError as e:
                    raise NumericError(f"epoch {epoch}, step {step}: {e}") from e
            sd, cs_quick, _ = trainer.evaluate(QUICK_CS_EPOCHS)
            record = EpochRecord(
                epoch=epoch,
                sd=sd,
                cs_quick=cs_quick,
                d_s_loss=_mean([loss[0] for loss in losses]),
                d_f_loss=_mean([loss[1] for loss in losses]),
                g_loss=_mean([loss[2] for loss in losses]),
            )
            log.rows.append(record)
            if writer is not None:
                writer.writerow([_format_cell(getattr(record, col)) for col in _LOG_COLUMNS])
                log_file.flush()
            logger.debug("epoch %d: sd %.4f cs %.4f", epoch, sd, cs_quick)
    finally:
        if log_file is not None:
            log_file.close()

    if config.epochs > 0:
        log.final_sd, log.final_cs, log.generated_profiles = trainer.evaluate(CS_EPOCHS)
        logger.info("Finished: SD %.4f, CS %.4f", log.final_sd, log.final_cs)
    if run_dir is not None:
        log.sample_dir = _write_run_files(run_dir, trainer)
    return log


class SpectralComparison(BaseModel):
    """Reports of a seed-matched pair of runs with the spectral discriminator on and off."""

    seed: int
    spectral_on: FidelityReport
    spectral_off: FidelityReport

    @property
    def improved(self) -> bool:
        return (
            self.spectral_on.sd < self.spectral_off.sd
            and self.spectral_on.cs > self.spectral_off.cs
        )


def _compare_one(
    config: TrainConfig, images, seed: int, run_root: Optional[str]
) -> SpectralComparison:
    reports: Dict[bool, FidelityReport] = {}
    for spectral in (True, False):
        run_config = config.model_copy(update={"seed": seed, "spectral": spectral})
        run_dir = None
        if run_root is not None:
            run_dir = os.path.join(
                run_root, f"seed-{seed}", "spectral-on" if spectral else "spectral-off"
            )
        run = train(run_config, images, run_dir)
        if run.generated_profiles is None:
            raise ValueError("Comparison runs need at least one epoch")
        reports[spectral] = build_report(run.real_profiles, run.generated_profiles, seed=seed)
    return SpectralComparison(seed=seed, spectral_on=reports[True], spectral_off=reports[False])


def compare_spectral(
    config: TrainConfig,
    images: Union[Sequence[Image], np.ndarray],
    seeds: Sequence[int],
    run_root: Optional[str] = None,
    workers: int = 1,
) -> List[SpectralComparison]:
    """Train with the spectral discriminator on and off for every seed.

    Runs are independent and may execute on ``workers`` threads; each writes to
    its own directory under ``run_root``.

    :return: One comparison per seed, in the order of ``seeds``
    :rtype: list[SpectralComparison]
    """
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(lambda seed: _compare_one(config, images, seed, run_root), seeds))
