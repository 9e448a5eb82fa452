"""
GAN environment synthesis.

A generator and a discriminator, both multilayer perceptrons written
directly in numpy (float64), play the minimax game over 900-dimensional
environment vectors encoded as {-1, +1}. The generator's tanh output is
thresholded at 0 to obtain binary grids.
"""

import json
import math
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator
from safetensors.numpy import load_file, save_file
from safetensors import safe_open

from app.models import GRID_SIZE, EnvironmentEntry, EnvironmentSet, grid_from_bitvector
from app.utils.rng import SeededRng
from app.controllers.NavigationPlannerController import is_navigable
from app.controllers.ResponseCodesController import (
    ContractError,
    DataError,
    SamplingExhaustedError,
    ShapeError,
    TrainingDivergedError,
)

logger = logging.getLogger(__name__)

ENV_DIM = GRID_SIZE * GRID_SIZE
PROBABILITY_CLAMP = 1e-7
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1
CHECKPOINT_FORMAT = "ses-gan"
CHECKPOINT_VERSION = "1"


class MlpSpec(BaseModel):
    """Architecture of one perceptron: widths include the input and output layers."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    layer_widths: Tuple[int, ...]
    leaky_slope: float = Field(default=0.2, ge=0)
    output_activation: Literal["tanh", "sigmoid"] = "tanh"
    batch_norm: Tuple[bool, ...] = Field(default=(), validate_default=True)
    dropout_rate: float = Field(default=0.0, ge=0, lt=1)

    @field_validator("layer_widths")
    @classmethod
    def _check_widths(cls, widths):
        if len(widths) < 3:
            raise ValueError("an MLP needs an input, at least one hidden layer and an output")
        if any(width <= 0 for width in widths):
            raise ValueError("layer widths must be positive")
        return widths

    @field_validator("batch_norm")
    @classmethod
    def _expand_batch_norm(cls, flags, info: ValidationInfo):
        # A single flag applies to every hidden layer
        if "layer_widths" not in info.data:
            return flags
        hidden = len(info.data["layer_widths"]) - 2
        if len(flags) == 0:
            flags = (False,) * hidden
        elif len(flags) == 1:
            flags = tuple(flags) * hidden
        if len(flags) != hidden:
            raise ValueError(f"batch_norm needs one flag per hidden layer ({hidden})")
        return tuple(flags)

    @property
    def hidden_count(self) -> int:
        return len(self.layer_widths) - 2

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def output_width(self) -> int:
        return self.layer_widths[-1]


@dataclass(frozen=True)
class MlpParams:
    """Trainable tensors (W*, b*, gamma*, beta*) and batch-norm running statistics."""

    weights: Dict[str, np.ndarray]
    running: Dict[str, np.ndarray] = field(default_factory=dict)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(value)) for value in {**self.weights, **self.running}.values())


@dataclass
class ForwardCache:
    spec: MlpSpec
    mode: str
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    normalized: List[Optional[np.ndarray]]
    inv_std: List[Optional[np.ndarray]]
    masks: List[Optional[np.ndarray]]
    hidden: List[np.ndarray]
    output: np.ndarray
    running: Dict[str, np.ndarray]


def init_mlp(spec: MlpSpec, rng: SeededRng) -> MlpParams:
    """Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); gamma 1, beta 0; running stats (0, 1)."""
    weights = {}
    running = {}
    widths = spec.layer_widths
    for layer in range(len(widths) - 1):
        bound = 1.0 / math.sqrt(widths[layer])
        weights[f"W{layer}"] = rng.uniform(-bound, bound, size=(widths[layer], widths[layer + 1]))
        weights[f"b{layer}"] = rng.uniform(-bound, bound, size=widths[layer + 1])
        if layer < spec.hidden_count and spec.batch_norm[layer]:
            weights[f"gamma{layer}"] = np.ones(widths[layer + 1])
            weights[f"beta{layer}"] = np.zeros(widths[layer + 1])
            running[f"running_mean{layer}"] = np.zeros(widths[layer + 1])
            running[f"running_var{layer}"] = np.ones(widths[layer + 1])
    return MlpParams(weights=weights, running=running)


def _activate_output(spec: MlpSpec, z: np.ndarray) -> np.ndarray:
    if spec.output_activation == "tanh":
        return np.tanh(z)
    return 1.0 / (1.0 + np.exp(-z))


def mlp_forward(
    spec: MlpSpec, params: MlpParams, inputs: np.ndarray, mode: str = "eval", rng: Optional[SeededRng] = None
) -> Tuple[np.ndarray, ForwardCache]:
    """
    Run the perceptron on a batch.

    Each hidden layer is affine, then batch-norm (batch statistics in train
    mode, running statistics in eval mode), then leaky ReLU, then inverted
    dropout (train mode only). The last layer is affine plus the output
    activation.

    Args:
        spec (MlpSpec): Architecture.
        params (MlpParams): Parameters matching `spec`.
        inputs (np.ndarray): (batch, input_width) array.
        mode (str): "train" or "eval".
        rng (SeededRng): Dropout mask source; required in train mode when dropout is on.

    Returns:
        tuple: (outputs, cache). `cache.running` holds the running statistics
        after this call; params are not modified.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_width:
        raise ShapeError(f"expected (batch, {spec.input_width}) input, got {x.shape}")
    if mode not in ("train", "eval"):
        raise ContractError(f"unknown mode {mode!r}")
    train = mode == "train"
    if train and x.shape[0] < 2 and any(spec.batch_norm):
        raise ContractError("batch-norm in train mode needs at least two rows")
    if train and spec.dropout_rate > 0 and rng is None:
        raise ContractError("train mode with dropout needs an rng")

    cache = ForwardCache(spec, mode, [], [], [], [], [], [], None, dict(params.running))
    h = x
    for layer in range(spec.hidden_count):
        cache.inputs.append(h)
        z = h @ params.weights[f"W{layer}"] + params.weights[f"b{layer}"]
        xhat = inv_std = None
        if spec.batch_norm[layer]:
            if train:
                mean = z.mean(axis=0)
                var = z.var(axis=0)
                count = z.shape[0]
                cache.running[f"running_mean{layer}"] = (1 - BN_MOMENTUM) * params.running[
                    f"running_mean{layer}"
                ] + BN_MOMENTUM * mean
                cache.running[f"running_var{layer}"] = (1 - BN_MOMENTUM) * params.running[
                    f"running_var{layer}"
                ] + BN_MOMENTUM * var * count / (count - 1)
            else:
                mean = params.running[f"running_mean{layer}"]
                var = params.running[f"running_var{layer}"]
            inv_std = 1.0 / np.sqrt(var + BN_EPSILON)
            xhat = (z - mean) * inv_std
            y = params.weights[f"gamma{layer}"] * xhat + params.weights[f"beta{layer}"]
        else:
            y = z
        a = np.where(y > 0, y, spec.leaky_slope * y)
        mask = None
        if train and spec.dropout_rate > 0:
            mask = (rng.random(a.shape) >= spec.dropout_rate) / (1.0 - spec.dropout_rate)
            a = a * mask
        cache.pre_activations.append(y)
        cache.normalized.append(xhat)
        cache.inv_std.append(inv_std)
        cache.masks.append(mask)
        cache.hidden.append(a)
        h = a

    last = spec.hidden_count
    cache.inputs.append(h)
    out = _activate_output(spec, h @ params.weights[f"W{last}"] + params.weights[f"b{last}"])
    cache.output = out
    return out, cache


def mlp_backward(
    spec: MlpSpec, params: MlpParams, cache: ForwardCache, upstream: np.ndarray
) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    Analytic gradients of a scalar loss given dLoss/dOutput.

    Batch-norm gradients flow through the batch mean and variance.

    Returns:
        tuple: (gradients keyed like `params.weights`, gradient w.r.t. the input batch).
    """
    if cache.spec != spec or cache.mode != "train":
        raise ContractError("backward needs the cache of a train-mode forward pass of the same spec")
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != cache.output.shape:
        raise ShapeError(f"upstream gradient {upstream.shape} does not match output {cache.output.shape}")

    grads = {}
    out = cache.output
    if spec.output_activation == "tanh":
        dz = upstream * (1.0 - out**2)
    else:
        dz = upstream * out * (1.0 - out)
    last = spec.hidden_count
    grads[f"W{last}"] = cache.inputs[last].T @ dz
    grads[f"b{last}"] = dz.sum(axis=0)
    dh = dz @ params.weights[f"W{last}"].T

    for layer in reversed(range(spec.hidden_count)):
        if cache.masks[layer] is not None:
            dh = dh * cache.masks[layer]
        y = cache.pre_activations[layer]
        dy = dh * np.where(y > 0, 1.0, spec.leaky_slope)
        if spec.batch_norm[layer]:
            xhat = cache.normalized[layer]
            grads[f"gamma{layer}"] = (dy * xhat).sum(axis=0)
            grads[f"beta{layer}"] = dy.sum(axis=0)
            dxhat = dy * params.weights[f"gamma{layer}"]
            count = dy.shape[0]
            dz = (
                cache.inv_std[layer]
                / count
                * (count * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            )
        else:
            dz = dy
        grads[f"W{layer}"] = cache.inputs[layer].T @ dz
        grads[f"b{layer}"] = dz.sum(axis=0)
        dh = dz @ params.weights[f"W{layer}"].T
    return grads, dh


def apply_running_stats(params: MlpParams, cache: ForwardCache) -> MlpParams:
    """Params with the running statistics recorded by a train-mode forward pass."""
    return replace(params, running=dict(cache.running))


def _clamp(probabilities) -> np.ndarray:
    return np.clip(np.asarray(probabilities, dtype=np.float64), PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)


def gan_losses(d_real, d_fake, generator_loss: str = "non_saturating") -> Tuple[float, float]:
    """
    Discriminator and generator losses from discriminator probabilities.

    loss_d = -mean(log D(real)) - mean(log(1 - D(fake))).
    loss_g = -mean(log D(fake)) (non-saturating) or mean(log(1 - D(fake))) (minimax).
    """
    real = _clamp(d_real)
    fake = _clamp(d_fake)
    loss_d = -np.mean(np.log(real)) - np.mean(np.log(1.0 - fake))
    if generator_loss == "minimax":
        loss_g = np.mean(np.log(1.0 - fake))
    else:
        loss_g = -np.mean(np.log(fake))
    return float(loss_d), float(loss_g)


def gan_value(d_real, d_fake) -> float:
    """The minimax value function, E[log D(real)] + E[log(1 - D(fake))]."""
    return float(np.mean(np.log(_clamp(d_real))) + np.mean(np.log(1.0 - _clamp(d_fake))))


def discriminator_loss_grads(d_real, d_fake) -> Tuple[np.ndarray, np.ndarray]:
    real = _clamp(d_real)
    fake = _clamp(d_fake)
    return -1.0 / (real.size * real), 1.0 / (fake.size * (1.0 - fake))


def generator_loss_grad(d_fake, generator_loss: str = "non_saturating") -> np.ndarray:
    fake = _clamp(d_fake)
    if generator_loss == "minimax":
        return -1.0 / (fake.size * (1.0 - fake))
    return -1.0 / (fake.size * fake)


class AdamOptimizer:
    def __init__(self, learning_rate: float, beta1: float, beta2: float, epsilon: float) -> None:
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, weights: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """Return updated weights; inputs are left untouched."""
        self.t += 1
        updated = {}
        for name, value in weights.items():
            grad = grads[name]
            m = self.beta1 * self.m.get(name, np.zeros_like(value)) + (1 - self.beta1) * grad
            v = self.beta2 * self.v.get(name, np.zeros_like(value)) + (1 - self.beta2) * grad**2
            self.m[name], self.v[name] = m, v
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            updated[name] = value - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
        return updated


class GanTrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(default=200, gt=0)
    batch_size: int = Field(default=64, gt=0)
    learning_rate: float = Field(default=2e-4, gt=0)
    adam_beta1: float = Field(default=0.5, gt=0, lt=1)
    adam_beta2: float = Field(default=0.999, gt=0, lt=1)
    adam_epsilon: float = Field(default=1e-8, gt=0)
    seed: int = Field(default=0, ge=0)
    d_steps_per_g_step: int = Field(default=1, gt=0)
    latent_dim: int = Field(default=100, gt=0)
    generator_widths: Tuple[int, ...] = (256, 512, 1024)
    discriminator_widths: Tuple[int, ...] = (512, 256, 256)
    discriminator_dropout: float = Field(default=0.5, ge=0, lt=1)
    discriminator_batch_norm: bool = False
    leaky_slope: float = Field(default=0.2, ge=0)
    generator_loss: Literal["non_saturating", "minimax"] = "non_saturating"

    def generator_spec(self) -> MlpSpec:
        return MlpSpec(
            layer_widths=(self.latent_dim, *self.generator_widths, ENV_DIM),
            leaky_slope=self.leaky_slope,
            output_activation="tanh",
            batch_norm=(True,),
            dropout_rate=0.0,
        )

    def discriminator_spec(self) -> MlpSpec:
        return MlpSpec(
            layer_widths=(ENV_DIM, *self.discriminator_widths, 1),
            leaky_slope=self.leaky_slope,
            output_activation="sigmoid",
            batch_norm=(self.discriminator_batch_norm,),
            dropout_rate=self.discriminator_dropout,
        )


@dataclass(frozen=True)
class GanModel:
    generator_spec: MlpSpec
    generator: MlpParams
    discriminator_spec: MlpSpec
    discriminator: MlpParams
    latent_dim: int = 100
    seed: int = 0
    history: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.generator_spec.input_width != self.latent_dim or self.generator_spec.output_width != ENV_DIM:
            raise ContractError(f"generator must map {self.latent_dim} -> {ENV_DIM}")
        if self.discriminator_spec.input_width != ENV_DIM or self.discriminator_spec.output_width != 1:
            raise ContractError(f"discriminator must map {ENV_DIM} -> 1")
        if not (self.generator.is_finite() and self.discriminator.is_finite()):
            raise ContractError("model parameters must be finite")

    def generate(self, z: np.ndarray) -> np.ndarray:
        """Eval-mode generator output in [-1, 1]."""
        out, _ = mlp_forward(self.generator_spec, self.generator, z, mode="eval")
        return out


def encode_environments(bitvectors: np.ndarray) -> np.ndarray:
    """{0, 1} -> {-1, +1}."""
    return 2.0 * np.asarray(bitvectors, dtype=np.float64) - 1.0


def _check_finite(loss_d: float, loss_g: float, epoch: int, step: int) -> None:
    if not (math.isfinite(loss_d) and math.isfinite(loss_g)):
        raise TrainingDivergedError(f"epoch {epoch}, step {step}: loss_d={loss_d}, loss_g={loss_g}")


def train_gan(dataset: EnvironmentSet, cfg: GanTrainConfig, log_level: int = 0) -> GanModel:
    """
    Train generator and discriminator with alternating Adam updates.

    The discriminator always sees real and generated rows in one batch.
    Each batch runs `d_steps_per_g_step` discriminator updates, then one
    generator update. The run is a deterministic function of `cfg.seed`.

    Args:
        dataset (EnvironmentSet): Environments to imitate.
        cfg (GanTrainConfig): Training settings.
        log_level (int): 2 logs losses every epoch.

    Returns:
        GanModel: Trained model with frozen running statistics.
    """
    data = encode_environments(dataset.bitvectors())
    count = data.shape[0]
    if count == 0:
        raise ContractError("cannot train on an empty environment set")
    if cfg.batch_size > count:
        raise ContractError(f"batch_size {cfg.batch_size} exceeds dataset size {count}")
    if cfg.batch_size < 2:
        raise ContractError("batch_size must be at least 2 for batch-norm")

    root = SeededRng(cfg.seed)
    g_spec, d_spec = cfg.generator_spec(), cfg.discriminator_spec()
    generator = init_mlp(g_spec, root.fork("init", "generator"))
    discriminator = init_mlp(d_spec, root.fork("init", "discriminator"))
    g_opt = AdamOptimizer(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)
    d_opt = AdamOptimizer(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)
    rng = root.fork("train")
    batch = cfg.batch_size
    history = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(count)
        epoch_losses = []
        for step in range(count // batch):
            real = data[order[step * batch : (step + 1) * batch]]

            for _ in range(cfg.d_steps_per_g_step):
                fake, g_cache = mlp_forward(g_spec, generator, rng.normal(size=(batch, cfg.latent_dim)), "train", rng)
                generator = apply_running_stats(generator, g_cache)
                probs, d_cache = mlp_forward(d_spec, discriminator, np.vstack((real, fake)), "train", rng)
                d_real, d_fake = probs[:batch], probs[batch:]
                loss_d, _ = gan_losses(d_real, d_fake, cfg.generator_loss)
                _check_finite(loss_d, 0.0, epoch, step)
                grad_real, grad_fake = discriminator_loss_grads(d_real, d_fake)
                d_grads, _ = mlp_backward(d_spec, discriminator, d_cache, np.vstack((grad_real, grad_fake)))
                discriminator = MlpParams(
                    d_opt.step(discriminator.weights, d_grads), dict(d_cache.running)
                )

            fake, g_cache = mlp_forward(g_spec, generator, rng.normal(size=(batch, cfg.latent_dim)), "train", rng)
            probs, d_cache = mlp_forward(d_spec, discriminator, np.vstack((real, fake)), "train", rng)
            d_real, d_fake = probs[:batch], probs[batch:]
            loss_d, loss_g = gan_losses(d_real, d_fake, cfg.generator_loss)
            _check_finite(loss_d, loss_g, epoch, step)
            upstream = np.vstack((np.zeros_like(d_real), generator_loss_grad(d_fake, cfg.generator_loss)))
            _, d_input = mlp_backward(d_spec, discriminator, d_cache, upstream)
            g_grads, _ = mlp_backward(g_spec, generator, g_cache, d_input[batch:])
            generator = MlpParams(g_opt.step(generator.weights, g_grads), dict(g_cache.running))
            epoch_losses.append((loss_d, loss_g))

        mean_d, mean_g = (float(value) for value in np.mean(epoch_losses, axis=0))
        history.append((mean_d, mean_g))
        if log_level >= 2:
            logger.info(f"GAN epoch {epoch + 1}/{cfg.epochs}: loss_d={mean_d:.4f} loss_g={mean_g:.4f}")

    return GanModel(
        generator_spec=g_spec,
        generator=generator,
        discriminator_spec=d_spec,
        discriminator=discriminator,
        latent_dim=cfg.latent_dim,
        seed=cfg.seed,
        history=tuple(history),
    )


def sample_environments(
    model: GanModel, count: int, rng: SeededRng, max_draws: Optional[int] = None
) -> EnvironmentSet:
    """
    Draw `count` navigable environments from the generator.

    z ~ N(0, 1)^latent_dim, eval-mode pass, threshold at 0. Non-navigable
    grids are rejected and redrawn.

    Args:
        model (GanModel): Trained model.
        count (int): Number of environments M.
        rng (SeededRng): Latent source.
        max_draws (int): Draw cap; defaults to 100 * count.

    Returns:
        EnvironmentSet: Synthesized set of exactly `count` grids.
    """
    if count < 0:
        raise ContractError("count must be non-negative")
    max_draws = 100 * count if max_draws is None else max_draws
    accepted = []
    draws = 0
    while len(accepted) < count and draws < max_draws:
        size = min(count - len(accepted), max_draws - draws)
        outputs = model.generate(rng.normal(size=(size, model.latent_dim)))
        draws += size
        for vector in outputs:
            grid = grid_from_bitvector((vector > 0).astype(np.uint8))
            if is_navigable(grid):
                accepted.append(grid)
    if len(accepted) < count:
        rate = len(accepted) / draws if draws else 0.0
        raise SamplingExhaustedError(
            f"{len(accepted)} of {count} environments after {draws} draws (acceptance rate {rate:.2%})"
        )
    entries = tuple(
        EnvironmentEntry(env_id=f"syn-{index:03d}", grid=grid, provenance="gan") for index, grid in enumerate(accepted)
    )
    return EnvironmentSet(entries=entries, kind="synthesized")


def save_gan(model: GanModel, file_path: str) -> None:
    """Write a safetensors checkpoint with the specs and seed in its metadata header."""
    tensors = {}
    for prefix, params in (("generator", model.generator), ("discriminator", model.discriminator)):
        for name, value in {**params.weights, **params.running}.items():
            tensors[f"{prefix}.{name}"] = np.ascontiguousarray(value, dtype=np.float64)
    metadata = {
        "format": CHECKPOINT_FORMAT,
        "format_version": CHECKPOINT_VERSION,
        "generator_spec": model.generator_spec.model_dump_json(),
        "discriminator_spec": model.discriminator_spec.model_dump_json(),
        "latent_dim": str(model.latent_dim),
        "seed": str(model.seed),
        "history": json.dumps(model.history),
    }
    save_file(tensors, file_path, metadata=metadata)


def load_gan(file_path: str) -> GanModel:
    try:
        with safe_open(file_path, framework="numpy") as f:
            metadata = f.metadata() or {}
        if metadata.get("format") != CHECKPOINT_FORMAT or metadata.get("format_version") != CHECKPOINT_VERSION:
            raise DataError(f"{file_path}: not a version {CHECKPOINT_VERSION} GAN checkpoint", "CHECKPOINT_INVALID")
        tensors = load_file(file_path)
        parts = {"generator": ({}, {}), "discriminator": ({}, {})}
        for key, value in tensors.items():
            prefix, name = key.split(".", 1)
            parts[prefix][1 if name.startswith("running_") else 0][name] = value
        return GanModel(
            generator_spec=MlpSpec.model_validate_json(metadata["generator_spec"]),
            generator=MlpParams(*parts["generator"]),
            discriminator_spec=MlpSpec.model_validate_json(metadata["discriminator_spec"]),
            discriminator=MlpParams(*parts["discriminator"]),
            latent_dim=int(metadata["latent_dim"]),
            seed=int(metadata["seed"]),
            history=tuple(tuple(pair) for pair in json.loads(metadata.get("history", "[]"))),
        )
    except DataError:
        raise
    except Exception as e:
        logger.error(f"Error loading GAN checkpoint {file_path}: {str(e)}")
        raise DataError(f"{file_path}: {str(e)}", "CHECKPOINT_INVALID")


class GANSynthesisPipeline:
    def __init__(self, config: GanTrainConfig, log_level: int = 0) -> None:
        """
        Args:
            config (GanTrainConfig): Training settings.
            log_level (int): Logging verbosity level
        """
        self.config = config
        self.log_level = log_level

    def synthesize(
        self, challenging: EnvironmentSet, count: int, rng: SeededRng, checkpoint_path: Optional[str] = None
    ) -> Tuple[EnvironmentSet, GanModel]:
        """
        Train on the challenging set and sample `count` environments.

        The batch size is capped at the dataset size.
        """
        if len(challenging) < 2:
            raise DataError(
                f"GAN synthesis needs at least 2 challenging environments, got {len(challenging)}",
                "CHALLENGING_SET_TOO_SMALL",
            )
        config = self.config.model_copy(update={"batch_size": min(self.config.batch_size, len(challenging))})
        if self.log_level >= 1:
            logger.info(
                f"Training GAN on {len(challenging)} environments for {config.epochs} epochs "
                f"(batch {config.batch_size}, seed {config.seed})"
            )
        model = train_gan(challenging, config, log_level=self.log_level)
        if checkpoint_path:
            save_gan(model, checkpoint_path)
        synthesized = sample_environments(model, count, rng)
        if self.log_level >= 1:
            logger.info(f"Sampled {len(synthesized)} navigable environments from the generator")
        return synthesized, model
