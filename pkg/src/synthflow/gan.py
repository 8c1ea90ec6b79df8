"""Gradient-penalty Wasserstein training for tabular flow features.

The critic loss is

    mean f(fake) - mean f(real) + weight * mean (||grad_x f(x_hat)|| - 1)^2

with x_hat drawn uniformly on segments between paired real and fake rows.
The generator minimizes -mean f(G(z)) with the critic frozen. Both networks
are trained with RMSProp, alternating several critic updates per generator
update. Everything is driven by one seeded generator so runs are bit
reproducible.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .dataio import DatasetMatrix, NormalizationStats, denormalize
from . import nets
from .nets import MlpNetwork, NonFiniteError, ShapeError, as_batch

CHECKPOINT_FORMAT = "sgmodel"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint payload is unreadable or incompatible."""


class NonFiniteLossError(NonFiniteError):
    """Critic loss left the finite range; carries the three loss terms."""

    def __init__(self, fake_term: float, real_term: float, penalty_term: float):
        self.fake_term = fake_term
        self.real_term = real_term
        self.penalty_term = penalty_term
        super().__init__(
            f"non-finite critic loss: fake_term={fake_term}, "
            f"real_term={real_term}, penalty_term={penalty_term}"
        )


class TrainingDiverged(RuntimeError):
    """Raised when training hits a non-finite loss or gradient.

    Carries the step number, the last good model (parameter checks run
    before any mutation, so the attached model is the state after the last
    completed update), and the log records collected so far.
    """

    def __init__(self, step: int, model: "GanModel", records: list, cause: Exception):
        self.step = step
        self.model = model
        self.records = records
        super().__init__(f"training diverged at generator step {step}: {cause}")


@dataclass(frozen=True)
class GanConfig:
    """All training hyperparameters; defaults follow the reference setup
    (penalty weight 10, RMSProp lr=0.001 rho=0.9 eps=1e-6, hidden stacks
    256/128/128/128)."""

    gp_lambda: float = 10.0
    lr: float = 1e-3
    rho: float = 0.9
    epsilon: float = 1e-6
    noise_dim: int = 64
    batch_size: int = 64
    critic_steps: int = 5
    gen_steps: int = 10_000
    generator_hidden: tuple[int, ...] = (256, 128, 128, 128)
    critic_hidden: tuple[int, ...] = (256, 128, 128, 128)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.gp_lambda < 0:
            raise ValueError(f"gp_lambda must be >= 0, got {self.gp_lambda}")
        if self.batch_size < 2:
            raise ValueError(
                f"batch_size must be >= 2 (interpolation pairs samples), "
                f"got {self.batch_size}"
            )
        if self.critic_steps < 1:
            raise ValueError(f"critic_steps must be >= 1, got {self.critic_steps}")
        if self.gen_steps < 0:
            raise ValueError(f"gen_steps must be >= 0, got {self.gen_steps}")
        if self.noise_dim < 1:
            raise ValueError(f"noise_dim must be >= 1, got {self.noise_dim}")
        if not all(h >= 1 for h in self.generator_hidden) or not all(
            h >= 1 for h in self.critic_hidden
        ):
            raise ValueError("hidden layer sizes must be >= 1")

    @classmethod
    def small(cls, **overrides) -> "GanConfig":
        """Small preset for low-dimensional data and smoke tests."""
        base = dict(
            noise_dim=8,
            generator_hidden=(32, 32),
            critic_hidden=(32, 32),
            gen_steps=2_000,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return {
            "gp_lambda": self.gp_lambda,
            "lr": self.lr,
            "rho": self.rho,
            "epsilon": self.epsilon,
            "noise_dim": self.noise_dim,
            "batch_size": self.batch_size,
            "critic_steps": self.critic_steps,
            "gen_steps": self.gen_steps,
            "generator_hidden": list(self.generator_hidden),
            "critic_hidden": list(self.critic_hidden),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GanConfig":
        known = dict(data)
        for key in ("generator_hidden", "critic_hidden"):
            if key in known:
                known[key] = tuple(known[key])
        unknown = set(known) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown gan config keys: {sorted(unknown)}")
        return cls(**known)


@dataclass
class GanModel:
    """Generator/critic pair plus the config that built them."""

    generator: MlpNetwork
    critic: MlpNetwork
    config: GanConfig

    def __post_init__(self) -> None:
        if self.critic.out_dim != 1:
            raise ShapeError(f"critic must be scalar-output, got {self.critic.out_dim}")
        if self.generator.in_dim != self.config.noise_dim:
            raise ShapeError(
                f"generator input dim {self.generator.in_dim} != noise_dim "
                f"{self.config.noise_dim}"
            )
        if self.generator.out_dim != self.critic.in_dim:
            raise ShapeError(
                f"generator output dim {self.generator.out_dim} != critic "
                f"input dim {self.critic.in_dim}"
            )

    @property
    def feature_count(self) -> int:
        return self.generator.out_dim


def build_model(config: GanConfig, feature_count: int, rng: np.random.Generator) -> GanModel:
    """Fresh generator and critic for ``feature_count``-wide data.

    The generator maps noise through the hidden stack to a linear output
    layer (clamped only at generation time); the critic mirrors the stack
    down to one linear unit.
    """
    generator = nets.build_mlp(
        [config.noise_dim, *config.generator_hidden, feature_count], rng
    )
    critic = nets.build_mlp([feature_count, *config.critic_hidden, 1], rng)
    return GanModel(generator, critic, config)


@dataclass
class InterpolationDraw:
    """Per-pair mixing coefficients and the interpolated batch."""

    epsilon: np.ndarray
    x_hat: np.ndarray


def interpolation_draw(real_batch, fake_batch, epsilon) -> InterpolationDraw:
    """Build x_hat = eps*real + (1-eps)*fake from explicit coefficients."""
    real = as_batch(real_batch)
    fake = as_batch(fake_batch)
    if real.shape != fake.shape:
        raise ShapeError(
            f"real batch {real.shape} and fake batch {fake.shape} differ"
        )
    eps = np.asarray(epsilon, dtype=np.float64)
    if eps.shape != (real.shape[0],):
        raise ShapeError(
            f"need one epsilon per row, got {eps.shape} for {real.shape[0]} rows"
        )
    if eps.size and (eps.min() < 0.0 or eps.max() > 1.0):
        raise ValueError("epsilon values must lie in [0, 1]")
    x_hat = eps[:, None] * real + (1.0 - eps[:, None]) * fake
    return InterpolationDraw(eps, x_hat)


def interpolate(real_batch, fake_batch, rng: np.random.Generator) -> InterpolationDraw:
    """Uniform draw on the segments between paired real and fake rows."""
    real = as_batch(real_batch)
    eps = rng.uniform(0.0, 1.0, size=real.shape[0])
    return interpolation_draw(real, fake_batch, eps)


@dataclass
class CriticLoss:
    """Critic loss value, its three terms, gradients, and diagnostics."""

    loss: float
    fake_term: float
    real_term: float
    penalty_term: float
    grads: list[np.ndarray]
    grad_norm_mean: float


def critic_loss(
    model: GanModel, real_batch, fake_batch, draw: InterpolationDraw
) -> CriticLoss:
    """Loss and critic-parameter gradients for one batch.

    The value decomposes exactly as fake_term - real_term + penalty_term;
    gradients combine the reverse pass on the score terms with the penalty
    double backprop.
    """
    real = as_batch(real_batch)
    fake = as_batch(fake_batch)
    if real.shape[0] == 0 or fake.shape[0] == 0:
        raise ValueError("critic batches must be nonempty")
    cfg = model.config

    fake_scores, fake_cache = nets.mlp_forward(model.critic, fake)
    real_scores, real_cache = nets.mlp_forward(model.critic, real)
    fake_term = float(fake_scores.mean())
    real_term = float(real_scores.mean())
    penalty_term, penalty_grads = nets.penalty_param_grad(
        model.critic, draw.x_hat, cfg.gp_lambda
    )
    loss = fake_term - real_term + penalty_term
    if not np.isfinite(loss):
        raise NonFiniteLossError(fake_term, real_term, penalty_term)

    up_fake = np.full_like(fake_scores, 1.0 / fake_scores.shape[0])
    up_real = np.full_like(real_scores, -1.0 / real_scores.shape[0])
    grads_fake = nets.mlp_param_grad(model.critic, fake_cache, up_fake)
    grads_real = nets.mlp_param_grad(model.critic, real_cache, up_real)
    grads = [gf + gr + gp for gf, gr, gp in zip(grads_fake, grads_real, penalty_grads)]

    norms = np.linalg.norm(nets.mlp_input_grad(model.critic, draw.x_hat), axis=1)
    return CriticLoss(loss, fake_term, real_term, penalty_term, grads, float(norms.mean()))


def generator_loss(model: GanModel, noise_batch) -> tuple[float, list[np.ndarray]]:
    """Generator loss -mean f(G(z)) and its generator-parameter gradients.

    The critic contributes only through its input gradient, so its
    parameters stay untouched.
    """
    noise = as_batch(noise_batch)
    if noise.shape[1] != model.config.noise_dim:
        raise ShapeError(
            f"noise has {noise.shape[1]} columns, expected {model.config.noise_dim}"
        )
    fake, gen_cache = nets.mlp_forward(model.generator, noise)
    scores, _ = nets.mlp_forward(model.critic, fake)
    loss = float(-scores.mean())
    if not np.isfinite(loss):
        raise NonFiniteError(f"non-finite generator loss: {loss}")
    upstream = -nets.mlp_input_grad(model.critic, fake) / fake.shape[0]
    grads = nets.mlp_param_grad(model.generator, gen_cache, upstream)
    return loss, grads


@dataclass
class TrainRecord:
    """One per-generator-step log entry.

    critic_loss/penalty/grad-norm values are averaged over that step's
    critic updates; wall_ms is the measured wall-clock time of the step and
    is the one field that is not reproducible across runs.
    """

    step: int
    critic_loss: float
    generator_loss: float
    penalty_mean: float
    grad_norm_mean: float
    wall_ms: float


TRAIN_LOG_COLUMNS = (
    "step", "critic_loss", "generator_loss", "penalty_mean",
    "grad_norm_mean", "wall_ms",
)


def write_train_log(records: list[TrainRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(TRAIN_LOG_COLUMNS) + "\n")
        for r in records:
            fh.write(
                f"{r.step},{r.critic_loss!r},{r.generator_loss!r},"
                f"{r.penalty_mean!r},{r.grad_norm_mean!r},{r.wall_ms!r}\n"
            )


def train(
    data: DatasetMatrix, config: GanConfig, progress=None
) -> tuple[GanModel, list[TrainRecord]]:
    """Run the alternating training loop.

    Batches are drawn uniformly with replacement. Each outer step applies
    ``critic_steps`` critic updates followed by one generator update, and
    appends one TrainRecord (also passed to ``progress`` when given). A
    non-finite loss or gradient aborts with :class:`TrainingDiverged`.
    """
    n = data.n_rows
    if n < config.batch_size:
        raise ValueError(
            f"dataset has {n} rows, need at least batch_size={config.batch_size}"
        )
    rng = np.random.default_rng(config.seed)
    model = build_model(config, data.features.shape[1], rng)
    critic_state = nets.rmsprop_state(
        model.critic.parameters(), config.lr, config.rho, config.epsilon
    )
    gen_state = nets.rmsprop_state(
        model.generator.parameters(), config.lr, config.rho, config.epsilon
    )

    records: list[TrainRecord] = []
    features = data.features
    for step in range(1, config.gen_steps + 1):
        t0 = time.perf_counter()
        try:
            closs_sum = penalty_sum = norm_sum = 0.0
            for _ in range(config.critic_steps):
                idx = rng.integers(0, n, size=config.batch_size)
                real = features[idx]
                noise = rng.uniform(-1.0, 1.0, size=(config.batch_size, config.noise_dim))
                fake, _ = nets.mlp_forward(model.generator, noise)
                draw = interpolate(real, fake, rng)
                cl = critic_loss(model, real, fake, draw)
                assert abs(cl.loss - (cl.fake_term - cl.real_term + cl.penalty_term)) \
                    <= 1e-12 * max(1.0, abs(cl.loss))
                nets.rmsprop_step(model.critic.parameters(), cl.grads, critic_state)
                closs_sum += cl.loss
                penalty_sum += cl.penalty_term
                norm_sum += cl.grad_norm_mean
            noise = rng.uniform(-1.0, 1.0, size=(config.batch_size, config.noise_dim))
            gloss, ggrads = generator_loss(model, noise)
            nets.rmsprop_step(model.generator.parameters(), ggrads, gen_state)
        except NonFiniteError as exc:
            raise TrainingDiverged(step, model, records, exc) from exc
        wall_ms = (time.perf_counter() - t0) * 1000.0
        record = TrainRecord(
            step=step,
            critic_loss=closs_sum / config.critic_steps,
            generator_loss=gloss,
            penalty_mean=penalty_sum / config.critic_steps,
            grad_norm_mean=norm_sum / config.critic_steps,
            wall_ms=wall_ms,
        )
        records.append(record)
        if progress is not None:
            progress(record)
    return model, records


def generate(
    model: GanModel,
    n: int,
    rng: np.random.Generator,
    stats: NormalizationStats | None = None,
    clamp: bool = True,
) -> np.ndarray:
    """Sample n synthetic rows from the generator.

    With ``clamp`` the raw outputs are clipped to [0, 1] (the normalized
    feature range); with ``stats`` they are then mapped back to feature
    units.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    noise = rng.uniform(-1.0, 1.0, size=(n, model.config.noise_dim))
    out, _ = nets.mlp_forward(model.generator, noise)
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    if stats is not None:
        out = denormalize(out, stats)
    return out


def _net_to_dict(net: MlpNetwork) -> list[dict]:
    return [
        {
            "activation": layer.activation,
            "weights": layer.weights.tolist(),
            "bias": layer.bias.tolist(),
        }
        for layer in net.layers
    ]


def _net_from_dict(data: list[dict]) -> MlpNetwork:
    layers = [
        nets.DenseLayer(
            np.asarray(entry["weights"], dtype=np.float64),
            np.asarray(entry["bias"], dtype=np.float64),
            entry["activation"],
        )
        for entry in data
    ]
    return MlpNetwork(layers)


def save_checkpoint(model: GanModel) -> bytes:
    """Serialize the model to a versioned JSON payload (exact float
    round-trip via repr)."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "feature_count": model.feature_count,
        "generator": _net_to_dict(model.generator),
        "critic": _net_to_dict(model.critic),
    }
    return (json.dumps(doc) + "\n").encode("utf-8")


def load_checkpoint(payload: bytes) -> GanModel:
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"truncated or corrupt checkpoint: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("payload is not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {doc.get('version')} is incompatible "
            f"(expected {CHECKPOINT_VERSION})"
        )
    try:
        config = GanConfig.from_dict(doc["config"])
        generator = _net_from_dict(doc["generator"])
        critic = _net_from_dict(doc["critic"])
        feature_count = doc["feature_count"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint payload: {exc}") from exc
    model = GanModel(generator, critic, config)
    if model.feature_count != feature_count:
        raise CheckpointError(
            f"checkpoint feature count {feature_count} does not match "
            f"network output {model.feature_count}"
        )
    return model
