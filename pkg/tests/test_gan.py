import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthflow import nets
from synthflow.dataio import NormalizationStats
from synthflow.gan import (
    CheckpointError,
    GanConfig,
    GanModel,
    TrainingDiverged,
    build_model,
    critic_loss,
    generate,
    generator_loss,
    interpolate,
    interpolation_draw,
    load_checkpoint,
    save_checkpoint,
    train,
)
from synthflow.nets import DenseLayer, MlpNetwork, ShapeError

from helpers import constant_dataset, fd_param_grad, rel_err, toy_attack_dataset


def scalar_linear_critic(weights):
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    return MlpNetwork([DenseLayer(w, np.zeros(1), "linear")])


def tiny_model(feature_count=1, seed=0, **cfg_overrides):
    cfg = GanConfig.small(**cfg_overrides)
    return build_model(cfg, feature_count, np.random.default_rng(seed))


# ------------------------------------------------------------- interpolation

def test_interpolation_endpoints():
    real = np.array([[1.0, 2.0]])
    fake = np.array([[5.0, 6.0]])
    assert np.array_equal(
        interpolation_draw(real, fake, np.array([1.0])).x_hat, real
    )
    assert np.array_equal(
        interpolation_draw(real, fake, np.array([0.0])).x_hat, fake
    )


def test_interpolation_hand_case():
    draw = interpolation_draw(
        np.array([[0.0, 0.0]]), np.array([[2.0, 2.0]]), np.array([0.25])
    )
    assert draw.x_hat.tolist() == [[1.5, 1.5]]


def test_interpolation_shape_mismatch():
    with pytest.raises(ShapeError):
        interpolation_draw(np.zeros((2, 2)), np.zeros((3, 2)), np.zeros(2))


@settings(deadline=None, max_examples=50)
@given(seed=st.integers(0, 100_000), rows=st.integers(1, 8), cols=st.integers(1, 5))
def test_interpolation_stays_on_segment(seed, rows, cols):
    rng = np.random.default_rng(seed)
    real = rng.normal(size=(rows, cols))
    fake = rng.normal(size=(rows, cols))
    draw = interpolate(real, fake, rng)
    lo = np.minimum(real, fake)
    hi = np.maximum(real, fake)
    assert (draw.x_hat >= lo - 1e-12).all() and (draw.x_hat <= hi + 1e-12).all()


# --------------------------------------------------------------- critic loss

def make_model_with_critic(critic, noise_dim=2):
    cfg = GanConfig.small(noise_dim=noise_dim)
    generator = nets.build_mlp(
        [noise_dim, 4, critic.in_dim], np.random.default_rng(0)
    )
    return GanModel(generator, critic, cfg)


def test_critic_loss_vanishes_for_unit_norm_critic_on_equal_batches():
    model = make_model_with_critic(scalar_linear_critic([[0.6, 0.8]]))
    batch = np.array([[0.1, 0.2], [0.3, 0.4]])
    draw = interpolation_draw(batch, batch, np.array([0.5, 0.5]))
    out = critic_loss(model, batch, batch, draw)
    assert out.loss == 0.0
    assert out.fake_term == out.real_term
    assert out.penalty_term == 0.0


def test_critic_loss_lambda_zero_is_wasserstein_surrogate():
    critic = scalar_linear_critic([[3.0, -1.0]])
    generator = nets.build_mlp([2, 4, 2], np.random.default_rng(0))
    model = GanModel(generator, critic, GanConfig.small(noise_dim=2, gp_lambda=0.0))
    rng = np.random.default_rng(8)
    real = rng.normal(size=(6, 2))
    fake = rng.normal(size=(6, 2))
    out = critic_loss(model, real, fake, interpolate(real, fake, rng))
    closed_form = (fake @ np.array([3.0, -1.0])).mean() - (
        real @ np.array([3.0, -1.0])
    ).mean()
    assert out.penalty_term == 0.0
    assert abs(out.loss - closed_form) < 1e-12


def test_critic_loss_linear_hand_case():
    model = make_model_with_critic(scalar_linear_critic([[2.0]]))
    real = np.array([[1.0]])
    fake = np.array([[0.0]])
    draw = interpolation_draw(real, fake, np.array([0.3]))
    out = critic_loss(model, real, fake, draw)
    assert out.loss == 8.0
    assert (out.fake_term, out.real_term, out.penalty_term) == (0.0, 2.0, 10.0)
    assert out.loss == out.fake_term - out.real_term + out.penalty_term


def margin_through(net, x):
    _, cache = nets.mlp_forward(net, x)
    return min(float(np.abs(z).min()) for z in cache.preacts)


def test_critic_loss_gradient_matches_finite_differences():
    cfg = GanConfig.small(noise_dim=2, generator_hidden=(4,), critic_hidden=(4, 4))
    seed = 42
    while True:  # keep all pre-activations clear of ReLU kinks for the oracle
        rng = np.random.default_rng(seed)
        model = build_model(cfg, 3, rng)
        real = rng.normal(size=(4, 3))
        fake = rng.normal(size=(4, 3))
        draw = interpolate(real, fake, rng)
        batches = np.vstack([real, fake, draw.x_hat])
        if margin_through(model.critic, batches) >= 1e-3:
            break
        seed += 1
    analytic = critic_loss(model, real, fake, draw).grads

    def loss_value():
        return critic_loss(model, real, fake, draw).loss

    oracle = fd_param_grad(model.critic, loss_value)
    assert rel_err(analytic, oracle) < 1e-4


# ------------------------------------------------------------ generator loss

def test_generator_loss_is_negated_mean_score():
    # critic f(x) = x on 1-d fakes; generator is identity-ish via fixed nets
    critic = scalar_linear_critic([[1.0]])
    generator = MlpNetwork([DenseLayer(np.array([[1.0]]), np.zeros(1), "linear")])
    model = GanModel(generator, critic, GanConfig.small(noise_dim=1))
    loss, _ = generator_loss(model, np.array([[2.0], [4.0]]))
    assert loss == -3.0


def test_generator_loss_zero_gradient_for_constant_critic():
    critic = MlpNetwork(
        [DenseLayer(np.zeros((1, 2)), np.array([5.0]), "linear")]
    )
    model = make_model_with_critic(critic)
    loss, grads = generator_loss(
        model, np.random.default_rng(0).uniform(-1, 1, (6, 2))
    )
    assert loss == -5.0
    assert all(np.all(g == 0.0) for g in grads)


def test_generator_loss_gradient_matches_finite_differences():
    cfg = GanConfig.small(noise_dim=2, generator_hidden=(4, 4), critic_hidden=(4,))
    seed = 7
    while True:  # kinks in either network break the finite-difference oracle
        rng = np.random.default_rng(seed)
        model = build_model(cfg, 3, rng)
        noise = rng.uniform(-1, 1, size=(5, 2))
        fake, _ = nets.mlp_forward(model.generator, noise)
        if (
            margin_through(model.generator, noise) >= 1e-3
            and margin_through(model.critic, fake) >= 1e-3
        ):
            break
        seed += 1
    _, analytic = generator_loss(model, noise)
    oracle = fd_param_grad(
        model.generator, lambda: generator_loss(model, noise)[0]
    )
    assert rel_err(analytic, oracle) < 1e-4


def test_generator_update_leaves_critic_untouched():
    rng = np.random.default_rng(3)
    model = build_model(GanConfig.small(noise_dim=2), 2, rng)
    before = [p.copy() for p in model.critic.parameters()]
    _, grads = generator_loss(model, rng.uniform(-1, 1, (4, 2)))
    state = nets.rmsprop_state(model.generator.parameters())
    nets.rmsprop_step(model.generator.parameters(), grads, state)
    for p, b in zip(model.critic.parameters(), before):
        assert np.array_equal(p, b)


# -------------------------------------------------------------------- train

def test_train_zero_steps_returns_initialized_model():
    data = constant_dataset(n_rows=80)
    model, records = train(data, GanConfig.small(gen_steps=0, seed=1))
    assert records == []
    assert model.feature_count == 1


def test_train_is_seed_deterministic():
    data = toy_attack_dataset()
    cfg = GanConfig.small(gen_steps=8, seed=5)
    model_a, records_a = train(data, cfg)
    model_b, records_b = train(data, cfg)
    assert save_checkpoint(model_a) == save_checkpoint(model_b)
    for ra, rb in zip(records_a, records_b):
        assert (ra.step, ra.critic_loss, ra.generator_loss) == (
            rb.step, rb.critic_loss, rb.generator_loss,
        )
        assert (ra.penalty_mean, ra.grad_norm_mean) == (rb.penalty_mean, rb.grad_norm_mean)


def test_train_converges_on_constant_target():
    # toy experiment: all-0.5 1-d data, small config
    data = constant_dataset(0.5, n_rows=500)
    model, records = train(data, GanConfig.small(seed=3))
    assert len(records) == 2000
    out = generate(model, 500, np.random.default_rng(5), clamp=True)
    assert abs(out.mean() - 0.5) <= 0.05


def test_train_divergence_aborts_with_step_and_model():
    data = constant_dataset(n_rows=80)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDiverged) as excinfo:
            train(data, GanConfig.small(lr=1e200, gen_steps=50, seed=2))
    err = excinfo.value
    assert err.step >= 1
    assert isinstance(err.model, GanModel)
    for p in err.model.critic.parameters() + err.model.generator.parameters():
        assert np.isfinite(p).all()


def test_train_requires_enough_rows():
    with pytest.raises(ValueError, match="batch_size"):
        train(constant_dataset(n_rows=10), GanConfig.small(batch_size=64))


def test_train_progress_sink_sees_every_record():
    data = constant_dataset(n_rows=80)
    seen = []
    _, records = train(data, GanConfig.small(gen_steps=5, seed=1), seen.append)
    assert [r.step for r in seen] == [1, 2, 3, 4, 5]
    assert seen == records


# ----------------------------------------------------------------- generate

def test_generate_clamps_to_unit_range():
    model = tiny_model()
    out = generate(model, 32, np.random.default_rng(0), clamp=True)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_generate_denormalizes_with_stats():
    generator = MlpNetwork([DenseLayer(np.zeros((1, 1)), np.array([0.5]), "linear")])
    critic = scalar_linear_critic([[1.0]])
    model = GanModel(generator, critic, GanConfig.small(noise_dim=1))
    stats = NormalizationStats(np.array([0.0]), np.array([10.0]))
    out = generate(model, 3, np.random.default_rng(0), stats=stats)
    assert out.tolist() == [[5.0], [5.0], [5.0]]


def test_generate_is_deterministic_given_seed():
    model = tiny_model()
    a = generate(model, 4, np.random.default_rng(11))
    b = generate(model, 4, np.random.default_rng(11))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        generate(model, 0, np.random.default_rng(0))


# -------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip_is_exact():
    model = tiny_model(feature_count=3, seed=9)
    payload = save_checkpoint(model)
    loaded = load_checkpoint(payload)
    for a, b in zip(
        model.generator.parameters() + model.critic.parameters(),
        loaded.generator.parameters() + loaded.critic.parameters(),
    ):
        assert np.array_equal(a, b)
    assert loaded.config == model.config
    assert save_checkpoint(loaded) == payload


def test_checkpoint_truncated_payload_rejected():
    payload = save_checkpoint(tiny_model())
    with pytest.raises(CheckpointError, match="truncated|corrupt"):
        load_checkpoint(payload[: len(payload) // 2])


def test_checkpoint_version_mismatch_rejected():
    payload = save_checkpoint(tiny_model())
    bumped = payload.replace(b'"version": 1', b'"version": 99')
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(bumped)


def test_checkpoint_wrong_format_rejected():
    with pytest.raises(CheckpointError, match="not a model checkpoint"):
        load_checkpoint(b'{"format": "something-else"}')


# ------------------------------------------------------------------- config

def test_config_validation():
    with pytest.raises(ValueError, match="gp_lambda"):
        GanConfig(gp_lambda=-1.0)
    with pytest.raises(ValueError, match="batch_size"):
        GanConfig(batch_size=1)
    with pytest.raises(ValueError, match="critic_steps"):
        GanConfig(critic_steps=0)


def test_config_dict_round_trip():
    cfg = GanConfig.small(seed=42)
    assert GanConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError, match="unknown"):
        GanConfig.from_dict({"nope": 1})


def test_default_config_matches_reference_hyperparameters():
    cfg = GanConfig()
    assert cfg.gp_lambda == 10.0
    assert (cfg.lr, cfg.rho, cfg.epsilon) == (0.001, 0.9, 1e-6)
    assert cfg.generator_hidden == (256, 128, 128, 128)
    assert cfg.critic_hidden == (256, 128, 128, 128)
