import numpy as np
import pytest

from amrnet.data import DatasetSplit, class_weights
from amrnet.errors import ConfigurationError, InputError
from amrnet.nn import BLOCK_PLAN, CnnArchitecture, CnnModel, TrainConfig, build_amr_cnn, pooled_length, train
from amrnet.nn.train import evaluate_loss


def test_block_plan():
    assert BLOCK_PLAN == ((128, 7), (128, 7), (64, 5), (64, 5), (32, 3), (32, 3))


def test_parameter_count_independent_of_length():
    assert build_amr_cnn(64).n_parameters() == build_amr_cnn(60936).n_parameters() == 248705


def test_parameter_shapes():
    shapes = {p.name: p.value.shape for p in build_amr_cnn(64).parameters()}
    assert shapes["dense.kernel"] == (32, 128)
    assert shapes["output.kernel"] == (128, 1)
    assert shapes["block2.conv.kernel"] == (7, 128, 128)
    assert shapes["block6.conv.kernel"] == (3, 32, 32)


@pytest.mark.parametrize("L,expected", [(60936, 3808), (16, 1), (17, 1), (100, 6)])
def test_pooled_length(L, expected):
    assert pooled_length(L) == expected


def test_too_short_sequence_rejected():
    with pytest.raises(ConfigurationError):
        build_amr_cnn(15)


def test_wrong_input_length_rejected():
    with pytest.raises(InputError):
        build_amr_cnn(32).forward(np.zeros((2, 31), dtype=np.uint8))


def test_same_seed_same_weights():
    a, b, c = build_amr_cnn(32, seed=4), build_amr_cnn(32, seed=4), build_amr_cnn(32, seed=5)
    for pa, pb, pc in zip(a.parameters(), b.parameters(), c.parameters()):
        np.testing.assert_array_equal(pa.value, pb.value)
    assert any(not np.array_equal(pa.value, pc.value) for pa, pc in zip(a.parameters(), c.parameters()))


def test_batch_of_one_matches_batch_inference():
    rng = np.random.default_rng(0)
    model = build_amr_cnn(48, seed=1, dtype="float64")
    x = rng.integers(0, 5, (5, 48), dtype=np.uint8)
    full = model.predict_logits(x)
    single = np.concatenate([model.predict_logits(x[i : i + 1]) for i in range(5)])
    np.testing.assert_allclose(full, single, rtol=1e-12)


def test_inference_is_deterministic():
    model = build_amr_cnn(32, seed=2)
    x = np.random.default_rng(1).integers(0, 5, (3, 32), dtype=np.uint8)
    np.testing.assert_array_equal(model.predict_proba(x), model.predict_proba(x))


@pytest.mark.parametrize("seed", range(3))
def test_full_model_directional_derivative(seed):
    """Backprop through the whole network agrees with a central difference
    along a random direction in parameter space."""
    rng = np.random.default_rng(seed)
    model = build_amr_cnn(32, seed=seed, dtype="float64", dropout=0.0)
    x = rng.integers(0, 5, (4, 32), dtype=np.uint8)
    r = rng.standard_normal(4)
    params = model.parameters()
    direction = [rng.standard_normal(p.value.shape) for p in params]
    norm = np.sqrt(sum(np.sum(d * d) for d in direction))
    direction = [d / norm for d in direction]  # unit step keeps pool/ReLU kinks out of reach

    def f():
        return float(np.sum(r * model.forward(x, training=True)))

    model.zero_grad()
    f()
    model.backward(r)
    analytic = sum(float(np.sum(p.grad * d)) for p, d in zip(params, direction))
    h = 1e-5
    for p, d in zip(params, direction):
        p.value += h * d
    fp = f()
    for p, d in zip(params, direction):
        p.value -= 2 * h * d
    fm = f()
    for p, d in zip(params, direction):
        p.value += h * d
    numeric = (fp - fm) / (2 * h)
    assert abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric)) <= 1e-4


def _toy(n=40, L=32, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 4, (n, L), dtype=np.uint8)
    y = rng.integers(0, 2, n)
    y[:2] = [0, 1]
    x[y == 1, 10] = 4  # planted marker
    return x, y


def test_zero_epochs_leaves_model_untouched():
    x, y = _toy()
    model = build_amr_cnn(32, seed=0)
    before = [p.value.copy() for p in model.parameters()]
    split = DatasetSplit(np.arange(30), np.arange(30, 35), np.arange(35, 40), 0)
    _, history = train(model, x, y, split, TrainConfig(epochs=0))
    assert history == []
    for b, p in zip(before, model.parameters()):
        np.testing.assert_array_equal(b, p.value)


def test_single_training_sample_rejected():
    x, y = _toy()
    split = DatasetSplit(np.array([0]), np.arange(1, 5), np.arange(5, 10), 0)
    with pytest.raises(ConfigurationError):
        train(build_amr_cnn(32), x, y, split, TrainConfig(epochs=1))


def test_training_learns_planted_marker():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 4, (96, 32), dtype=np.uint8)
    y = rng.integers(0, 2, 96)
    x[y == 1, 10:13] = 4
    split = DatasetSplit(np.arange(64), np.arange(64, 80), np.arange(80, 96), 0)
    model, history = train(build_amr_cnn(32, seed=0), x, y, split,
                           TrainConfig(epochs=10, patience=10, batch_size=8))
    assert history[-1]["train_loss"] < history[0]["train_loss"]
    acc = np.mean((model.predict_proba(x[split.test]) >= 0.5) == y[split.test])
    assert acc >= 0.9


def test_training_is_reproducible():
    x, y = _toy()
    split = DatasetSplit(np.arange(30), np.arange(30, 35), np.arange(35, 40), 0)
    cfg = TrainConfig(epochs=2, seed=3)
    a, ha = train(build_amr_cnn(32, seed=1), x, y, split, cfg)
    b, hb = train(build_amr_cnn(32, seed=1), x, y, split, cfg)
    assert ha == hb
    for pa, pb in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(pa.value, pb.value)


def test_early_stopping_restores_best_epoch():
    x, y = _toy()
    split = DatasetSplit(np.arange(30), np.arange(30, 35), np.arange(35, 40), 0)
    model, history = train(build_amr_cnn(32, seed=0), x, y, split,
                           TrainConfig(epochs=30, patience=2, learning_rate=5e-2))
    best = min(h["val_loss"] for h in history)
    restored = evaluate_loss(model, x[split.val], y[split.val], class_weights(y[split.train]))
    assert restored == pytest.approx(best, rel=1e-5)
    assert len(history) < 30 or history[-1]["val_loss"] >= best


def test_architecture_round_trip():
    arch = CnnArchitecture(seq_len=40, dropout=0.1)
    again = CnnArchitecture.from_dict(arch.to_dict())
    assert again == arch
    m = CnnModel(again, seed=0)
    assert m.post_pool_length == 2
