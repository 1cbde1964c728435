import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tripperm.dataset import synth_dataset
from tripperm.embedding import EmbeddingModel, identity_model, init_model
from tripperm.errors import ConfigError, DimensionError, DivergenceError, KinkError, ReidError
from tripperm.trainer import (
    TrainConfig, batch_gradient, grad_check, indexed_loss_and_grad, train, triplet_loss,
    violation_fraction,
)
from tripperm.tripletgen import enumerate_triplets

from oracles import central_differences, naive_sq_dist


def test_loss_satisfied():
    m = identity_model(2)
    assert triplet_loss(m, [0, 0], [0, 0], [2, 0], 1.0) == 0.0


def test_loss_tie_equals_margin():
    m = identity_model(2)
    assert triplet_loss(m, [0, 0], [1, 0], [0, 1], 0.5) == 0.5


def test_loss_hand_arithmetic():
    m = identity_model(2)
    assert triplet_loss(m, [0, 0], [2, 0], [1, 0], 1.0) == 4.0


def test_loss_boundary_counts_as_satisfied():
    # d_neg - d_pos == tau exactly
    m = identity_model(1)
    assert triplet_loss(m, [0.0], [1.0], [2.0], 3.0) == 0.0


def test_loss_dimension_error():
    with pytest.raises(DimensionError):
        triplet_loss(identity_model(2), [0, 0, 0], [0, 0, 0], [0, 0, 0], 1.0)


@given(
    a=st.lists(st.integers(-5, 5), min_size=2, max_size=2),
    p=st.lists(st.integers(-5, 5), min_size=2, max_size=2),
    n=st.lists(st.integers(-5, 5), min_size=2, max_size=2),
    tau=st.integers(1, 8),
)
@settings(max_examples=300)
def test_hinge_zero_iff_slack_at_least_tau(a, p, n, tau):
    # integer coordinates make ties exact
    loss = triplet_loss(identity_model(2), a, p, n, float(tau))
    slack = naive_sq_dist(a, n) - naive_sq_dist(a, p)
    assert (loss == 0.0) == (slack >= tau)
    assert loss == max(0.0, tau - slack)


def test_all_satisfied_batch_has_zero_gradient(rng):
    m = init_model("linear", 3, 3, seed=0, scale=0.5)
    A = rng.standard_normal((4, 3))
    N = A + 100.0
    g = batch_gradient(m.with_params(np.r_[np.eye(3).ravel(), np.zeros(3)]), A, A, N, 1.0)
    assert np.all(g == 0.0)


def test_empty_batch_rejected():
    m = identity_model(2)
    with pytest.raises(ValueError):
        batch_gradient(m, np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)), 1.0)


def test_duplicated_triplet_gradient(rng):
    m = init_model("two_layer", 3, 2, hidden=4, seed=1, scale=1.0)
    a, p, n = rng.standard_normal((3, 3))
    one = batch_gradient(m, [a], [p], [n], 5.0)
    many = batch_gradient(m, [a] * 6, [p] * 6, [n] * 6, 5.0)
    assert np.allclose(one, many, rtol=1e-12, atol=1e-15)


def test_single_triplet_gradient_vs_fd_linear(rng):
    m = init_model("linear", 4, 3, seed=2, scale=0.5)
    a, p, n = rng.standard_normal((3, 4))
    tau = 10.0
    g = batch_gradient(m, [a], [p], [n], tau)
    f = lambda w: triplet_loss(m.with_params(w), a, p, n, tau)
    assert f(m.params) > 0
    fd = central_differences(f, m.params.copy(), 1e-5)
    assert np.max(np.abs(g - fd) / np.maximum(1, np.abs(g))) < 1e-6


def test_batch_gradient_is_mean(rng):
    m = init_model("linear", 3, 2, seed=3, scale=0.5)
    A, P, N = rng.standard_normal((3, 5, 3))
    full = batch_gradient(m, A, P, N, 3.0)
    parts = [batch_gradient(m, A[i:i + 1], P[i:i + 1], N[i:i + 1], 3.0) for i in range(5)]
    assert np.allclose(full, np.mean(parts, axis=0), rtol=1e-12, atol=1e-15)


def test_indexed_path_matches_stacked(rng):
    ds = synth_dataset(4, 0, d=3, view_shift=[1, 0, 0], noise_sigma=0.3, seed=0)
    ts = enumerate_triplets(ds, "III")
    m = init_model("two_layer", 3, 2, hidden=5, seed=0, scale=0.5)
    X = ds.matrix
    idx = ts.indices[:10]
    _, g_idx = indexed_loss_and_grad(m, X, idx, 1.0)
    g_stack = batch_gradient(m, X[idx[:, 0]], X[idx[:, 1]], X[idx[:, 2]], 1.0)
    assert np.allclose(g_idx, g_stack, rtol=1e-12, atol=1e-14)


def _random_checkable(rng, kind, hidden):
    while True:
        m = init_model(kind, 4, 3, hidden=hidden, seed=int(rng.integers(1 << 30)), scale=1.0)
        a, p, n = rng.standard_normal((3, 4))
        try:
            return grad_check(m, (a, p, n), tau=5.0, step=1e-5)
        except KinkError:
            continue


def test_grad_check_linear(rng):
    for _ in range(20):
        assert _random_checkable(rng, "linear", None) < 1e-6


def test_grad_check_two_layer(rng):
    for _ in range(20):
        assert _random_checkable(rng, "two_layer", 6) < 1e-5


def test_grad_check_rejects_zero_loss():
    m = identity_model(2)
    with pytest.raises(KinkError):
        grad_check(m, ([0, 0], [0, 0], [5, 0]), tau=1.0)


def test_grad_check_rejects_relu_kink():
    params = np.zeros(2 * 1 + 2 + 1 * 2 + 1)
    params[:2] = [1.0, 0.0]  # first hidden unit sees x0; second is dead at exactly 0
    params[6] = 1.0
    m = EmbeddingModel("two_layer", 1, 1, params, hidden=2)
    with pytest.raises(KinkError):
        grad_check(m, ([1.0], [5.0], [1.5]), tau=1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(margin_tau=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=float("nan"))
    assert TrainConfig().batch_size == 64


def test_zero_learning_rate_is_noop(zero_noise_12):
    m0 = init_model("linear", 8, 4, seed=0)
    rep = train(zero_noise_12, "II", m0, TrainConfig(learning_rate=0.0, epochs=4, batch_size=10))
    assert rep.final_model == m0
    assert np.allclose(rep.loss_history, rep.loss_history[0], rtol=1e-12, atol=0)
    assert len(set(rep.violation_history)) == 1


def test_training_deterministic(zero_noise_12):
    m0 = init_model("two_layer", 8, 4, hidden=6, seed=0, scale=0.3)
    cfg = TrainConfig(learning_rate=0.02, epochs=5, batch_size=16, seed=3)
    assert train(zero_noise_12, "III", m0, cfg) == train(zero_noise_12, "III", m0, cfg)


def test_training_reaches_zero_violations_and_loss_drops(zero_noise_12):
    m0 = init_model("linear", 8, 8, seed=0, scale=0.3)
    rep = train(zero_noise_12, "I", m0, TrainConfig(epochs=150, learning_rate=0.05))
    assert len(rep.loss_history) == len(rep.violation_history) == 150
    assert all(0.0 <= v <= 1.0 for v in rep.violation_history)
    assert rep.loss_history[-1] < rep.loss_history[0]
    assert rep.final_violation == 0.0
    ts = enumerate_triplets(zero_noise_12, "I")
    assert violation_fraction(rep.final_model, ts, 1.0) == 0.0


def test_divergence_reported(zero_noise_12):
    m0 = init_model("linear", 8, 8, seed=0, scale=1.0)
    with pytest.raises(DivergenceError) as info:
        train(zero_noise_12, "III", m0, TrainConfig(epochs=50, learning_rate=1e6))
    assert "epoch" in str(info.value)


def test_empty_triplet_set_rejected():
    ds = synth_dataset(1, 0, d=2, seed=0)
    with pytest.raises(ReidError):
        train(ds, "I", init_model("linear", 2, 2), TrainConfig(epochs=1))


def test_report_json(tmp_path, zero_noise_12):
    rep = train(zero_noise_12, "I", init_model("linear", 8, 2), TrainConfig(epochs=2))
    rep.save_json(tmp_path / "r.json", model_path="model.txt")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["config"]["batch_size"] == 64
    assert data["formulation"] == "I" and data["n_triplets"] == 132
    assert len(data["loss_history"]) == 2 and data["final_model"] == "model.txt"
