import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcl_lrr.classifier import (
    accuracy,
    closed_form_residual,
    contraction_factors,
    default_step_size,
    kl_loss,
    mse_gd_trajectory,
    predict_labels,
    top_eigenvalue,
    train_transductive,
    write_predictions,
)
from gcl_lrr.errors import ConfigError, ContractError
from gcl_lrr.graph import NoisyLabels, SplitSpec, one_hot, sample_split
from gcl_lrr.spectral import gram
from helpers import FD_RTOL, central_diff, rel_err


def random_problem(seed, n=12, d=4, c=3, m=6, noisy=True):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((n, d))
    clean = one_hot(rng.integers(0, c, n), c)
    obs = one_hot(rng.integers(0, c, n), c) if noisy else clean
    return h, NoisyLabels.from_observed(obs, clean), sample_split(n, m, seed)


# ---------------------------------------------------------------- KL classifier


def test_zero_epochs_uniform():
    h, labels, split = random_problem(0)
    state, probs = train_transductive(h, labels, split, epochs=0)
    np.testing.assert_allclose(probs, 1 / 3)
    assert state.iterations_done == 0


def test_separable_clouds_fit_perfectly():
    rng = np.random.default_rng(1)
    h = np.vstack([rng.normal([5, 0, 1], 0.3, (20, 3)), rng.normal([0, 5, 1], 0.3, (20, 3))])
    y = one_hot(np.repeat([0, 1], 20), 2)
    split = sample_split(40, 20, 2)
    _, probs = train_transductive(h, NoisyLabels.from_observed(y, y), split, epochs=500)
    pred = predict_labels(probs, split.labeled)
    assert accuracy(pred, y, split.labeled) == 1.0


@pytest.mark.parametrize("scale", [0.0, 1.0, 1.5, -0.1])
def test_step_size_precondition(scale):
    h, labels, split = random_problem(0)
    with pytest.raises(ConfigError):
        train_transductive(h, labels, split, eta=scale / top_eigenvalue(h))


def test_default_step_size(rng):
    h = rng.standard_normal((7, 3))
    assert default_step_size(h) == pytest.approx(0.9 / np.linalg.eigvalsh(h @ h.T).max())
    with pytest.raises(ConfigError):
        default_step_size(np.zeros((3, 2)))


def test_kl_gradient():
    h, labels, split = random_problem(3)
    w = np.random.default_rng(3).standard_normal((4, 3))
    _, g = kl_loss(h, w, labels.observed, split.labeled)
    fd = central_diff(lambda x: kl_loss(h, x, labels.observed, split.labeled)[0], w)
    assert rel_err(g, fd) <= FD_RTOL


def test_kl_loss_decreases():
    h, labels, split = random_problem(4)
    state, _ = train_transductive(h, labels, split, epochs=300, patience=10**9)
    assert np.all(np.diff(state.loss_trace) <= 1e-12)


def test_early_stop_on_plateau():
    h, labels, split = random_problem(5)
    state, _ = train_transductive(h, labels, split, epochs=100_000, min_delta=1e-3)
    assert state.iterations_done < 100_000


def test_validation_restores_best_weights():
    h, labels, split = random_problem(6, n=30, m=20)
    val = split.labeled[:5]
    state, probs = train_transductive(h, labels, split, epochs=200, validation=val)
    np.testing.assert_allclose(probs.sum(1), 1.0)
    assert len(state.loss_trace) == state.iterations_done


def test_validation_cannot_cover_training():
    h, labels, split = random_problem(6)
    with pytest.raises(ConfigError):
        train_transductive(h, labels, split, validation=split.labeled)


def test_shape_contract():
    h, labels, split = random_problem(0)
    with pytest.raises(ContractError):
        train_transductive(h[:5], labels, split)


# ---------------------------------------------------------------- predictions


def test_predict_basic():
    assert predict_labels(np.array([[0.1, 0.7, 0.2]])).tolist() == [1]


def test_predict_ties_go_low():
    assert predict_labels(np.array([[0.5, 0.5]])).tolist() == [0]
    assert predict_labels(np.full((4, 3), 1 / 3)).tolist() == [0, 0, 0, 0]


def test_predict_subset():
    p = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]])
    assert predict_labels(p, [2, 1]).tolist() == [0, 1]


def test_write_predictions(tmp_path):
    y = one_hot([0, 1, 1], 2)
    write_predictions(tmp_path / "p.csv", np.array([0, 0, 1]), y, y, SplitSpec([0], [1, 2]))
    assert (tmp_path / "p.csv").read_text().splitlines() == [
        "node,predicted,observed,clean,is_test", "0,0,0,0,0", "1,0,1,1,1", "2,1,1,1,1"]


# ---------------------------------------------------------------- MSE trajectory


def test_trajectory_start():
    h, labels, split = random_problem(0)
    tr = mse_gd_trajectory(h, labels, split, default_step_size(h), 0)
    np.testing.assert_array_equal(tr.labeled[0], -labels.clean[split.labeled])


def test_trajectory_identity_kernel():
    # K_LL = I_4 plus one orthogonal test node
    h = np.eye(5)
    y = one_hot([0, 1, 2, 0, 0], 3)
    split = SplitSpec([0, 1, 2, 3], [4])
    # lambda_1(H H^T) is 1, so eta = 0.5 is admissible
    tr = mse_gd_trajectory(h, NoisyLabels.from_observed(y, y), split, 0.5, 2)
    assert np.sum(tr.labeled[2] ** 2) == pytest.approx(0.0625 * np.sum(y[:4] ** 2))


@pytest.mark.parametrize("seed", range(5))
def test_trajectory_matches_closed_form(seed):
    h, labels, split = random_problem(seed, n=15, d=5, m=8)
    eta = default_step_size(h)
    tr = mse_gd_trajectory(h, labels, split, eta, 50)
    lab = split.labeled
    k_ll = gram(h[lab])
    for t in (0, 1, 7, 50):
        cf = closed_form_residual(k_ll, labels.clean[lab], labels.noise[lab], eta, t)
        assert np.max(np.abs(tr.labeled[t] - cf)) <= 1e-8


def test_closed_form_t_zero(rng):
    k = gram(rng.standard_normal((4, 2)))
    y = one_hot([0, 1, 0, 1], 2)
    eta = 0.5 / np.linalg.eigvalsh(k).max()
    np.testing.assert_allclose(closed_form_residual(k, y, np.zeros_like(y), eta, 0), -y, atol=1e-12)


def test_closed_form_geometric_decay(rng):
    a = rng.standard_normal((5, 5))
    k = a @ a.T + 0.5 * np.eye(5)
    y = one_hot([0, 1, 2, 0, 1], 3)
    eta = 0.9 / np.linalg.eigvalsh(k).max()
    r = closed_form_residual(k, y, np.zeros_like(y), eta, 1000)
    assert np.linalg.norm(r) < 1e-6


def test_closed_form_shape_mismatch():
    with pytest.raises(ContractError):
        closed_form_residual(np.eye(3), np.zeros((2, 2)), np.zeros((3, 2)), 0.5, 1)


def test_contraction_factor_bounds():
    with pytest.raises(ConfigError):
        contraction_factors(np.eye(2), 1.0, 3)
    _, decay = contraction_factors(np.eye(2), 1.0, 3, strict=False)
    np.testing.assert_array_equal(decay, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 30), st.floats(0.05, 0.95))
def test_closed_form_matches_naive_recursion(seed, t, scale):
    rng = np.random.default_rng(seed)
    hl = rng.standard_normal((5, 3))
    k = gram(hl)
    eta = scale / np.linalg.eigvalsh(k).max()
    y = one_hot(rng.integers(0, 2, 5), 2)
    n = one_hot(rng.integers(0, 2, 5), 2) - y
    # residual of f = K a with a <- a - eta (K a - (y + n))
    a = np.zeros_like(y)
    for _ in range(t):
        a = a - eta * (k @ a - (y + n))
    np.testing.assert_allclose(closed_form_residual(k, y, n, eta, t), k @ a - y, atol=1e-9)
