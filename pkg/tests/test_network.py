import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asne.cells import CELL_KINDS, CellKind, init_params
from asne.colony import NodeId
from asne.dataio import mae
from asne.genome import RnnGenome
from asne.network import (
    TrainerConfig,
    bptt_gradients,
    forward_pass,
    loss_and_gradient,
    nesterov_step,
    plan,
    predict_theta,
    rescale_or_boost,
    train,
)
from asne.exceptions import ConfigurationError
from factories import genome_fd_error, random_genome, random_series

I0, I1 = NodeId(0, 0), NodeId(0, 1)


def two_node(w, b):
    o = NodeId(1, 0)
    return RnnGenome({I0: CellKind.SIMPLE, o: CellKind.SIMPLE}, {(I0, o): w}, {},
                     {o: np.array([b])}, 1)


def test_plan_orders():
    assert plan(two_node(0.3, 0.0)).order == [I0, NodeId(1, 0)]
    g = random_genome(np.random.default_rng(4), recurrent=False)
    layers = [n.layer for n in plan(g).order]
    assert layers == sorted(layers)


def test_plan_records_recurrent_dependency():
    o = NodeId(1, 0)
    g = RnnGenome({I0: CellKind.SIMPLE, o: CellKind.SIMPLE}, {(I0, o): 1.0}, {(o, o, 2): 0.5},
                  {o: np.zeros(1)}, 1)
    p = plan(g)
    assert p.recurrent_dependencies() == [(o, o, 2)] and p.max_skip == 2


def test_zero_parameters_predict_zero():
    g = random_genome(np.random.default_rng(1))
    g = g.with_params(np.zeros(g.n_weights))
    X, _ = random_series(np.random.default_rng(2), g, 12)
    assert np.all(forward_pass(plan(g), g, X) == 0.0)


def test_two_node_closed_form():
    w, b = 0.7, -0.2
    X = np.linspace(-1, 1, 9)[:, None]
    np.testing.assert_allclose(forward_pass(plan(two_node(w, b)), two_node(w, b), X),
                               np.tanh(w * X[:, 0] + b), rtol=0, atol=1e-15)


def test_single_step_ignores_recurrent_edges():
    rng = np.random.default_rng(5)
    g = random_genome(rng)
    bare = RnnGenome(g.nodes, g.forward, {}, g.params, g.output_layer)
    X, _ = random_series(rng, g, 1)
    assert forward_pass(plan(g), g, X)[0] == forward_pass(plan(bare), bare, X)[0]


def test_zero_residual_gives_zero_gradient():
    rng = np.random.default_rng(6)
    g = random_genome(rng)
    X, _ = random_series(rng, g, 10)
    y = forward_pass(plan(g), g, X)
    assert not np.any(bptt_gradients(plan(g), g, X, y))


@pytest.mark.parametrize("kind", CELL_KINDS)
def test_bptt_matches_finite_differences(kind):
    rng = np.random.default_rng(50 + kind.code)
    for _ in range(25):
        g = random_genome(rng, kinds=[kind])
        X, y = random_series(rng, g, int(rng.integers(2, 21)))
        assert genome_fd_error(plan(g), g.flat_params(), X, y) < 1e-4


def test_state_carries_across_the_sequence():
    rng = np.random.default_rng(8)
    g = random_genome(rng, kinds=[CellKind.LSTM])
    g.recurrent[(g.output_nodes[0], g.output_nodes[0], 1)] = 0.8
    p = plan(g)
    X, y = random_series(rng, g, 8)
    whole = predict_theta(p, g.flat_params(), np.vstack([X, X]))
    halves = np.concatenate([predict_theta(p, g.flat_params(), X)] * 2)
    assert not np.allclose(whole, halves)
    assert np.array_equal(whole[:8], halves[:8])


def test_rescale_examples():
    np.testing.assert_allclose(rescale_or_boost(np.array([3.0, 4.0]), 1.0, 0.05), [0.6, 0.8])
    g = np.array([0.3, 0.4])
    assert np.array_equal(rescale_or_boost(g, 1.0, 0.05), g)
    np.testing.assert_allclose(rescale_or_boost(np.array([0.003, 0.004]), 1.0, 0.05), [0.03, 0.04])
    assert np.array_equal(rescale_or_boost(np.zeros(3)), np.zeros(3))


@given(st.lists(st.floats(-1e3, 1e3, allow_subnormal=False), min_size=1, max_size=12))
def test_rescale_preserves_direction(values):
    g = np.array(values)
    out = rescale_or_boost(g, 1.0, 0.05)
    norm = np.linalg.norm(g)
    if norm == 0:  # zero, or so small its square underflows
        assert np.array_equal(out, g)
        return
    scale = np.linalg.norm(out) / norm
    np.testing.assert_allclose(out, scale * g, rtol=1e-12, atol=1e-300)
    assert np.linalg.norm(out) <= 1.0 + 1e-12
    if norm > 1e-150:
        assert np.linalg.norm(out) >= min(norm, 0.05) * (1 - 1e-12)


@given(st.integers(0, 10_000))
def test_nesterov_without_momentum_is_sgd(seed):
    rng = np.random.default_rng(seed)
    theta, vel, grad = rng.normal(size=(3, 7))
    new, _ = nesterov_step(theta, np.zeros(7), grad, 0.01, 0.0)
    assert np.array_equal(new, theta - 0.01 * grad)
    new_v, v = nesterov_step(theta, vel, grad, 0.01, 0.0)
    assert np.array_equal(new_v, theta - 0.01 * grad) and np.array_equal(v, -0.01 * grad)


def test_nesterov_lookahead_form():
    theta, v, g = np.array([1.0]), np.array([0.5]), np.array([2.0])
    new, nv = nesterov_step(theta, v, g, 0.1, 0.9)
    assert nv[0] == pytest.approx(0.9 * 0.5 - 0.2)
    assert new[0] == pytest.approx(1.0 - 0.45 + 1.9 * nv[0])


def test_trainer_config_validation():
    with pytest.raises(ConfigurationError):
        TrainerConfig(epochs=0)
    with pytest.raises(ConfigurationError):
        TrainerConfig(boost_threshold=2.0)
    with pytest.raises(ConfigurationError):
        TrainerConfig(momentum=1.0)


def test_one_epoch_returns_post_step_parameters():
    rng = np.random.default_rng(9)
    g = random_genome(rng)
    X, y = random_series(rng, g, 15)
    cfg = TrainerConfig(epochs=1)
    result = train(g, (X, y), (X, y), cfg)
    _, grad = loss_and_gradient(plan(g), g.flat_params(), X, y)
    step, _ = nesterov_step(g.flat_params(), np.zeros(g.n_weights),
                            rescale_or_boost(grad, 1.0, 0.05), cfg.learning_rate, cfg.momentum)
    assert np.array_equal(result.genome.flat_params(), step)


def test_perfect_constant_fit_is_left_alone():
    g = two_node(0.0, 0.3)
    X = np.zeros((10, 1))
    y = np.full(10, math.tanh(0.3))
    result = train(g, (X, y), (X, y), TrainerConfig(epochs=3))
    assert result.fitness == 0.0
    assert np.array_equal(result.genome.flat_params(), g.flat_params())


def test_returned_fitness_is_best_epoch():
    rng = np.random.default_rng(10)
    g = random_genome(rng)
    X, y = random_series(rng, g, 30)
    Xv, yv = random_series(rng, g, 30)
    result = train(g, (X, y), (Xv, yv), TrainerConfig(epochs=8, learning_rate=0.05))
    assert result.fitness == min(result.history) and len(result.history) == 8
    assert mae(forward_pass(plan(result.genome), result.genome, Xv), yv) == result.fitness


def three_hidden_explorer_genome(rng, width):
    inputs = [NodeId(0, k) for k in range(width)]
    hidden = [NodeId(1, k) for k in range(3)]
    out = NodeId(2, 0)
    kinds = {n: CELL_KINDS[int(rng.integers(len(CELL_KINDS)))] for n in hidden}
    nodes = {**{n: CellKind.SIMPLE for n in inputs}, **kinds, out: CellKind.SIMPLE}
    forward = {(i, h): 0.0 for i in inputs for h in hidden}
    forward.update({(h, out): 0.0 for h in hidden})
    forward = {k: float(rng.uniform(-0.5, 0.5)) for k in forward}
    params = {n: init_params(k, rng) for n, k in nodes.items() if n.layer > 0}
    return RnnGenome(nodes, forward, {}, params, 2).validate()


def test_training_improves_small_explorer_genomes(sine_data):
    improved = 0
    for seed in range(10):
        g = three_hidden_explorer_genome(np.random.default_rng(seed), sine_data.input_width)
        before = mae(forward_pass(plan(g), g, sine_data.X_val), sine_data.y_val)
        after = train(g, sine_data.train, sine_data.validation).fitness
        improved += after < before
    assert improved >= 9
