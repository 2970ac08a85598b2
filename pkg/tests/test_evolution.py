import math
from dataclasses import replace
from collections import deque

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asne.colony import ColonyConfig, build_colony
from asne.evolution import (
    EvolutionConfig,
    PhiMode,
    Population,
    ProcessPool,
    SerialPool,
    ShuffledPool,
    WorkerResult,
    compute_phi,
    initial_state,
    lamarck_update,
    load_checkpoint,
    master_loop,
    process_result,
    reference_loop,
    reward_paths,
    train_task,
)
from asne.exceptions import ConfigurationError
from asne.network import TrainerConfig
from asne.pheromone import PheromoneScheme, Reward, evaporate_colony
from asne.traversal import AntSpecies, ants_swarm, genome_edge_indices

SMALL = ColonyConfig(3, 2, 4, max_skip=2)
FAST = EvolutionConfig(ants=8, max_iterations=12, population_size=5,
                       trainer=TrainerConfig(epochs=2))


def make_genome(colony, seed, fitness=None):
    genome = ants_swarm(colony, AntSpecies.EXPLORER_FORWARD, 8, "aj",
                        np.random.default_rng(seed)).genome
    genome.fitness = fitness
    return genome


def test_phi_examples():
    assert compute_phi(0.2, 0.2, 0.8) == 1.0
    assert compute_phi(0.8, 0.2, 0.8) == 0.0
    assert compute_phi(0.5, 0.2, 0.8) == pytest.approx(0.5)
    assert compute_phi(0.4, 0.4, 0.4) == 1.0
    assert compute_phi(2.0, 0.2, 0.8) == 0.0 and compute_phi(0.1, 0.2, 0.8) == 1.0


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
def test_phi_in_unit_interval(a, b, c):
    best, worst = sorted((b, c))
    assert 0.0 <= compute_phi(a, best, worst) <= 1.0


def test_phi_mode_parsing():
    assert PhiMode.parse("fn").kind == "function"
    assert PhiMode.parse("off").enabled is False
    assert PhiMode.parse("0.6").value == 0.6 and PhiMode.parse("0.6").flag == "0.6"
    with pytest.raises(ConfigurationError):
        PhiMode.parse("1.5")
    with pytest.raises(ConfigurationError):
        PhiMode.parse("sometimes")


def test_lamarck_update_examples():
    colony = build_colony(SMALL, np.random.default_rng(0))
    genome = make_genome(colony, 1)
    edges = genome_edge_indices(colony, genome)
    before = colony.weight.copy()
    trained = genome.with_params(genome.flat_params() + 0.4)
    lamarck_update(colony, trained, 0.0)
    assert np.array_equal(colony.weight, before)
    lamarck_update(colony, trained, 1.0)
    np.testing.assert_array_equal(colony.weight[edges], trained.flat_params()[: len(edges)])
    untouched = np.setdiff1d(np.arange(colony.n_edges), edges)
    assert np.array_equal(colony.weight[untouched], before[untouched])

    e = edges[0]
    colony.weight[e] = 0.2
    half = trained.with_params(np.full(trained.n_weights, 0.6))
    lamarck_update(colony, half, 0.5)
    assert colony.weight[e] == pytest.approx(0.4)


@given(seed=st.integers(0, 1000), phi=st.floats(0, 1))
def test_lamarck_update_is_convex(seed, phi):
    colony = build_colony(SMALL, np.random.default_rng(seed))
    genome = make_genome(colony, seed)
    trained = genome.with_params(np.random.default_rng(seed + 1).normal(size=genome.n_weights))
    edges = genome_edge_indices(colony, genome)
    old = colony.weight[edges].copy()
    new = trained.flat_params()[: len(edges)]
    lamarck_update(colony, trained, phi)
    lo, hi = np.minimum(old, new), np.maximum(old, new)
    w = colony.weight[edges]
    assert np.all((w >= lo - 1e-15) & (w <= hi + 1e-15))


def test_reward_constant_and_footprint():
    colony = build_colony(SMALL, np.random.default_rng(0))
    genome = make_genome(colony, 2, fitness=0.3)
    tau, cells = colony.pheromone.copy(), colony.cell_pheromone.copy()
    touched = reward_paths(colony, genome, PheromoneScheme(Reward.CONSTANT, constant=0.15))
    changed = set(np.flatnonzero(colony.pheromone != tau).tolist())
    assert changed == set(touched["edges"]) == set(genome_edge_indices(colony, genome))
    np.testing.assert_allclose(colony.pheromone[touched["edges"]], tau[touched["edges"]] + 0.15)
    cell_changed = {tuple(x) for x in np.argwhere(colony.cell_pheromone != cells).tolist()}
    hidden = {(colony.node_index[n], k.code) for n, k in genome.nodes.items()
              if 0 < n.layer < genome.output_layer}
    assert cell_changed == set(touched["nodes"]) == hidden


def test_two_fitness_rewards_compose():
    colony = build_colony(SMALL, np.random.default_rng(0))
    genome = make_genome(colony, 3, fitness=0.5)
    e = genome_edge_indices(colony, genome)[0]
    scheme = PheromoneScheme(Reward.FITNESS, alpha=0.05)
    reward_paths(colony, genome, scheme)
    reward_paths(colony, genome, scheme)
    a = 0.05
    assert colony.pheromone[e] == pytest.approx((1 - a) ** 2 * 1.0 + (1 - (1 - a) ** 2) * 2.0)


@given(st.lists(st.floats(0, 5), max_size=60), st.integers(1, 8))
def test_population_sorted_and_bounded(fits, capacity):
    colony = build_colony(SMALL, np.random.default_rng(0))
    base = make_genome(colony, 0)
    pop = Population(capacity)
    for f in fits:
        g = base.with_params(base.flat_params())
        g.fitness = f
        worst = pop.worst.fitness if pop.full else None
        entered = pop.insert(g)
        if worst is not None:
            assert entered == (f < worst)
        pop.check()
    assert sorted(m.fitness for m in pop.members) == sorted(fits)[:capacity]


def test_population_rejects_non_finite():
    colony = build_colony(SMALL, np.random.default_rng(0))
    g = make_genome(colony, 0, fitness=math.inf)
    assert not Population(3).insert(g)


def test_rejected_genome_leaves_pheromones_to_evaporation(sine_data):
    state = initial_state(ColonyConfig(3, 2, 4, max_skip=2), FAST, 0)
    g = make_genome(state.colony, 0)
    for f in [0.1] * FAST.population_size:
        h = g.with_params(g.flat_params())
        h.fitness = f
        state.population.insert(h)
    expected = state.colony.copy()
    evaporate_colony(expected, FAST.beta)
    loser = g.with_params(g.flat_params() + 1.0)
    loser.fitness = 0.9
    row = process_result(state, WorkerResult(0, loser, 0.9, 2), FAST)
    assert row["entered"] == 0 and row["phi"] == ""
    assert state.colony.state_equal(expected)


class StubPool:
    """Every genome comes back untouched with the same fitness."""

    capacity = 1

    def __init__(self, fitness=0.5):
        self.fitness = fitness
        self.queue = deque()

    def submit(self, job, genome):
        self.queue.append(genome)

    def next_result(self):
        g = self.queue.popleft()
        trained = g.with_params(g.flat_params())
        trained.fitness = self.fitness
        return WorkerResult(g.generation, trained, self.fitness, 0)

    def pending(self):
        return list(self.queue)

    def state(self):
        return {}

    def restore(self, state):
        pass

    def close(self):
        pass


def test_equal_fitness_fills_population_then_freezes(sine_data):
    cfg = replace(FAST, max_iterations=50, phi=PhiMode("off"))
    state = initial_state(ColonyConfig(3, 2, 4, max_skip=2), cfg, 0)
    sizes, deviation = [], []

    def watch(st, row):
        sizes.append(len(st.population))
        deviation.append(np.abs(st.colony.pheromone - 1.0).max())

    result = master_loop(state, cfg, sine_data, StubPool(), on_result=watch)
    entered = [r["entered"] for r in result.rows]
    assert entered == [1] * cfg.population_size + [0] * (50 - cfg.population_size)
    assert sizes[-1] == cfg.population_size
    tail = deviation[cfg.population_size:]
    assert all(b <= a for a, b in zip(tail, tail[1:])) and tail[-1] < tail[0]


def test_train_task_never_raises(sine_data):
    colony = build_colony(ColonyConfig(sine_data.input_width, 1, 3), np.random.default_rng(0))
    genome = make_genome(colony, 0)
    bad = replace(sine_data, X_train=np.full_like(sine_data.X_train, np.nan))
    result = train_task(genome, bad, TrainerConfig(epochs=2))
    assert result.fitness == math.inf and result.error


def test_config_validation():
    with pytest.raises(ConfigurationError):
        EvolutionConfig(beta=0.0)
    with pytest.raises(ConfigurationError):
        EvolutionConfig(ants=0)
    with pytest.raises(ConfigurationError):
        EvolutionConfig(lamarck_gate="sometimes")


def run(data, pool=None, cfg=FAST, seed=0, **kw):
    state = initial_state(ColonyConfig(data.input_width, 2, 4, max_skip=2), cfg, seed)
    return master_loop(state, cfg, data, pool, **kw)


def test_serial_equals_reference(sine_data):
    a = run(sine_data)
    state = initial_state(ColonyConfig(sine_data.input_width, 2, 4, max_skip=2), FAST, 0)
    b = reference_loop(state, FAST, sine_data)
    assert a.rows == b.rows and a.colony.state_equal(b.colony)
    assert run(sine_data, ShuffledPool(1, seed=5)).rows == a.rows


@pytest.mark.parametrize("species", list(AntSpecies))
@pytest.mark.parametrize("gate", ["population", "always"])
def test_invariants_under_shuffled_arrival(sine_data, species, gate):
    cfg = replace(FAST, species=species, lamarck_gate=gate, max_iterations=10)
    best = []

    def check(st, row):
        st.population.check()
        best.append(st.best_so_far)
        c = st.colony
        assert np.all((c.pheromone >= 0.05) & (c.pheromone <= 20.0))

    result = run(sine_data, ShuffledPool(3, seed=1), cfg, on_result=check)
    assert len(result.rows) == 10 and result.finished
    assert all(b <= a for a, b in zip(best, best[1:]))


def test_resume_reproduces_tail(sine_data, tmp_path):
    full = run(sine_data, ShuffledPool(2, seed=4))
    ckpt = tmp_path / "ckpt.json"
    partial = run(sine_data, ShuffledPool(2, seed=4), checkpoint_path=ckpt,
                  checkpoint_every=5, stop_after=7)
    assert not partial.finished
    state, pending, pool_state = load_checkpoint(ckpt)
    assert state.processed == 5
    pool = ShuffledPool(2)
    pool.restore(pool_state)
    resumed = master_loop(state, FAST, sine_data, pool, pending=pending)
    assert resumed.rows == full.rows
    assert resumed.colony.state_equal(full.colony)


class FifoPool(SerialPool):
    def __init__(self, n):
        super().__init__()
        self.capacity = n


def test_process_pool_matches_in_process_fifo(sine_data):
    cfg = replace(FAST, max_iterations=6)
    pool = ProcessPool(2, ordered=True)
    try:
        real = run(sine_data, pool, cfg)
    finally:
        pool.close()
    assert real.rows == run(sine_data, FifoPool(2), cfg).rows
