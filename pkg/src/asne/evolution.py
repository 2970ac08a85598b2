"""The master loop: generate genomes, train them on workers, feed results back.

The master owns the colony and the population. Workers only ever see value
copies of genomes and send back trained copies, so a worker pool can be a
plain function call, a simulated pool with adversarial arrival order, or a
process pool.
"""
from __future__ import annotations

import bisect
import csv
import json
import logging
import math
import os
from collections import deque
from concurrent.futures import FIRST_COMPLETED, Future, ProcessPoolExecutor, wait
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Callable, Protocol

import numpy as np

from .cells import CELL_KINDS
from .colony import Colony, JumpMode, build_colony, ColonyConfig
from .dataio import Dataset
from .exceptions import ASNEError, ConfigurationError
from .genome import RnnGenome
from .network import TrainerConfig, train
from .pheromone import PheromoneScheme, Reward, apply_forward_bias, deposit, evaporate_colony
from .traversal import AntSpecies, ants_swarm, genome_edge_indices

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


# -- inheritance coefficient ------------------------------------------------
@dataclass(frozen=True)
class PhiMode:
    """How strongly trained weights overwrite the colony's Lamarckian weights."""

    kind: str = "function"  # "function" | "constant" | "off"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("function", "constant", "off"):
            raise ConfigurationError(f"unknown phi mode {self.kind!r}")
        if self.kind == "constant" and not 0.0 < self.value <= 1.0:
            raise ConfigurationError("constant phi must lie in (0, 1]")

    @classmethod
    def parse(cls, text: str) -> "PhiMode":
        text = str(text).strip().lower()
        if text in ("fn", "function"):
            return cls("function")
        if text in ("off", "none", "disabled"):
            return cls("off")
        try:
            return cls("constant", float(text))
        except ValueError:
            raise ConfigurationError(f"cannot parse phi mode {text!r}") from None

    @property
    def enabled(self) -> bool:
        return self.kind != "off"

    @property
    def flag(self) -> str:
        return {"function": "fn", "off": "off"}.get(self.kind, f"{self.value:g}")

    @property
    def label(self) -> str:
        return {"function": "Phi()", "off": "NoPhi"}.get(self.kind, f"Phi_{self.value:g}")


def compute_phi(fit_new: float, fit_best: float, fit_worst: float) -> float:
    if fit_worst == fit_best:
        return 1.0
    x = (fit_new - fit_best) / (fit_worst - fit_best)
    return min(max(1.0 - x, 0.0), 1.0)


def lamarck_update(colony: Colony, genome: RnnGenome, phi: float) -> list[int]:
    """Blend trained genome weights into the colony; returns touched edge indices."""
    edges = genome_edge_indices(colony, genome)
    trained = np.concatenate([
        np.fromiter(genome.forward.values(), dtype=np.float64, count=len(genome.forward)),
        np.fromiter(genome.recurrent.values(), dtype=np.float64, count=len(genome.recurrent)),
    ])
    idx = np.array(edges, dtype=np.int64)
    colony.weight[idx] = phi * trained + (1.0 - phi) * colony.weight[idx]
    for node, p in genome.params.items():
        table = colony.cell_params[genome.nodes[node]]
        row = colony.node_index[node]
        table[row] = phi * p + (1.0 - phi) * table[row]
    return edges


def reward_paths(colony: Colony, genome: RnnGenome, scheme: PheromoneScheme) -> dict:
    """Deposit pheromone on every genome edge and on each hidden node's chosen cell kind."""
    weights = genome.flat_params()
    fitness = float(genome.fitness)
    lo, hi = colony.config.tau_min, colony.config.tau_max
    edges = genome_edge_indices(colony, genome)
    tau = colony.pheromone
    for e in edges:
        tau[e] = min(max(deposit(scheme, float(tau[e]), fitness, weights), lo), hi)
    nodes = []
    for node, kind in genome.nodes.items():
        if 0 < node.layer < genome.output_layer:
            row = colony.node_index[node]
            old = float(colony.cell_pheromone[row, kind.code])
            colony.cell_pheromone[row, kind.code] = min(
                max(deposit(scheme, old, fitness, weights), lo), hi
            )
            nodes.append((row, kind.code))
    return {"edges": edges, "nodes": nodes}


# -- population --------------------------------------------------------------
class Population:
    def __init__(self, capacity: int = 20):
        if capacity < 1:
            raise ConfigurationError("population capacity must be >= 1")
        self.capacity = capacity
        self.members: list[RnnGenome] = []

    def __len__(self) -> int:
        return len(self.members)

    @property
    def full(self) -> bool:
        return len(self.members) >= self.capacity

    @property
    def best(self) -> RnnGenome | None:
        return self.members[0] if self.members else None

    @property
    def worst(self) -> RnnGenome | None:
        return self.members[-1] if self.members else None

    def accepts(self, fitness: float) -> bool:
        if not math.isfinite(fitness):
            return False
        return not self.full or fitness < self.members[-1].fitness

    def insert(self, genome: RnnGenome) -> bool:
        if genome.fitness is None or not self.accepts(genome.fitness):
            return False
        keys = [m.fitness for m in self.members]
        self.members.insert(bisect.bisect_right(keys, genome.fitness), genome)
        if len(self.members) > self.capacity:
            self.members.pop()
        return True

    def check(self) -> None:
        f = [m.fitness for m in self.members]
        assert len(f) <= self.capacity
        assert all(math.isfinite(x) for x in f)
        assert all(a <= b for a, b in zip(f, f[1:]))

    def to_list(self) -> list[dict]:
        return [m.to_dict() for m in self.members]

    @classmethod
    def from_list(cls, capacity: int, docs: list[dict]) -> "Population":
        pop = cls(capacity)
        pop.members = [RnnGenome.from_dict(d) for d in docs]
        return pop


# -- workers -----------------------------------------------------------------
@dataclass
class WorkerResult:
    genome_id: int
    genome: RnnGenome
    fitness: float
    epochs: int
    error: str | None = None


def train_task(genome: RnnGenome, data: Dataset, trainer: TrainerConfig) -> WorkerResult:
    """Worker body: train one genome, never raising on divergence."""
    try:
        result = train(genome, data.train, data.validation, trainer)
    except (ASNEError, FloatingPointError, ValueError) as exc:
        failed = genome.with_params(genome.flat_params())
        failed.fitness = math.inf
        return WorkerResult(genome.generation, failed, math.inf, 0, f"{type(exc).__name__}: {exc}")
    return WorkerResult(genome.generation, result.genome, result.fitness, result.epochs)


Job = Callable[[RnnGenome], WorkerResult]


class WorkerPool(Protocol):
    capacity: int

    def submit(self, job: Job, genome: RnnGenome) -> None: ...

    def next_result(self) -> WorkerResult: ...

    def pending(self) -> list[RnnGenome]: ...

    def state(self) -> dict: ...

    def restore(self, state: dict) -> None: ...

    def close(self) -> None: ...


class SerialPool:
    """One worker, run in-process when its result is requested."""

    capacity = 1

    def __init__(self):
        self._queue: deque[tuple[Job, RnnGenome]] = deque()

    def submit(self, job, genome):
        self._queue.append((job, genome))

    def next_result(self):
        job, genome = self._queue.popleft()
        return job(genome)

    def pending(self):
        return [g for _, g in self._queue]

    def state(self):
        return {}

    def restore(self, state):
        pass

    def close(self):
        pass


class ShuffledPool:
    """Simulated ``n_workers`` pool whose results arrive in a seeded random order."""

    def __init__(self, n_workers: int, seed: int = 0):
        if n_workers < 1:
            raise ConfigurationError("worker pool size must be >= 1")
        self.capacity = n_workers
        self._rng = np.random.default_rng(seed)
        self._flight: list[tuple[Job, RnnGenome]] = []

    def submit(self, job, genome):
        self._flight.append((job, genome))

    def next_result(self):
        job, genome = self._flight.pop(int(self._rng.integers(len(self._flight))))
        return job(genome)

    def pending(self):
        return [g for _, g in self._flight]

    def state(self):
        return {"rng": self._rng.bit_generator.state}

    def restore(self, state):
        self._rng.bit_generator.state = state["rng"]

    def close(self):
        pass


class ProcessPool:
    """Real worker processes. ``ordered=True`` delivers results in submission
    order, which makes runs reproducible; otherwise results arrive as they finish."""

    def __init__(self, n_workers: int, ordered: bool = False):
        if n_workers < 1:
            raise ConfigurationError("worker pool size must be >= 1")
        self.capacity = n_workers
        self.ordered = ordered
        self._executor = ProcessPoolExecutor(max_workers=n_workers)
        self._flight: list[tuple[Future, RnnGenome]] = []

    def submit(self, job, genome):
        self._flight.append((self._executor.submit(job, genome), genome))

    def next_result(self):
        if self.ordered:
            fut, genome = self._flight.pop(0)
        else:
            done, _ = wait([f for f, _ in self._flight], return_when=FIRST_COMPLETED)
            pos = next(i for i, (f, _) in enumerate(self._flight) if f in done)
            fut, genome = self._flight.pop(pos)
        try:
            return fut.result()
        except Exception as exc:  # worker crashed
            failed = genome.with_params(genome.flat_params())
            failed.fitness = math.inf
            return WorkerResult(genome.generation, failed, math.inf, 0, repr(exc))

    def pending(self):
        return [g for _, g in self._flight]

    def state(self):
        return {}

    def restore(self, state):
        pass

    def close(self):
        self._executor.shutdown(cancel_futures=True)


# -- master ------------------------------------------------------------------
@dataclass(frozen=True)
class EvolutionConfig:
    ants: int = 40
    species: AntSpecies = AntSpecies.EXPLORER_FORWARD
    jump: JumpMode = JumpMode.LAYER_JUMP
    phi: PhiMode = PhiMode()
    scheme: PheromoneScheme = PheromoneScheme(Reward.L2, gamma=0.9)
    beta: float = 0.1
    max_iterations: int = 2000
    population_size: int = 20
    lamarck_gate: str = "population"
    evaporate_every: int = 1
    max_swarm_attempts: int = 5
    trainer: TrainerConfig = TrainerConfig()

    def __post_init__(self):
        object.__setattr__(self, "species", AntSpecies(self.species))
        object.__setattr__(self, "jump", JumpMode(self.jump))
        if self.ants < 1:
            raise ConfigurationError("need at least one ant")
        if not 0.0 < self.beta < 1.0:
            raise ConfigurationError("beta must lie in (0, 1)")
        if self.max_iterations < 1 or self.population_size < 1 or self.evaporate_every < 1:
            raise ConfigurationError("iterations, population size and cadence must be >= 1")
        if self.lamarck_gate not in ("population", "always"):
            raise ConfigurationError("lamarck_gate must be 'population' or 'always'")


LOG_FIELDS = (
    ["order", "generation", "status", "fitness", "best_so_far", "entered", "phi",
     "nodes", "edges", "rec_edges", "weights"]
    + [k.value for k in CELL_KINDS]
)


@dataclass
class MasterState:
    colony: Colony
    population: Population
    rng: np.random.Generator
    seed: int
    generated: int = 0
    processed: int = 0
    best_so_far: float = math.inf
    rows: list[dict] = field(default_factory=list)
    best: RnnGenome | None = None

    def to_dict(self, pending: list[RnnGenome], pool_state: dict) -> dict:
        return {
            "format": "asne-checkpoint",
            "version": CHECKPOINT_VERSION,
            "seed": self.seed,
            "generated": self.generated,
            "processed": self.processed,
            "best_so_far": self.best_so_far,
            "rng": self.rng.bit_generator.state,
            "colony": self.colony.to_dict(),
            "population": {"capacity": self.population.capacity,
                           "members": self.population.to_list()},
            "best": None if self.best is None else self.best.to_dict(),
            "rows": self.rows,
            "pending": [g.to_dict() for g in pending],
            "pool": pool_state,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> tuple["MasterState", list[RnnGenome], dict]:
        if doc.get("format") != "asne-checkpoint" or doc.get("version") != CHECKPOINT_VERSION:
            raise ConfigurationError("not a supported checkpoint document")
        rng = np.random.default_rng()
        rng.bit_generator.state = doc["rng"]
        pop = doc["population"]
        state = cls(
            colony=Colony.from_dict(doc["colony"]),
            population=Population.from_list(pop["capacity"], pop["members"]),
            rng=rng,
            seed=doc["seed"],
            generated=doc["generated"],
            processed=doc["processed"],
            best_so_far=float(doc["best_so_far"]),
            rows=doc["rows"],
            best=None if doc["best"] is None else RnnGenome.from_dict(doc["best"]),
        )
        return state, [RnnGenome.from_dict(g) for g in doc["pending"]], doc["pool"]


def initial_state(colony_config: ColonyConfig, config: EvolutionConfig, seed: int) -> MasterState:
    rng = np.random.default_rng(seed)
    colony = build_colony(colony_config, rng)
    if config.species.uses_bias:
        apply_forward_bias(colony, config.jump)
    return MasterState(colony, Population(config.population_size), rng, seed)


def generate(state: MasterState, config: EvolutionConfig) -> RnnGenome | None:
    result = ants_swarm(
        state.colony, config.species, config.ants, config.jump, state.rng,
        lamarckian=config.phi.enabled, generation=state.generated, seed=state.seed,
        max_attempts=config.max_swarm_attempts,
    )
    state.generated += 1
    return result.genome


def _row(state: MasterState, generation: int, status: str, genome: RnnGenome | None,
         fitness: float, entered: bool, phi: float | None) -> dict:
    row = {
        "order": state.processed,
        "generation": generation,
        "status": status,
        "fitness": fitness,
        "best_so_far": state.best_so_far,
        "entered": int(entered),
        "phi": "" if phi is None else phi,
    }
    if genome is None:
        row.update(nodes=0, edges=0, rec_edges=0, weights=0)
        row.update({k.value: 0 for k in CELL_KINDS})
    else:
        row.update(nodes=len(genome.nodes), edges=len(genome.forward),
                   rec_edges=len(genome.recurrent), weights=genome.n_weights)
        row.update(genome.cell_histogram())
    return row


def process_result(state: MasterState, result: WorkerResult, config: EvolutionConfig) -> dict:
    """Population insertion, reward, inheritance, bias and evaporation for one result."""
    genome, fitness = result.genome, result.fitness
    colony, pop = state.colony, state.population
    entered = pop.insert(genome) if math.isfinite(fitness) else False
    if entered:
        reward_paths(colony, genome, config.scheme)
    phi = None
    if config.phi.enabled and math.isfinite(fitness) and (entered or config.lamarck_gate == "always"):
        if config.phi.kind == "function":
            phi = compute_phi(fitness, pop.best.fitness, pop.worst.fitness) if len(pop) else 1.0
        else:
            phi = config.phi.value
        lamarck_update(colony, genome, phi)
    if config.species.uses_bias:
        apply_forward_bias(colony, config.jump)
    state.processed += 1
    if state.processed % config.evaporate_every == 0:
        evaporate_colony(colony, config.beta)
    if fitness < state.best_so_far:
        state.best_so_far = fitness
        state.best = genome
    status = "ok" if result.error is None else "failed"
    row = _row(state, result.genome_id, status, genome, fitness, entered, phi)
    state.rows.append(row)
    return row


def _skip_invalid(state: MasterState) -> dict:
    state.processed += 1
    row = _row(state, state.generated - 1, "invalid", None, math.inf, False, None)
    state.rows.append(row)
    return row


def write_log(rows: list[dict], path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    os.replace(tmp, path)


def write_checkpoint(state: MasterState, pool: WorkerPool, path: str | os.PathLike) -> None:
    """Atomically replace the checkpoint; a failed write leaves the old one intact."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(state.to_dict(pool.pending(), pool.state()), fh)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> tuple[MasterState, list[RnnGenome], dict]:
    with open(path, encoding="utf-8") as fh:
        return MasterState.from_dict(json.load(fh))


@dataclass
class RunArtifacts:
    best: RnnGenome | None
    rows: list[dict]
    colony: Colony
    population: Population
    state: MasterState
    finished: bool


def master_loop(
    state: MasterState,
    config: EvolutionConfig,
    data: Dataset,
    pool: WorkerPool | None = None,
    checkpoint_path: str | os.PathLike | None = None,
    checkpoint_every: int = 100,
    pending: list[RnnGenome] | None = None,
    stop_after: int | None = None,
    on_result: Callable[[MasterState, dict], None] | None = None,
) -> RunArtifacts:
    """Run (or resume) a master until ``config.max_iterations`` genomes are processed.

    ``pending`` re-submits genomes that were in flight when a checkpoint was
    taken. ``stop_after`` halts once that many results have been processed
    in total, as if the process had been killed.
    """
    pool = pool if pool is not None else SerialPool()
    job = partial(train_task, data=data, trainer=config.trainer)
    for genome in pending or ():
        pool.submit(job, genome)
    in_flight = len(pending or ())
    total = config.max_iterations
    while state.processed < total:
        if stop_after is not None and state.processed >= stop_after:
            return RunArtifacts(state.best, state.rows, state.colony, state.population, state, False)
        while state.generated < total and in_flight < pool.capacity:
            genome = generate(state, config)
            if genome is None:
                row = _skip_invalid(state)
            else:
                pool.submit(job, genome)
                in_flight += 1
                continue
            if on_result:
                on_result(state, row)
        if in_flight == 0:
            continue
        result = pool.next_result()
        in_flight -= 1
        row = process_result(state, result, config)
        if on_result:
            on_result(state, row)
        if checkpoint_path and state.processed % checkpoint_every == 0:
            write_checkpoint(state, pool, checkpoint_path)
    return RunArtifacts(state.best, state.rows, state.colony, state.population, state, True)


def reference_loop(state: MasterState, config: EvolutionConfig, data: Dataset) -> RunArtifacts:
    """Plain serial transcription of the master/worker loop, used as an oracle."""
    for _ in range(config.max_iterations):
        genome = generate(state, config)
        if genome is None:
            _skip_invalid(state)
            continue
        process_result(state, train_task(genome, data, config.trainer), config)
    return RunArtifacts(state.best, state.rows, state.colony, state.population, state, True)


def config_to_dict(config: EvolutionConfig) -> dict:
    doc = asdict(config)
    doc["species"] = config.species.value
    doc["jump"] = config.jump.value
    doc["phi"] = config.phi.flag
    doc["scheme"]["reward"] = config.scheme.reward.value
    return doc
