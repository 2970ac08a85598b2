"""Experiment configuration, repeated runs and baseline oracles."""
from __future__ import annotations

import itertools
import json
import logging
import math
import os
import statistics
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .analysis import summarize_runs
from .colony import ColonyConfig, JumpMode, build_colony, save_colony
from .dataio import Dataset, constant_baseline, load_csv, prepare, synth_series
from .evolution import (
    EvolutionConfig,
    PhiMode,
    ProcessPool,
    SerialPool,
    initial_state,
    load_checkpoint,
    master_loop,
    train_task,
    write_checkpoint,
    write_log,
)
from .exceptions import ConfigurationError, DataError
from .network import TrainerConfig
from .pheromone import PheromoneScheme, Reward
from .traversal import AntSpecies, ants_swarm

log = logging.getLogger(__name__)

GRID = {
    "ants": [20, 40, 80, 160],
    "species": [s.value for s in AntSpecies],
    "jump": [j.value for j in JumpMode],
    "phi": ["fn", "0.3", "0.6", "0.9", "off"],
    "reward": ["const", "fitness", "l1:0.25", "l1:0.65", "l1:0.9", "l2:0.25", "l2:0.65", "l2:0.9"],
}


@dataclass
class ExperimentConfig:
    name: str = "asne"
    hidden_layers: int = 3
    hidden_width: int = 12
    max_skip: int = 3
    ants: int = 40
    species: str = "expfwd"
    jump: str = "aj"
    phi: str = "fn"
    reward: str = "l2"
    gamma: float = 0.9
    constant: float = 0.15
    alpha: float = 0.05
    beta: float = 0.1
    iterations: int = 2000
    epochs: int = 10
    population: int = 20
    lamarck_gate: str = "population"
    learning_rate: float = 0.001
    momentum: float = 0.9
    clip_threshold: float = 1.0
    boost_threshold: float = 0.05
    repeats: int = 10
    seed: int = 0
    workers: int = 1
    arrival: str = "ordered"
    checkpoint_every: int = 100
    train_fraction: float = 0.5
    solo: bool = False
    data: dict = field(default_factory=lambda: {
        "source": "synth", "kind": "sine_mix", "length": 512, "channels": 5, "noise": 0.0, "seed": 0,
    })

    def validate(self) -> "ExperimentConfig":
        if self.repeats < 1 or self.workers < 1 or self.checkpoint_every < 1:
            raise ConfigurationError("repeats, workers and checkpoint_every must be >= 1")
        if self.arrival not in ("ordered", "async"):
            raise ConfigurationError("arrival must be 'ordered' or 'async'")
        self.evolution()
        ColonyConfig(1, self.hidden_layers, self.hidden_width, max_skip=self.max_skip).validate()
        return self

    # -- derived configs -----------------------------------------------------
    def scheme(self) -> PheromoneScheme:
        try:
            reward = Reward(self.reward)
        except ValueError:
            raise ConfigurationError(f"unknown reward scheme {self.reward!r}") from None
        gamma = self.gamma if reward in (Reward.L1, Reward.L2) else 0.0
        return PheromoneScheme(reward, alpha=self.alpha, gamma=gamma, constant=self.constant)

    def trainer(self) -> TrainerConfig:
        return TrainerConfig(self.learning_rate, self.momentum, self.clip_threshold,
                             self.boost_threshold, self.epochs)

    def evolution(self) -> EvolutionConfig:
        try:
            species, jump = AntSpecies(self.species), JumpMode(self.jump)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        return EvolutionConfig(
            ants=self.ants, species=species, jump=jump, phi=PhiMode.parse(self.phi),
            scheme=self.scheme(), beta=self.beta, max_iterations=self.iterations,
            population_size=self.population, lamarck_gate=self.lamarck_gate,
            trainer=self.trainer(),
        )

    def colony(self, input_width: int) -> ColonyConfig:
        return ColonyConfig(input_width, self.hidden_layers, self.hidden_width, 1, self.max_skip).validate()

    def labels(self) -> list[str]:
        return [
            PhiMode.parse(self.phi).label,
            self.scheme().label,
            AntSpecies(self.species).value,
            "LayerJump" if self.jump == JumpMode.LAYER_JUMP.value else "NoJump",
            f"{self.ants}Ants",
        ]

    # -- io ------------------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**doc).validate()

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def expand_grid(base: ExperimentConfig, **options) -> list[ExperimentConfig]:
    """Cartesian product over the option grid; ``options`` narrow any axis."""
    axes = {k: options.get(k) or v for k, v in GRID.items()}
    configs = []
    for ants, species, jump, phi, reward in itertools.product(*axes.values()):
        scheme, _, gamma = reward.partition(":")
        cfg = replace(
            base, ants=int(ants), species=species, jump=jump, phi=phi, reward=scheme,
            gamma=float(gamma) if gamma else base.gamma,
        )
        cfg.name = "_".join([f"a{ants}", species, jump, f"phi{phi}", reward.replace(":", "")])
        configs.append(cfg.validate())
    return configs


def load_data(config: ExperimentConfig) -> Dataset:
    src = dict(config.data)
    kind = src.pop("source", "synth")
    if kind == "synth":
        series = synth_series(
            src.get("kind", "sine_mix"), int(src.get("length", 512)), int(src.get("channels", 5)),
            float(src.get("noise", 0.0)), int(src.get("seed", 0)),
        )
    elif kind == "csv":
        if "path" not in src or "target" not in src:
            raise DataError("csv data source needs 'path' and 'target'")
        series = load_csv(src["path"], src["target"])
    else:
        raise DataError(f"unknown data source {kind!r}")
    return prepare(series, config.train_fraction)


def _pool(config: ExperimentConfig):
    if config.workers == 1:
        return SerialPool()
    return ProcessPool(config.workers, ordered=config.arrival == "ordered")


def run_repeat(config: ExperimentConfig, data: Dataset, repeat: int, out: Path,
               resume: bool = False, stop_after: int | None = None):
    """One seeded master run; writes its log, checkpoint, best genome and final colony."""
    out.mkdir(parents=True, exist_ok=True)
    evo = config.evolution()
    ckpt = out / "checkpoint.json"
    pending = None
    pool_state = {}
    if resume and ckpt.exists():
        state, pending, pool_state = load_checkpoint(ckpt)
    else:
        state = initial_state(config.colony(data.input_width), evo, config.seed + repeat)
    pool = _pool(config)
    pool.restore(pool_state)
    try:
        result = master_loop(state, evo, data, pool, ckpt, config.checkpoint_every,
                             pending=pending, stop_after=stop_after)
        write_checkpoint(result.state, pool, ckpt)
    finally:
        pool.close()
    write_log(result.rows, out / "fitness_log.csv")
    if result.best is not None:
        (out / "best_genome.json").write_text(json.dumps(result.best.to_dict()))
    save_colony(result.colony, out / "colony.json")
    return result


def _write_plot(out: Path, curves: dict[int, list[float]]) -> None:
    with open(out / "best_so_far.dat", "w", encoding="utf-8") as fh:
        fh.write("# iteration " + " ".join(f"repeat{r}" for r in curves) + "\n")
        length = max((len(c) for c in curves.values()), default=0)
        for i in range(length):
            vals = [repr(c[i]) if i < len(c) else "nan" for c in curves.values()]
            fh.write(f"{i + 1} " + " ".join(vals) + "\n")
    plot = [
        "set xlabel 'genomes processed'",
        "set ylabel 'best validation MAE'",
        "set key outside",
        "plot " + ", ".join(
            f"'best_so_far.dat' using 1:{j + 2} with lines title 'repeat {r}'"
            for j, r in enumerate(curves)
        ),
    ]
    (out / "plot.gp").write_text("\n".join(plot) + "\n")


def run_experiment(config: ExperimentConfig, out_dir: str | os.PathLike,
                   resume: bool = False) -> dict:
    """All repeats of one configuration; returns (and writes) the summary."""
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.json")
    data = load_data(config)
    colony_cfg = config.colony(data.input_width)
    best_fitness, genomes, failed, curves, repeats = [], [], [], {}, []
    for r in range(config.repeats):
        try:
            result = run_repeat(config, data, r, out / f"repeat_{r:02d}", resume=resume)
        except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
            log.error("repeat %d failed: %s", r, exc)
            failed.append({"repeat": r, "error": f"{type(exc).__name__}: {exc}"})
            continue
        curves[r] = [row["best_so_far"] for row in result.rows]
        if result.best is None:
            failed.append({"repeat": r, "error": "no genome trained successfully"})
            continue
        size = result.best.summary()
        best_fitness.append(result.best.fitness)
        genomes.append(size)
        repeats.append({"repeat": r, "seed": config.seed + r, "best_fitness": result.best.fitness,
                        **{k: size[k] for k in ("nodes", "edges", "rec_edges", "weights")}})
    _write_plot(out, curves)
    summary = {
        "name": config.name,
        "labels": config.labels(),
        "solo": config.solo,
        "repeats": repeats,
        "failed": failed,
        "colony": {"nodes": colony_cfg.n_nodes, "edges": colony_cfg.expected_forward_edges(),
                   "rec_edges": colony_cfg.expected_recurrent_edges()},
        **summarize_runs(best_fitness, genomes, colony_cfg.expected_forward_edges(),
                         colony_cfg.expected_recurrent_edges()),
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def random_genome_fitness(config: ExperimentConfig, data: Dataset, samples: int = 200,
                          seed: int = 0) -> list[float]:
    """Fitness of genomes drawn from an untouched colony with fresh random weights,
    trained with the experiment's trainer settings."""
    rng = np.random.default_rng(seed)
    colony = build_colony(config.colony(data.input_width), rng)
    evo = config.evolution()
    scores = []
    for i in range(samples):
        swarm = ants_swarm(colony, evo.species, evo.ants, evo.jump, rng,
                           lamarckian=False, generation=i, seed=seed)
        if swarm.genome is None:
            scores.append(math.inf)
            continue
        scores.append(train_task(swarm.genome, data, evo.trainer).fitness)
    return scores


def baselines(config: ExperimentConfig, samples: int = 200, seed: int = 0) -> dict:
    data = load_data(config)
    scores = random_genome_fitness(config, data, samples, seed)
    return {
        "constant_mean_mae": constant_baseline(data),
        "random_genome_median_mae": statistics.median(scores),
        "random_genome_samples": samples,
    }
