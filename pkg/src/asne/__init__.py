"""Ant swarm neuro-evolution of recurrent networks for time-series prediction."""
from .cells import CellKind
from .colony import Colony, ColonyConfig, EdgeMode, JumpMode, NodeId, build_colony, load_colony, save_colony
from .dataio import Dataset, TimeSeries, load_csv, mae, min_max_normalize, prepare, synth_series
from .estimator import ASNERegressor
from .evolution import EvolutionConfig, PhiMode, Population, compute_phi, initial_state, master_loop
from .exceptions import (
    ASNEError,
    ConfigurationError,
    DataError,
    DivergenceError,
    GenomeError,
    TraversalError,
)
from .experiment import ExperimentConfig, run_experiment
from .genome import RnnGenome
from .network import TrainerConfig, train
from .pheromone import PheromoneScheme, Reward
from .traversal import AntSpecies, ants_swarm

__version__ = "0.1.0"

__all__ = [
    "ASNEError", "ASNERegressor", "AntSpecies", "CellKind", "Colony", "ColonyConfig",
    "ConfigurationError", "DataError", "Dataset", "DivergenceError", "EdgeMode",
    "EvolutionConfig", "ExperimentConfig", "GenomeError", "JumpMode", "NodeId",
    "PheromoneScheme", "PhiMode", "Population", "Reward", "RnnGenome", "TimeSeries",
    "TrainerConfig", "TraversalError", "ants_swarm", "build_colony", "compute_phi",
    "initial_state", "load_colony", "load_csv", "mae", "master_loop", "min_max_normalize",
    "prepare", "run_experiment", "save_colony", "synth_series", "train",
]
