"""Scikit-learn style wrapper around a single evolutionary run."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .colony import ColonyConfig, JumpMode
from .dataio import Dataset, MinMax
from .evolution import EvolutionConfig, PhiMode, initial_state, master_loop
from .exceptions import ConfigurationError, DataError
from .network import TrainerConfig, forward_pass, plan
from .pheromone import PheromoneScheme, Reward
from .traversal import AntSpecies


class ASNERegressor(RegressorMixin, BaseEstimator):
    """Evolve a recurrent network for a one-step-ahead regression series.

    Rows of ``X`` are consecutive time steps. ``fit`` holds out the last
    ``validation_fraction`` of rows (no shuffling) to score genomes, and
    ``predict`` runs the best genome over the given rows from a zero state.
    """

    def __init__(self, hidden_layers=3, hidden_width=12, max_skip=3, ants=40,
                 species="expfwd", jump="aj", phi="fn", reward="l2", gamma=0.9,
                 alpha=0.05, beta=0.1, iterations=200, epochs=10, population=20,
                 learning_rate=0.001, momentum=0.9, validation_fraction=0.5,
                 random_state=0):
        self.hidden_layers = hidden_layers
        self.hidden_width = hidden_width
        self.max_skip = max_skip
        self.ants = ants
        self.species = species
        self.jump = jump
        self.phi = phi
        self.reward = reward
        self.gamma = gamma
        self.alpha = alpha
        self.beta = beta
        self.iterations = iterations
        self.epochs = epochs
        self.population = population
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _evolution_config(self) -> EvolutionConfig:
        try:
            reward = Reward(self.reward)
            species, jump = AntSpecies(self.species), JumpMode(self.jump)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        gamma = self.gamma if reward in (Reward.L1, Reward.L2) else 0.0
        return EvolutionConfig(
            ants=self.ants, species=species, jump=jump, phi=PhiMode.parse(str(self.phi)),
            scheme=PheromoneScheme(reward, alpha=self.alpha, gamma=gamma),
            beta=self.beta, max_iterations=self.iterations, population_size=self.population,
            trainer=TrainerConfig(self.learning_rate, self.momentum, epochs=self.epochs),
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True, dtype=np.float64)
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigurationError("validation_fraction must lie in (0, 1)")
        cut = int(round(len(y) * (1.0 - self.validation_fraction)))
        if cut < 2 or len(y) - cut < 2:
            raise DataError("too few rows for a train/validation split")
        config = self._evolution_config()
        table = np.column_stack([X, y])
        self.scaler_ = MinMax(table[:cut].min(axis=0), table[:cut].max(axis=0))
        scaled = self.scaler_.transform(table)
        data = Dataset(
            np.ascontiguousarray(scaled[:cut, :-1]), scaled[:cut, -1].copy(),
            np.ascontiguousarray(scaled[cut:, :-1]), scaled[cut:, -1].copy(),
            [f"x{k}" for k in range(X.shape[1])] + ["y"], self.scaler_,
        )
        colony_config = ColonyConfig(X.shape[1], self.hidden_layers, self.hidden_width,
                                     1, self.max_skip).validate()
        state = initial_state(colony_config, config, self.random_state)
        result = master_loop(state, config, data)
        if result.best is None:
            raise RuntimeError("no genome trained successfully")
        self.best_genome_ = result.best
        self.best_fitness_ = result.best.fitness
        self.colony_ = result.colony
        self.population_ = result.population
        self.fitness_log_ = result.rows
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "best_genome_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        padded = np.column_stack([X, np.zeros(len(X))])
        scaled = self.scaler_.transform(padded)[:, :-1]
        out = forward_pass(plan(self.best_genome_), self.best_genome_, np.ascontiguousarray(scaled))
        lo, hi = self.scaler_.minimum[-1], self.scaler_.maximum[-1]
        return out * (hi - lo) + lo if hi > lo else np.full(len(X), lo)
