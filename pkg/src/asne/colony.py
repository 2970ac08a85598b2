"""The massively connected superstructure ants travel over.

Nodes are laid out in layers: layer 0 holds the inputs, layers
``1..hidden_layers`` the hidden nodes and the last layer the outputs. Every
forward edge goes to a strictly later layer; recurrent edges join every
ordered node pair whose destination is not an input, once per time skip.

Edge state lives in flat numpy arrays with forward edges first, so pheromone
evaporation is one vectorised sweep and traversal can gather candidate
pheromones by index.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .cells import CELL_KINDS, FORGET_BIAS_OFFSET, LSTM_FORGET_BIAS, PARAM_COUNTS, CellKind
from .exceptions import ConfigurationError

__all__ = [
    "CellKind",
    "NodeId",
    "ColonyConfig",
    "Colony",
    "EdgeRef",
    "EdgeMode",
    "JumpMode",
    "build_colony",
    "edges_out_of",
    "clamp_pheromone",
    "save_colony",
    "load_colony",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1


class NodeId(NamedTuple):
    layer: int
    position: int

    def __str__(self) -> str:
        return f"{self.layer}:{self.position}"


class EdgeMode(str, Enum):
    FORWARD_ONLY = "forward"
    FORWARD_AND_RECURRENT = "forward+recurrent"


class JumpMode(str, Enum):
    LAYER_JUMP = "aj"
    NO_JUMP = "oj"


class EdgeRef(NamedTuple):
    index: int
    src: NodeId
    dst: NodeId
    skip: int  # 0 for forward edges

    @property
    def recurrent(self) -> bool:
        return self.skip > 0


@dataclass(frozen=True)
class ColonyConfig:
    input_width: int
    hidden_layers: int
    hidden_width: int
    output_width: int = 1
    max_skip: int = 3
    layer_jumps: bool = True
    tau_init: float = 1.0
    tau_min: float = 0.05
    tau_max: float = 20.0

    def validate(self) -> "ColonyConfig":
        if self.input_width < 1 or self.output_width < 1:
            raise ConfigurationError("input and output widths must be >= 1")
        if self.hidden_layers < 0:
            raise ConfigurationError("hidden_layers must be >= 0")
        if self.hidden_layers > 0 and self.hidden_width < 1:
            raise ConfigurationError("hidden_width must be >= 1 when hidden layers exist")
        if self.max_skip < 1:
            raise ConfigurationError("max_skip must be >= 1")
        if not (0 < self.tau_min < self.tau_init < self.tau_max):
            raise ConfigurationError(
                f"need 0 < tau_min < tau_init < tau_max, got "
                f"{self.tau_min}, {self.tau_init}, {self.tau_max}"
            )
        return self

    @property
    def n_layers(self) -> int:
        return self.hidden_layers + 2

    @property
    def output_layer(self) -> int:
        return self.hidden_layers + 1

    def layer_widths(self) -> list[int]:
        return [self.input_width] + [self.hidden_width] * self.hidden_layers + [self.output_width]

    @property
    def n_nodes(self) -> int:
        return sum(self.layer_widths())

    def expected_forward_edges(self) -> int:
        w = self.layer_widths()
        if self.layer_jumps:
            return sum(w[i] * w[j] for i in range(len(w)) for j in range(i + 1, len(w)))
        return sum(w[i] * w[i + 1] for i in range(len(w) - 1))

    def expected_recurrent_edges(self) -> int:
        return self.max_skip * self.n_nodes * (self.n_nodes - self.input_width)


def clamp_pheromone(level, tau_min: float, tau_max: float):
    """Clamp a pheromone level (scalar or array) into ``[tau_min, tau_max]``."""
    if np.ndim(level):
        return np.clip(level, tau_min, tau_max)
    return min(max(float(level), tau_min), tau_max)


class Colony:
    """Superstructure state: pheromones and Lamarckian weights per edge,
    cell-kind pheromones and Lamarckian cell parameters per node."""

    def __init__(self, config: ColonyConfig):
        self.config = config.validate()
        self.nodes: list[NodeId] = [
            NodeId(layer, pos)
            for layer, width in enumerate(config.layer_widths())
            for pos in range(width)
        ]
        self.node_index = {node: i for i, node in enumerate(self.nodes)}
        self.layer = np.array([n.layer for n in self.nodes], dtype=np.int64)

        widths = config.layer_widths()
        starts = np.concatenate([[0], np.cumsum(widths)]).astype(int)
        src, dst, skip = [], [], []
        for i, node in enumerate(self.nodes):
            last = config.n_layers if config.layer_jumps else min(node.layer + 2, config.n_layers)
            for layer in range(node.layer + 1, last):
                for j in range(starts[layer], starts[layer + 1]):
                    src.append(i)
                    dst.append(j)
                    skip.append(0)
        self.n_forward = len(src)
        for i in range(len(self.nodes)):
            for j in range(config.input_width, len(self.nodes)):
                for k in range(1, config.max_skip + 1):
                    src.append(i)
                    dst.append(j)
                    skip.append(k)
        self.edge_src = np.array(src, dtype=np.int64)
        self.edge_dst = np.array(dst, dtype=np.int64)
        self.edge_skip = np.array(skip, dtype=np.int64)
        self.edge_index = {
            (s, d, k): e for e, (s, d, k) in enumerate(zip(src, dst, skip))
        }
        n_edges = len(src)
        self.pheromone = np.full(n_edges, config.tau_init)
        self.weight = np.zeros(n_edges)
        self.cell_pheromone = np.full((len(self.nodes), len(CELL_KINDS)), config.tau_init)
        self.cell_params = {
            kind: np.zeros((len(self.nodes), PARAM_COUNTS[kind])) for kind in CELL_KINDS
        }
        self._candidates: dict = {}

    # -- structure ---------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edge_src)

    @property
    def n_recurrent(self) -> int:
        return self.n_edges - self.n_forward

    def is_input(self, idx: int) -> bool:
        return self.layer[idx] == 0

    def is_output(self, idx: int) -> bool:
        return self.layer[idx] == self.config.output_layer

    @property
    def input_indices(self) -> np.ndarray:
        return np.flatnonzero(self.layer == 0)

    @property
    def output_indices(self) -> np.ndarray:
        return np.flatnonzero(self.layer == self.config.output_layer)

    @property
    def hidden_indices(self) -> np.ndarray:
        return np.flatnonzero((self.layer > 0) & (self.layer < self.config.output_layer))

    def edge(self, e: int) -> EdgeRef:
        return EdgeRef(
            int(e),
            self.nodes[self.edge_src[e]],
            self.nodes[self.edge_dst[e]],
            int(self.edge_skip[e]),
        )

    def find_edge(self, src: NodeId, dst: NodeId, skip: int = 0) -> int:
        return self.edge_index[(self.node_index[src], self.node_index[dst], skip)]

    def candidates(self, idx: int, mode: EdgeMode, jump: JumpMode) -> np.ndarray:
        """Edge indices leaving node ``idx``, ordered by (dst layer, position, skip)."""
        key = (idx, mode, jump)
        cached = self._candidates.get(key)
        if cached is not None:
            return cached
        mask = self.edge_src == idx
        if mode is EdgeMode.FORWARD_ONLY:
            mask &= self.edge_skip == 0
        if jump is JumpMode.NO_JUMP:
            forward = self.edge_skip == 0
            consecutive = self.layer[self.edge_dst] == self.layer[idx] + 1
            mask &= ~forward | consecutive
        idx_arr = np.flatnonzero(mask)
        order = np.lexsort(
            (self.edge_skip[idx_arr], self.edge_dst[idx_arr], self.layer[self.edge_dst[idx_arr]])
        )
        result = idx_arr[order]
        result.setflags(write=False)
        self._candidates[key] = result
        return result

    # -- bookkeeping -------------------------------------------------------
    def clamp_all(self) -> None:
        c = self.config
        np.clip(self.pheromone, c.tau_min, c.tau_max, out=self.pheromone)
        np.clip(self.cell_pheromone, c.tau_min, c.tau_max, out=self.cell_pheromone)

    def copy(self) -> "Colony":
        other = Colony.__new__(Colony)
        other.__dict__.update(self.__dict__)
        other.pheromone = self.pheromone.copy()
        other.weight = self.weight.copy()
        other.cell_pheromone = self.cell_pheromone.copy()
        other.cell_params = {k: v.copy() for k, v in self.cell_params.items()}
        return other

    def state_equal(self, other: "Colony") -> bool:
        return (
            self.config == other.config
            and np.array_equal(self.pheromone, other.pheromone)
            and np.array_equal(self.weight, other.weight)
            and np.array_equal(self.cell_pheromone, other.cell_pheromone)
            and all(np.array_equal(self.cell_params[k], other.cell_params[k]) for k in CELL_KINDS)
        )

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": "asne-colony",
            "version": FORMAT_VERSION,
            "config": asdict(self.config),
            "nodes": [
                {
                    "layer": n.layer,
                    "position": n.position,
                    "cell_pheromones": {
                        k.value: float(self.cell_pheromone[i, k.code]) for k in CELL_KINDS
                    },
                    "cell_params": {
                        k.value: self.cell_params[k][i].tolist() for k in CELL_KINDS
                    },
                }
                for i, n in enumerate(self.nodes)
            ],
            "edges": [
                [int(s), int(d), int(k), float(p), float(w)]
                for s, d, k, p, w in zip(
                    self.edge_src, self.edge_dst, self.edge_skip, self.pheromone, self.weight
                )
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Colony":
        if doc.get("format") != "asne-colony":
            raise ConfigurationError("not a colony document")
        if doc.get("version") != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported colony format version {doc.get('version')}")
        colony = cls(ColonyConfig(**doc["config"]))
        if len(doc["nodes"]) != colony.n_nodes or len(doc["edges"]) != colony.n_edges:
            raise ConfigurationError("colony document does not match its config")
        for i, node in enumerate(doc["nodes"]):
            if (node["layer"], node["position"]) != tuple(colony.nodes[i]):
                raise ConfigurationError(f"node {i} out of order in colony document")
            for k in CELL_KINDS:
                colony.cell_pheromone[i, k.code] = node["cell_pheromones"][k.value]
                colony.cell_params[k][i] = node["cell_params"][k.value]
        edges = doc["edges"]
        for e, (s, d, k, p, w) in enumerate(edges):
            if (s, d, k) != (colony.edge_src[e], colony.edge_dst[e], colony.edge_skip[e]):
                raise ConfigurationError(f"edge {e} out of order in colony document")
            colony.pheromone[e] = p
            colony.weight[e] = w
        return colony


def build_colony(config: ColonyConfig, rng: np.random.Generator) -> Colony:
    """Materialize every forward and recurrent edge with initial pheromone
    ``tau_init`` and Lamarckian weights drawn from U(-0.5, 0.5)."""
    colony = Colony(config)
    colony.weight[:] = rng.uniform(-0.5, 0.5, colony.n_edges)
    for kind in CELL_KINDS:
        params = colony.cell_params[kind]
        params[:] = rng.uniform(-0.5, 0.5, params.shape)
        if kind is CellKind.LSTM:
            params[:, LSTM_FORGET_BIAS] += FORGET_BIAS_OFFSET
    return colony


def edges_out_of(
    colony: Colony,
    node: NodeId,
    mode: EdgeMode = EdgeMode.FORWARD_AND_RECURRENT,
    jump: JumpMode = JumpMode.LAYER_JUMP,
) -> list[EdgeRef]:
    idx = colony.node_index[node]
    return [colony.edge(e) for e in colony.candidates(idx, EdgeMode(mode), JumpMode(jump))]


def save_colony(colony: Colony, path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(colony.to_dict(), fh)
    os.replace(tmp, path)


def load_colony(path: str | os.PathLike) -> Colony:
    with open(path, encoding="utf-8") as fh:
        return Colony.from_dict(json.load(fh))
