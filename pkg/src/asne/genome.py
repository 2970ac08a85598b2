"""Extracted candidate networks.

A genome is a value: node set with cell kinds, forward edges, recurrent edges
with time skips, the weight on each edge and a parameter vector per non-input
node. It serializes to JSON and flattens to a single parameter vector in a
fixed order (forward edges, recurrent edges, then node parameters, each in
sorted key order) for training.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .cells import CELL_KINDS, PARAM_COUNTS, CellKind
from .colony import NodeId
from .exceptions import GenomeError

ForwardKey = tuple[NodeId, NodeId]
RecurrentKey = tuple[NodeId, NodeId, int]


@dataclass
class RnnGenome:
    nodes: dict[NodeId, CellKind]
    forward: dict[ForwardKey, float]
    recurrent: dict[RecurrentKey, float]
    params: dict[NodeId, np.ndarray]
    output_layer: int
    fitness: float | None = None
    generation: int = -1
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = {NodeId(*n): CellKind(k) for n, k in sorted(self.nodes.items())}
        self.forward = {
            (NodeId(*s), NodeId(*d)): float(w) for (s, d), w in sorted(self.forward.items())
        }
        self.recurrent = {
            (NodeId(*s), NodeId(*d), int(k)): float(w)
            for (s, d, k), w in sorted(self.recurrent.items())
        }
        self.params = {
            NodeId(*n): np.asarray(p, dtype=np.float64) for n, p in sorted(self.params.items())
        }

    # -- structure ---------------------------------------------------------
    @property
    def input_nodes(self) -> list[NodeId]:
        return [n for n in self.nodes if n.layer == 0]

    @property
    def output_nodes(self) -> list[NodeId]:
        return [n for n in self.nodes if n.layer == self.output_layer]

    @property
    def n_weights(self) -> int:
        return len(self.forward) + len(self.recurrent) + sum(p.size for p in self.params.values())

    def cell_histogram(self) -> dict[str, int]:
        counts = Counter(
            kind.value for n, kind in self.nodes.items() if 0 < n.layer < self.output_layer
        )
        return {k.value: counts.get(k.value, 0) for k in CELL_KINDS}

    def has_forward_path(self) -> bool:
        """True when some output node is reachable from an input over forward edges."""
        succ: dict[NodeId, list[NodeId]] = {}
        for s, d in self.forward:
            succ.setdefault(s, []).append(d)
        seen = set(self.input_nodes)
        stack = list(seen)
        while stack:
            for d in succ.get(stack.pop(), ()):
                if d not in seen:
                    seen.add(d)
                    stack.append(d)
        return any(o in seen for o in self.output_nodes)

    def validate(self) -> "RnnGenome":
        for s, d in self.forward:
            if s not in self.nodes or d not in self.nodes:
                raise GenomeError(f"forward edge {s}->{d} has an endpoint outside the node set")
            if s.layer >= d.layer:
                raise GenomeError(f"forward edge {s}->{d} is not strictly forward")
        for s, d, k in self.recurrent:
            if s not in self.nodes or d not in self.nodes:
                raise GenomeError(f"recurrent edge {s}->{d} has an endpoint outside the node set")
            if k < 1:
                raise GenomeError(f"recurrent edge {s}->{d} has time skip {k}")
            if d.layer == 0:
                raise GenomeError(f"recurrent edge {s}->{d} ends at an input")
        outputs = self.output_nodes
        if not self.input_nodes or len(outputs) != 1:
            raise GenomeError("genome needs at least one input and exactly one output node")
        for n, kind in self.nodes.items():
            if (n.layer == 0 or n.layer == self.output_layer) and kind is not CellKind.SIMPLE:
                raise GenomeError(f"input/output node {n} must be a simple neuron")
            if n.layer > 0:
                p = self.params.get(n)
                if p is None or p.shape != (PARAM_COUNTS[kind],):
                    raise GenomeError(f"node {n} has wrong parameters for a {kind.value} cell")
        if not self.has_forward_path():
            raise GenomeError("no forward path from an input to the output")
        if not np.all(np.isfinite(self.flat_params())):
            raise GenomeError("non-finite weight")
        return self

    # -- flat parameter view -----------------------------------------------
    def flat_params(self) -> np.ndarray:
        parts = [
            np.fromiter(self.forward.values(), dtype=np.float64, count=len(self.forward)),
            np.fromiter(self.recurrent.values(), dtype=np.float64, count=len(self.recurrent)),
        ]
        parts.extend(self.params[n] for n in self.params)
        return np.concatenate(parts) if parts else np.zeros(0)

    def with_params(self, theta: np.ndarray) -> "RnnGenome":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_weights,):
            raise GenomeError(f"expected {self.n_weights} parameters, got {theta.shape}")
        nf, nr = len(self.forward), len(self.recurrent)
        forward = dict(zip(self.forward, theta[:nf].tolist()))
        recurrent = dict(zip(self.recurrent, theta[nf : nf + nr].tolist()))
        params, pos = {}, nf + nr
        for n, p in self.params.items():
            params[n] = theta[pos : pos + p.size].copy()
            pos += p.size
        return RnnGenome(
            nodes=dict(self.nodes),
            forward=forward,
            recurrent=recurrent,
            params=params,
            output_layer=self.output_layer,
            fitness=self.fitness,
            generation=self.generation,
            seed=self.seed,
            meta=dict(self.meta),
        )

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": "asne-genome",
            "version": 1,
            "generation": self.generation,
            "seed": self.seed,
            "fitness": self.fitness,
            "output_layer": self.output_layer,
            "nodes": [[n.layer, n.position, k.value] for n, k in self.nodes.items()],
            "forward": [[s.layer, s.position, d.layer, d.position, w] for (s, d), w in self.forward.items()],
            "recurrent": [
                [s.layer, s.position, d.layer, d.position, k, w]
                for (s, d, k), w in self.recurrent.items()
            ],
            "params": [[n.layer, n.position, p.tolist()] for n, p in self.params.items()],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RnnGenome":
        if doc.get("format") != "asne-genome":
            raise GenomeError("not a genome document")
        fitness = doc.get("fitness")
        return cls(
            nodes={NodeId(l, p): CellKind(k) for l, p, k in doc["nodes"]},
            forward={(NodeId(a, b), NodeId(c, d)): w for a, b, c, d, w in doc["forward"]},
            recurrent={
                (NodeId(a, b), NodeId(c, d), k): w for a, b, c, d, k, w in doc["recurrent"]
            },
            params={NodeId(l, p): np.array(v) for l, p, v in doc["params"]},
            output_layer=doc["output_layer"],
            fitness=None if fitness is None else float(fitness),
            generation=doc.get("generation", -1),
            seed=doc.get("seed"),
            meta=doc.get("meta", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def summary(self) -> dict:
        return {
            "nodes": len(self.nodes),
            "edges": len(self.forward),
            "rec_edges": len(self.recurrent),
            "weights": self.n_weights,
            "fitness": self.fitness,
            "cells": self.cell_histogram(),
        }
