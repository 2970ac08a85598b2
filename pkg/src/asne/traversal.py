"""Ant agents and genome extraction.

Standard ants wander over forward and recurrent edges from an input until
they reach the output. Explorer ants only take forward edges and lay down a
feed-forward skeleton; social ants then add recurrent edges between the
nodes the explorers picked, moving either towards the output (forward
recurrent) or back from it (backward recurrent).
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from itertools import accumulate
from typing import Any, Sequence

import numpy as np

from .cells import CELL_KINDS, CellKind, init_params
from .colony import Colony, EdgeMode, JumpMode
from .exceptions import GenomeError, TraversalError
from .genome import RnnGenome


class AntSpecies(str, Enum):
    STANDARD = "std"
    STANDARD_BIAS = "stdbias"
    EXPLORER = "exp"
    EXPLORER_FORWARD = "expfwd"
    EXPLORER_BACKWARD = "expbwd"
    EXPLORER_FORWARD_BACKWARD = "expfwdbwd"

    @property
    def uses_explorers(self) -> bool:
        return self not in (AntSpecies.STANDARD, AntSpecies.STANDARD_BIAS)

    @property
    def uses_bias(self) -> bool:
        return self is AntSpecies.STANDARD_BIAS


class SocialDirection(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass
class AntWalk:
    role: str
    nodes: list[int] = field(default_factory=list)
    edges: list[int] = field(default_factory=list)
    truncated: bool = False


def _pick(levels: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(levels)
    i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(i, len(levels) - 1)


def roulette_select(candidates: Sequence[tuple[Any, float]], rng: np.random.Generator):
    """Pick an item with probability proportional to its pheromone level."""
    if not candidates:
        raise TraversalError("no candidates to choose from")
    # plain-Python cumulative sum: same sequential sums as _pick, far less overhead
    levels = [level for _, level in candidates]
    cum = list(accumulate(levels))
    if not (min(levels) > 0 and math.isfinite(cum[-1])):
        raise TraversalError("pheromone levels must be positive and finite")
    i = bisect_right(cum, rng.random() * cum[-1])
    return candidates[min(i, len(cum) - 1)][0]


def step_cap(colony: Colony) -> int:
    return 10 * colony.n_nodes


def _walk(colony: Colony, mode: EdgeMode, jump: JumpMode, rng, role: str) -> AntWalk:
    inputs = colony.input_indices
    cur = int(inputs[rng.integers(len(inputs))])
    walk = AntWalk(role=role, nodes=[cur])
    cap = step_cap(colony)
    tau = colony.pheromone
    dst = colony.edge_dst
    while not colony.is_output(cur):
        if len(walk.edges) >= cap:
            walk.truncated = True
            break
        cand = colony.candidates(cur, mode, jump)
        if cand.size == 0:
            raise TraversalError(f"dead end at node {colony.nodes[cur]}")
        e = int(cand[_pick(tau[cand], rng)])
        walk.edges.append(e)
        cur = int(dst[e])
        walk.nodes.append(cur)
    return walk


def run_standard_ant(colony: Colony, jump: JumpMode, rng: np.random.Generator) -> AntWalk:
    return _walk(colony, EdgeMode.FORWARD_AND_RECURRENT, JumpMode(jump), rng, "standard")


def run_explorer_ant(colony: Colony, jump: JumpMode, rng: np.random.Generator) -> AntWalk:
    return _walk(colony, EdgeMode.FORWARD_ONLY, JumpMode(jump), rng, "explorer")


def _recurrent_out(colony: Colony, idx: int) -> np.ndarray:
    key = ("rec", idx)
    cached = colony._candidates.get(key)
    if cached is None:
        cand = colony.candidates(idx, EdgeMode.FORWARD_AND_RECURRENT, JumpMode.LAYER_JUMP)
        cached = cand[colony.edge_skip[cand] > 0]
        colony._candidates[key] = cached
    return cached


def run_social_ant(
    colony: Colony,
    base_nodes,
    direction: SocialDirection,
    jump: JumpMode,
    rng: np.random.Generator,
) -> AntWalk:
    """One social ant restricted to ``base_nodes`` (colony node indices)."""
    direction = SocialDirection(direction)
    in_base = np.zeros(colony.n_nodes, dtype=bool)
    in_base[list(base_nodes)] = True
    layer = colony.layer
    if direction is SocialDirection.FORWARD:
        starts = [i for i in colony.input_indices if in_base[i]]
    else:
        starts = [i for i in colony.output_indices if in_base[i]]
    if not starts:
        return AntWalk(role=f"social-{direction.value}")
    cur = int(starts[rng.integers(len(starts))])
    walk = AntWalk(role=f"social-{direction.value}", nodes=[cur])
    tau = colony.pheromone
    while not (direction is SocialDirection.FORWARD and colony.is_output(cur)):
        cand = _recurrent_out(colony, cur)
        dst = colony.edge_dst[cand]
        if direction is SocialDirection.FORWARD:
            ok = layer[dst] > layer[cur]
            if jump is JumpMode.NO_JUMP:
                ok &= layer[dst] == layer[cur] + 1
        else:
            ok = layer[dst] < layer[cur]
            if jump is JumpMode.NO_JUMP:
                ok &= layer[dst] == layer[cur] - 1
        cand = cand[ok & in_base[dst]]
        if cand.size == 0:
            break
        e = int(cand[_pick(tau[cand], rng)])
        walk.edges.append(e)
        cur = int(colony.edge_dst[e])
        walk.nodes.append(cur)
    return walk


def run_social_ants(
    colony: Colony,
    base_nodes,
    direction: SocialDirection,
    n_ants: int,
    jump: JumpMode,
    rng: np.random.Generator,
) -> list[AntWalk]:
    return [run_social_ant(colony, base_nodes, direction, jump, rng) for _ in range(n_ants)]


def species_split(species: AntSpecies, n_ants: int) -> dict[str, int]:
    """Ant counts per role for one swarm invocation."""
    species = AntSpecies(species)
    if not species.uses_explorers:
        return {"standard": n_ants}
    half = max(1, n_ants // 2)
    split = {"explorer": half, "forward": 0, "backward": 0}
    if species is AntSpecies.EXPLORER_FORWARD:
        split["forward"] = half
    elif species is AntSpecies.EXPLORER_BACKWARD:
        split["backward"] = half
    elif species is AntSpecies.EXPLORER_FORWARD_BACKWARD:
        split["forward"] = split["backward"] = max(1, n_ants // 4)
    return split


def run_swarm(
    colony: Colony,
    species: AntSpecies,
    n_ants: int,
    jump: JumpMode,
    rng: np.random.Generator,
) -> list[AntWalk]:
    species, jump = AntSpecies(species), JumpMode(jump)
    split = species_split(species, n_ants)
    if not species.uses_explorers:
        return [run_standard_ant(colony, jump, rng) for _ in range(split["standard"])]
    walks = [run_explorer_ant(colony, jump, rng) for _ in range(split["explorer"])]
    base = sorted({n for w in walks for n in w.nodes})
    walks += run_social_ants(colony, base, SocialDirection.FORWARD, split["forward"], jump, rng)
    walks += run_social_ants(colony, base, SocialDirection.BACKWARD, split["backward"], jump, rng)
    return walks


def _prune(colony: Colony, nodes: set[int], edges: set[int]) -> tuple[set[int], set[int]]:
    """Keep nodes that lie between an input and the output along genome edges."""
    succ: dict[int, list[int]] = {}
    pred: dict[int, list[int]] = {}
    for e in edges:
        s, d = int(colony.edge_src[e]), int(colony.edge_dst[e])
        succ.setdefault(s, []).append(d)
        pred.setdefault(d, []).append(s)

    def reach(seeds, graph):
        seen = set(seeds)
        stack = list(seen)
        while stack:
            for n in graph.get(stack.pop(), ()):
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
        return seen

    from_inputs = reach([n for n in nodes if colony.is_input(n)], succ)
    to_output = reach([n for n in nodes if colony.is_output(n)], pred)
    keep = nodes & from_inputs & to_output
    kept_edges = {
        e for e in edges if colony.edge_src[e] in keep and colony.edge_dst[e] in keep
    }
    return keep, kept_edges


def assemble_genome(
    colony: Colony,
    walks: Sequence[AntWalk],
    rng: np.random.Generator,
    lamarckian: bool = True,
    generation: int = -1,
    seed: int | None = None,
) -> RnnGenome:
    """Union the walks into a genome; raises GenomeError when no input reaches the output."""
    nodes = {n for w in walks for n in w.nodes}
    edges = {e for w in walks for e in w.edges}
    nodes, edges = _prune(colony, nodes, edges)
    outputs = [n for n in nodes if colony.is_output(n)]
    if not outputs:
        raise GenomeError("swarm produced no path to the output")
    if len(outputs) > 1:
        raise GenomeError("genomes with several output nodes are not supported")

    kinds: dict[int, CellKind] = {}
    for n in sorted(nodes):
        if colony.is_input(n) or colony.is_output(n):
            kinds[n] = CellKind.SIMPLE
        else:
            kinds[n] = CELL_KINDS[_pick(colony.cell_pheromone[n], rng)]

    edge_list = sorted(edges, key=lambda e: (colony.edge_skip[e] > 0, colony.edge_src[e],
                                             colony.edge_dst[e], colony.edge_skip[e]))
    if lamarckian:
        weights = {e: float(colony.weight[e]) for e in edge_list}
    else:
        fresh = rng.uniform(-0.5, 0.5, len(edge_list))
        weights = dict(zip(edge_list, fresh.tolist()))

    params = {}
    for n in sorted(kinds):
        if colony.is_input(n):
            continue
        kind = kinds[n]
        params[colony.nodes[n]] = (
            colony.cell_params[kind][n].copy() if lamarckian else init_params(kind, rng)
        )

    node_of = colony.nodes
    genome = RnnGenome(
        nodes={node_of[n]: k for n, k in kinds.items()},
        forward={
            (node_of[colony.edge_src[e]], node_of[colony.edge_dst[e]]): weights[e]
            for e in edge_list
            if colony.edge_skip[e] == 0
        },
        recurrent={
            (node_of[colony.edge_src[e]], node_of[colony.edge_dst[e]], int(colony.edge_skip[e])): weights[e]
            for e in edge_list
            if colony.edge_skip[e] > 0
        },
        params=params,
        output_layer=colony.config.output_layer,
        generation=generation,
        seed=seed,
    )
    return genome.validate()


@dataclass
class SwarmResult:
    genome: RnnGenome | None
    attempts: int
    walks: list[AntWalk] = field(default_factory=list)


def ants_swarm(
    colony: Colony,
    species: AntSpecies,
    n_ants: int,
    jump: JumpMode,
    rng: np.random.Generator,
    lamarckian: bool = True,
    generation: int = -1,
    seed: int | None = None,
    max_attempts: int = 5,
) -> SwarmResult:
    """Run swarms until a valid genome appears or ``max_attempts`` is exhausted."""
    walks: list[AntWalk] = []
    for attempt in range(1, max_attempts + 1):
        walks = run_swarm(colony, species, n_ants, jump, rng)
        try:
            genome = assemble_genome(colony, walks, rng, lamarckian, generation, seed)
        except GenomeError:
            continue
        genome.meta["species"] = AntSpecies(species).value
        return SwarmResult(genome, attempt, walks)
    return SwarmResult(None, max_attempts, walks)


def genome_edge_indices(colony: Colony, genome: RnnGenome) -> list[int]:
    """Colony edge indices covered by ``genome``, forward edges first."""
    idx = [colony.find_edge(s, d) for s, d in genome.forward]
    idx += [colony.find_edge(s, d, k) for s, d, k in genome.recurrent]
    return idx
