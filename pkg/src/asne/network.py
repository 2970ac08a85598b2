"""Unrolled execution and training of genome RNNs.

:func:`plan` lowers a genome into flat index arrays (CSR lists of incoming
forward and recurrent edges per node, in topological order) that the numba
kernels walk timestep by timestep. Backpropagation runs over the whole
sequence without truncation. Training is full-batch SGD with Nesterov
momentum on the mean absolute error, one step per epoch, keeping the
parameters of the best validation epoch.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .cells import CACHE_WIDTH, cell_backward_kernel, cell_forward_kernel
from .colony import NodeId
from .dataio import mae
from .exceptions import ConfigurationError, DivergenceError, GenomeError
from .genome import RnnGenome


@dataclass(frozen=True)
class TrainerConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    clip_threshold: float = 1.0
    boost_threshold: float = 0.05
    epochs: int = 10

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.learning_rate <= 0 or self.clip_threshold <= 0 or self.boost_threshold <= 0:
            raise ConfigurationError("learning rate and thresholds must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.boost_threshold >= self.clip_threshold:
            raise ConfigurationError("boost threshold must be below the clip threshold")


@dataclass
class UnrolledPlan:
    order: list[NodeId]
    kinds: np.ndarray
    input_col: np.ndarray
    param_offset: np.ndarray
    fwd_ptr: np.ndarray
    fwd_src: np.ndarray
    fwd_weight: np.ndarray
    rec_ptr: np.ndarray
    rec_src: np.ndarray
    rec_skip: np.ndarray
    rec_weight: np.ndarray
    output: int
    n_params: int

    def recurrent_dependencies(self) -> list[tuple[NodeId, NodeId, int]]:
        """``(node, source, skip)``: node at t reads source at t - skip."""
        deps = []
        for i, node in enumerate(self.order):
            for k in range(self.rec_ptr[i], self.rec_ptr[i + 1]):
                deps.append((node, self.order[self.rec_src[k]], int(self.rec_skip[k])))
        return deps

    @property
    def max_skip(self) -> int:
        return int(self.rec_skip.max()) if self.rec_skip.size else 0


def plan(genome: RnnGenome) -> UnrolledPlan:
    order = sorted(genome.nodes)
    pos = {n: i for i, n in enumerate(order)}
    for s, d in genome.forward:
        if pos[s] >= pos[d]:
            raise GenomeError(f"forward edge {s}->{d} breaks the topological order")
    outputs = genome.output_nodes
    if len(outputs) != 1:
        raise GenomeError("genome must have exactly one output node")

    nf, nr = len(genome.forward), len(genome.recurrent)
    fwd_in: list[list[tuple[int, int]]] = [[] for _ in order]
    for w, (s, d) in enumerate(genome.forward):
        fwd_in[pos[d]].append((pos[s], w))
    rec_in: list[list[tuple[int, int, int]]] = [[] for _ in order]
    for w, (s, d, k) in enumerate(genome.recurrent):
        rec_in[pos[d]].append((pos[s], k, nf + w))

    param_offset = np.full(len(order), -1, dtype=np.int64)
    offset = nf + nr
    for n, p in genome.params.items():
        param_offset[pos[n]] = offset
        offset += p.size

    def csr(lists, width):
        ptr = np.zeros(len(lists) + 1, dtype=np.int64)
        flat = [item for lst in lists for item in lst]
        ptr[1:] = np.cumsum([len(lst) for lst in lists])
        cols = np.array(flat, dtype=np.int64).reshape(-1, width)
        return ptr, cols

    fptr, fcols = csr(fwd_in, 2)
    rptr, rcols = csr(rec_in, 3)
    return UnrolledPlan(
        order=order,
        kinds=np.array([genome.nodes[n].code for n in order], dtype=np.int64),
        input_col=np.array([n.position if n.layer == 0 else -1 for n in order], dtype=np.int64),
        param_offset=param_offset,
        fwd_ptr=fptr,
        fwd_src=np.ascontiguousarray(fcols[:, 0]),
        fwd_weight=np.ascontiguousarray(fcols[:, 1]),
        rec_ptr=rptr,
        rec_src=np.ascontiguousarray(rcols[:, 0]),
        rec_skip=np.ascontiguousarray(rcols[:, 1]),
        rec_weight=np.ascontiguousarray(rcols[:, 2]),
        output=pos[outputs[0]],
        n_params=offset,
    )


@njit(cache=True)
def _forward_kernel(kinds, input_col, poff, fptr, fsrc, fwi, rptr, rsrc, rskip, rwi,
                    theta, X, H, C, XA, G):
    T = X.shape[0]
    n = kinds.shape[0]
    for t in range(T):
        for i in range(n):
            col = input_col[i]
            if col >= 0:
                H[t, i] = X[t, col]
                continue
            x = 0.0
            for k in range(fptr[i], fptr[i + 1]):
                x += theta[fwi[k]] * H[t, fsrc[k]]
            for k in range(rptr[i], rptr[i + 1]):
                tt = t - rskip[k]
                if tt >= 0:
                    x += theta[rwi[k]] * H[tt, rsrc[k]]
            XA[t, i] = x
            hp = 0.0
            cp = 0.0
            if t > 0:
                hp = H[t - 1, i]
                cp = C[t - 1, i]
            h, c = cell_forward_kernel(kinds[i], theta, poff[i], x, hp, cp, G[t, i])
            H[t, i] = h
            C[t, i] = c


@njit(cache=True)
def _backward_kernel(kinds, input_col, poff, fptr, fsrc, fwi, rptr, rsrc, rskip, rwi,
                     theta, H, C, XA, G, out, dout, grad):
    T = H.shape[0]
    n = kinds.shape[0]
    dH = np.zeros((T, n))
    dC = np.zeros((T, n))
    for t in range(T - 1, -1, -1):
        dH[t, out] += dout[t]
        for i in range(n - 1, -1, -1):
            if input_col[i] >= 0:
                continue
            dh = dH[t, i]
            dc = dC[t, i]
            if dh == 0.0 and dc == 0.0:
                continue
            hp = 0.0
            cp = 0.0
            if t > 0:
                hp = H[t - 1, i]
                cp = C[t - 1, i]
            dx, dhp, dcp = cell_backward_kernel(
                kinds[i], theta, poff[i], XA[t, i], hp, cp, G[t, i], dh, dc, grad
            )
            if t > 0:
                dH[t - 1, i] += dhp
                dC[t - 1, i] += dcp
            if dx == 0.0:
                continue
            for k in range(fptr[i], fptr[i + 1]):
                grad[fwi[k]] += dx * H[t, fsrc[k]]
                dH[t, fsrc[k]] += dx * theta[fwi[k]]
            for k in range(rptr[i], rptr[i + 1]):
                tt = t - rskip[k]
                if tt >= 0:
                    grad[rwi[k]] += dx * H[tt, rsrc[k]]
                    dH[tt, rsrc[k]] += dx * theta[rwi[k]]


@dataclass
class _Trace:
    H: np.ndarray
    C: np.ndarray
    XA: np.ndarray
    G: np.ndarray


def _arrays(p: UnrolledPlan):
    return (p.kinds, p.input_col, p.param_offset, p.fwd_ptr, p.fwd_src, p.fwd_weight,
            p.rec_ptr, p.rec_src, p.rec_skip, p.rec_weight)


def _run(p: UnrolledPlan, theta: np.ndarray, X: np.ndarray) -> _Trace:
    T, n = X.shape[0], len(p.order)
    trace = _Trace(np.zeros((T, n)), np.zeros((T, n)), np.zeros((T, n)),
                   np.zeros((T, n, CACHE_WIDTH)))
    _forward_kernel(*_arrays(p), theta, X, trace.H, trace.C, trace.XA, trace.G)
    out = trace.H[:, p.output]
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite prediction")
    return trace


def _check_inputs(p: UnrolledPlan, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("inputs must be a T x input_width matrix")
    need = int(p.input_col.max()) + 1
    if X.shape[1] < need:
        raise ValueError(f"genome reads input column {need - 1} but inputs have {X.shape[1]} columns")
    if not np.all(np.isfinite(X)):
        raise DivergenceError("non-finite input")
    return X


def predict_theta(p: UnrolledPlan, theta: np.ndarray, X) -> np.ndarray:
    X = _check_inputs(p, X)
    return _run(p, np.asarray(theta, dtype=np.float64), X).H[:, p.output].copy()


def loss_and_gradient(p: UnrolledPlan, theta: np.ndarray, X, y) -> tuple[float, np.ndarray]:
    """MAE over the sequence and its exact gradient w.r.t. ``theta``."""
    X = _check_inputs(p, X)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise ValueError("targets must have one value per timestep")
    if not np.all(np.isfinite(y)):
        raise DivergenceError("non-finite target")
    theta = np.asarray(theta, dtype=np.float64)
    trace = _run(p, theta, X)
    residual = trace.H[:, p.output] - y
    dout = np.sign(residual) / len(y)
    grad = np.zeros(p.n_params)
    _backward_kernel(*_arrays(p), theta, trace.H, trace.C, trace.XA, trace.G,
                     p.output, dout, grad)
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite gradient")
    return float(np.mean(np.abs(residual))), grad


def forward_pass(p: UnrolledPlan, genome: RnnGenome, inputs) -> np.ndarray:
    return predict_theta(p, genome.flat_params(), inputs)


def bptt_gradients(p: UnrolledPlan, genome: RnnGenome, inputs, targets) -> np.ndarray:
    return loss_and_gradient(p, genome.flat_params(), inputs, targets)[1]


def rescale_or_boost(grad: np.ndarray, clip_threshold: float = 1.0,
                     boost_threshold: float = 0.05) -> np.ndarray:
    """Shrink gradients longer than ``clip_threshold``; stretch non-zero ones
    shorter than ``boost_threshold`` up to that length."""
    grad = np.asarray(grad, dtype=np.float64)
    norm = float(np.linalg.norm(grad))
    if norm > clip_threshold:
        return grad * (clip_threshold / norm)
    if 0.0 < norm < boost_threshold:
        return grad * (boost_threshold / norm)
    return grad


def nesterov_step(theta: np.ndarray, velocity: np.ndarray, grad: np.ndarray,
                  learning_rate: float, momentum: float) -> tuple[np.ndarray, np.ndarray]:
    """One Nesterov momentum step in the look-ahead parameterisation."""
    new_velocity = momentum * velocity - learning_rate * grad
    return theta - momentum * velocity + (1.0 + momentum) * new_velocity, new_velocity


@dataclass
class TrainResult:
    genome: RnnGenome
    fitness: float
    epochs: int
    history: list[float] = field(default_factory=list)


def train(
    genome: RnnGenome,
    train_series: tuple[np.ndarray, np.ndarray],
    validation_series: tuple[np.ndarray, np.ndarray],
    config: TrainerConfig = TrainerConfig(),
    rng: np.random.Generator | None = None,
) -> TrainResult:
    """Train ``genome`` and return the weights of its best validation epoch.

    ``rng`` is accepted for interface symmetry; training itself is deterministic.
    """
    p = plan(genome)
    X_train, y_train = train_series
    X_val, y_val = validation_series
    theta = genome.flat_params()
    velocity = np.zeros_like(theta)
    best, best_theta, history = np.inf, theta, []
    for _ in range(config.epochs):
        _, grad = loss_and_gradient(p, theta, X_train, y_train)
        grad = rescale_or_boost(grad, config.clip_threshold, config.boost_threshold)
        theta, velocity = nesterov_step(theta, velocity, grad, config.learning_rate, config.momentum)
        if not np.all(np.isfinite(theta)):
            raise DivergenceError("non-finite parameters after update")
        score = mae(predict_theta(p, theta, X_val), y_val)
        history.append(score)
        if score < best:
            best, best_theta = score, theta
    trained = genome.with_params(best_theta)
    trained.fitness = best
    return TrainResult(trained, best, config.epochs, history)
