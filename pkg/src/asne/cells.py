"""Scalar recurrent cells: simple tanh unit, Delta-RNN, GRU, LSTM, MGU and UGRNN.

Every genome node is a scalar unit. Its incoming forward and recurrent edges
are summed (weighted) into one aggregated input ``x``; memory cells
additionally see their own previous output ``h_prev`` (and ``c_prev`` for the
LSTM). The per-node gate weights and biases live in a flat parameter vector
whose layout is fixed per kind; see ``docs/cells.md`` for the equations.

The kernels below are compiled with numba and shared by the unrolled network
code, so the Python-level :func:`cell_forward` / :func:`cell_backward` run
exactly the arithmetic used during training.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numba import njit

from .exceptions import DivergenceError


class CellKind(str, Enum):
    SIMPLE = "simple"
    DELTA = "delta"
    GRU = "gru"
    LSTM = "lstm"
    MGU = "mgu"
    UGRNN = "ugrnn"

    @property
    def code(self) -> int:
        return CELL_KINDS.index(self)

    @classmethod
    def from_code(cls, code: int) -> "CellKind":
        return CELL_KINDS[code]


CELL_KINDS: tuple[CellKind, ...] = tuple(CellKind)

SIMPLE, DELTA, GRU, LSTM, MGU, UGRNN = range(6)

PARAM_COUNTS: dict[CellKind, int] = {
    CellKind.SIMPLE: 1,
    CellKind.DELTA: 8,
    CellKind.GRU: 9,
    CellKind.LSTM: 12,
    CellKind.MGU: 6,
    CellKind.UGRNN: 6,
}

PARAM_NAMES: dict[CellKind, tuple[str, ...]] = {
    CellKind.SIMPLE: ("b",),
    CellKind.DELTA: ("w", "v", "a", "b1", "b2", "bz", "wr", "br"),
    CellKind.GRU: ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh"),
    CellKind.LSTM: ("wi", "ui", "bi", "wf", "uf", "bf", "wo", "uo", "bo", "wg", "ug", "bg"),
    CellKind.MGU: ("wf", "uf", "bf", "wh", "uh", "bh"),
    CellKind.UGRNN: ("wc", "uc", "bc", "wg", "ug", "bg"),
}

# index of the LSTM forget-gate bias inside its parameter vector
LSTM_FORGET_BIAS = 5
FORGET_BIAS_OFFSET = 1.0

# width of the per-step gate cache
CACHE_WIDTH = 8


def init_params(kind: CellKind, rng: np.random.Generator) -> np.ndarray:
    """Draw a fresh parameter vector, uniform on [-0.5, 0.5]."""
    p = rng.uniform(-0.5, 0.5, PARAM_COUNTS[kind])
    if kind is CellKind.LSTM:
        p[LSTM_FORGET_BIAS] += FORGET_BIAS_OFFSET
    return p


@njit(cache=True)
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def cell_forward_kernel(kind, p, off, x, hp, cp, g):
    """Advance one cell by one step.

    Writes the gate cache into ``g`` and returns ``(h, c)``. ``c`` is 0 for
    every kind except the LSTM.
    """
    if kind == SIMPLE:
        h = np.tanh(x + p[off])
        g[0] = h
        return h, 0.0
    if kind == LSTM:
        i = _sigmoid(p[off] * x + p[off + 1] * hp + p[off + 2])
        f = _sigmoid(p[off + 3] * x + p[off + 4] * hp + p[off + 5])
        o = _sigmoid(p[off + 6] * x + p[off + 7] * hp + p[off + 8])
        gg = np.tanh(p[off + 9] * x + p[off + 10] * hp + p[off + 11])
        c = f * cp + i * gg
        tc = np.tanh(c)
        g[0] = i
        g[1] = f
        g[2] = o
        g[3] = gg
        g[4] = tc
        return o * tc, c
    if kind == GRU:
        z = _sigmoid(p[off] * x + p[off + 1] * hp + p[off + 2])
        r = _sigmoid(p[off + 3] * x + p[off + 4] * hp + p[off + 5])
        hh = np.tanh(p[off + 6] * x + p[off + 7] * (r * hp) + p[off + 8])
        g[0] = z
        g[1] = r
        g[2] = hh
        return (1.0 - z) * hp + z * hh, 0.0
    if kind == MGU:
        f = _sigmoid(p[off] * x + p[off + 1] * hp + p[off + 2])
        hh = np.tanh(p[off + 3] * x + p[off + 4] * (f * hp) + p[off + 5])
        g[0] = f
        g[1] = hh
        return (1.0 - f) * hp + f * hh, 0.0
    if kind == UGRNN:
        ct = np.tanh(p[off] * x + p[off + 1] * hp + p[off + 2])
        gt = _sigmoid(p[off + 3] * x + p[off + 4] * hp + p[off + 5])
        g[0] = ct
        g[1] = gt
        return gt * hp + (1.0 - gt) * ct, 0.0
    # DELTA
    wx = p[off] * x
    vh = p[off + 1] * hp
    z = np.tanh(p[off + 2] * vh * wx + p[off + 3] * vh + p[off + 4] * wx + p[off + 5])
    r = _sigmoid(p[off + 6] * x + p[off + 7])
    h = np.tanh((1.0 - r) * z + r * hp)
    g[0] = z
    g[1] = r
    g[2] = h
    g[3] = wx
    g[4] = vh
    return h, 0.0


@njit(cache=True)
def cell_backward_kernel(kind, p, off, x, hp, cp, g, dh, dc, dp):
    """Chain the upstream gradients ``dh``/``dc`` through one cell step.

    Parameter gradients are accumulated into ``dp[off:]``. Returns
    ``(dx, dh_prev, dc_prev)``.
    """
    if kind == SIMPLE:
        da = dh * (1.0 - g[0] * g[0])
        dp[off] += da
        return da, 0.0, 0.0
    if kind == LSTM:
        i = g[0]
        f = g[1]
        o = g[2]
        gg = g[3]
        tc = g[4]
        dct = dc + dh * o * (1.0 - tc * tc)
        ai = dct * gg * i * (1.0 - i)
        af = dct * cp * f * (1.0 - f)
        ao = dh * tc * o * (1.0 - o)
        ag = dct * i * (1.0 - gg * gg)
        dp[off] += ai * x
        dp[off + 1] += ai * hp
        dp[off + 2] += ai
        dp[off + 3] += af * x
        dp[off + 4] += af * hp
        dp[off + 5] += af
        dp[off + 6] += ao * x
        dp[off + 7] += ao * hp
        dp[off + 8] += ao
        dp[off + 9] += ag * x
        dp[off + 10] += ag * hp
        dp[off + 11] += ag
        dx = p[off] * ai + p[off + 3] * af + p[off + 6] * ao + p[off + 9] * ag
        dhp = p[off + 1] * ai + p[off + 4] * af + p[off + 7] * ao + p[off + 10] * ag
        return dx, dhp, dct * f
    if kind == GRU:
        z = g[0]
        r = g[1]
        hh = g[2]
        ah = dh * z * (1.0 - hh * hh)
        az = dh * (hh - hp) * z * (1.0 - z)
        ar = p[off + 7] * ah * hp * r * (1.0 - r)
        dp[off] += az * x
        dp[off + 1] += az * hp
        dp[off + 2] += az
        dp[off + 3] += ar * x
        dp[off + 4] += ar * hp
        dp[off + 5] += ar
        dp[off + 6] += ah * x
        dp[off + 7] += ah * r * hp
        dp[off + 8] += ah
        dx = p[off] * az + p[off + 3] * ar + p[off + 6] * ah
        dhp = dh * (1.0 - z) + p[off + 1] * az + p[off + 4] * ar + p[off + 7] * ah * r
        return dx, dhp, 0.0
    if kind == MGU:
        f = g[0]
        hh = g[1]
        ah = dh * f * (1.0 - hh * hh)
        af = (dh * (hh - hp) + p[off + 4] * ah * hp) * f * (1.0 - f)
        dp[off] += af * x
        dp[off + 1] += af * hp
        dp[off + 2] += af
        dp[off + 3] += ah * x
        dp[off + 4] += ah * f * hp
        dp[off + 5] += ah
        dx = p[off] * af + p[off + 3] * ah
        dhp = dh * (1.0 - f) + p[off + 1] * af + p[off + 4] * ah * f
        return dx, dhp, 0.0
    if kind == UGRNN:
        ct = g[0]
        gt = g[1]
        ac = dh * (1.0 - gt) * (1.0 - ct * ct)
        ag = dh * (hp - ct) * gt * (1.0 - gt)
        dp[off] += ac * x
        dp[off + 1] += ac * hp
        dp[off + 2] += ac
        dp[off + 3] += ag * x
        dp[off + 4] += ag * hp
        dp[off + 5] += ag
        dx = p[off] * ac + p[off + 3] * ag
        dhp = dh * gt + p[off + 1] * ac + p[off + 4] * ag
        return dx, dhp, 0.0
    # DELTA
    z = g[0]
    r = g[1]
    h = g[2]
    wx = g[3]
    vh = g[4]
    du = dh * (1.0 - h * h)
    az = du * (1.0 - r) * (1.0 - z * z)
    ar = du * (hp - z) * r * (1.0 - r)
    dwx = az * (p[off + 2] * vh + p[off + 4])
    dvh = az * (p[off + 2] * wx + p[off + 3])
    dp[off] += dwx * x
    dp[off + 1] += dvh * hp
    dp[off + 2] += az * vh * wx
    dp[off + 3] += az * vh
    dp[off + 4] += az * wx
    dp[off + 5] += az
    dp[off + 6] += ar * x
    dp[off + 7] += ar
    dx = dwx * p[off] + ar * p[off + 6]
    dhp = du * r + dvh * p[off + 1]
    return dx, dhp, 0.0


@dataclass
class CellState:
    """Output of one cell step; ``cache`` holds gate activations for backprop."""

    h: float = 0.0
    c: float = 0.0
    cache: np.ndarray = field(default_factory=lambda: np.zeros(CACHE_WIDTH))


@dataclass
class CellGradients:
    input: float
    params: np.ndarray
    prev_h: float
    prev_c: float


def _check_params(kind: CellKind, params) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (PARAM_COUNTS[kind],):
        raise ValueError(
            f"{kind.value} cell takes {PARAM_COUNTS[kind]} parameters, got shape {params.shape}"
        )
    return params


def cell_forward(kind: CellKind, params, x: float, prev: CellState | None = None) -> CellState:
    """One step of ``kind`` on aggregated input ``x``; ``prev=None`` is the zero state."""
    kind = CellKind(kind)
    params = _check_params(kind, params)
    hp, cp = (0.0, 0.0) if prev is None else (prev.h, prev.c)
    if not np.isfinite(x):
        raise DivergenceError(f"non-finite input {x!r} to {kind.value} cell")
    cache = np.zeros(CACHE_WIDTH)
    h, c = cell_forward_kernel(kind.code, params, 0, float(x), float(hp), float(cp), cache)
    return CellState(h=h, c=c, cache=cache)


def cell_backward(
    kind: CellKind,
    params,
    x: float,
    prev: CellState | None,
    state: CellState,
    dh: float,
    dc: float = 0.0,
) -> CellGradients:
    """Exact gradients of one step given upstream ``dh`` (and ``dc`` for the LSTM)."""
    kind = CellKind(kind)
    params = _check_params(kind, params)
    hp, cp = (0.0, 0.0) if prev is None else (prev.h, prev.c)
    dp = np.zeros_like(params)
    dx, dhp, dcp = cell_backward_kernel(
        kind.code, params, 0, float(x), float(hp), float(cp), state.cache, float(dh), float(dc), dp
    )
    return CellGradients(input=dx, params=dp, prev_h=dhp, prev_c=dcp)
