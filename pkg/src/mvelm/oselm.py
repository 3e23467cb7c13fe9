"""Online-sequential ELM.

State keeps ``G = (I/C + H^T H)^{-1}`` over everything seen so far and the
current output weights. A new chunk ``(H_d, T_d)`` is absorbed with

    G1   = G0 - G0 H_d^T (I + H_d G0 H_d^T)^{-1} H_d G0
    beta = beta + G1 H_d^T (T_d - H_d beta)

which reproduces the regularized batch solution on the concatenated data.
Updates are functional: the input state is never modified.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .numerics import IndefiniteMatrixError, NumericsError, ShapeError, as_matrix, solve_spd


class NumericalBreakdown(NumericsError):
    """The inner chunk system could not be solved."""

    def __init__(self, message: str, n_seen: int, chunk_rows: int):
        super().__init__(f"{message} (n_seen={n_seen}, chunk_rows={chunk_rows})")
        self.n_seen = n_seen
        self.chunk_rows = chunk_rows


@dataclass(frozen=True)
class OnlineState:
    g: np.ndarray
    beta: np.ndarray
    n_seen: int
    c_reg: float

    @property
    def n_hidden(self) -> int:
        return self.g.shape[0]


def init_online(h0, t0, c_reg: float) -> OnlineState:
    if not c_reg > 0:
        raise ValueError(f"regularization C must be positive, got {c_reg}")
    h0 = as_matrix(h0, "h0")
    t0 = as_matrix(t0, "t0")
    if h0.shape[0] < 1 or h0.shape[0] != t0.shape[0]:
        raise ShapeError(f"need N0 >= 1 aligned rows, got h0 {h0.shape}, t0 {t0.shape}")
    gram = h0.T @ h0
    gram[np.diag_indices_from(gram)] += 1.0 / c_reg
    g = solve_spd(gram, np.eye(gram.shape[0]))
    g = 0.5 * (g + g.T)
    return OnlineState(g=g, beta=g @ (h0.T @ t0), n_seen=h0.shape[0], c_reg=c_reg)


def _apply_block(g0, beta0, h, t, n_seen):
    gh = g0 @ h.T
    inner = h @ gh
    inner[np.diag_indices_from(inner)] += 1.0
    try:
        k = solve_spd(inner, gh.T)
    except IndefiniteMatrixError as exc:
        raise NumericalBreakdown(str(exc), n_seen, h.shape[0]) from None
    g1 = g0 - gh @ k
    g1 = 0.5 * (g1 + g1.T)
    beta1 = beta0 + g1 @ (h.T @ (t - h @ beta0))
    return g1, beta1


def update_chunk(state: OnlineState, h_delta, t_delta, max_block: int | None = None) -> OnlineState:
    """Absorb one chunk and return the new state.

    Chunks larger than ``max_block`` rows (default: the hidden width) are fed
    through the recursion in consecutive blocks, which is algebraically the
    same update but keeps the inner solve small.
    """
    h = as_matrix(h_delta, "h_delta")
    t = as_matrix(t_delta, "t_delta")
    if h.shape[0] == 0:
        return state
    if h.shape[1] != state.n_hidden:
        raise ShapeError(f"chunk has {h.shape[1]} hidden columns, state has {state.n_hidden}")
    if t.shape != (h.shape[0], state.beta.shape[1]):
        raise ShapeError(f"targets shape {t.shape} does not match chunk/state")
    block = max_block or state.n_hidden
    g, beta = state.g, state.beta
    for start in range(0, h.shape[0], block):
        g, beta = _apply_block(g, beta, h[start:start + block], t[start:start + block],
                               state.n_seen + start)
    return OnlineState(g=g, beta=beta, n_seen=state.n_seen + h.shape[0], c_reg=state.c_reg)


class Snapshot:
    """Single-writer holder; readers always see a whole state object."""

    def __init__(self, value):
        self._lock = threading.Lock()
        self._value = value

    def get(self):
        with self._lock:
            return self._value

    def swap(self, value):
        with self._lock:
            old, self._value = self._value, value
        return old
