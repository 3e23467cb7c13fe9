"""Multi-view ELM fusion.

Every view ``v`` has its own random hidden layer producing ``H_v``; all
views share the output weights ``beta`` and the targets ``T``. Training
minimizes

    J(beta, k) = 1/2 ||beta||^2 + C/2 * sum_v k_v^r ||H_v beta - T||_F^2

over ``beta`` and the fusion coefficients ``k`` (on the simplex, r >= 2)
by alternating the two exact block minimizers:

    beta-step: beta = (I/C + sum_v k_v^r H_v^T H_v)^{-1} sum_v k_v^r H_v^T T
    k-step:    k_v  = e_v^{1/(1-r)} / sum_u e_u^{1/(1-r)},  e_v = ||H_v beta - T||_F^2

Online, ``k`` is frozen and chunks are absorbed by stacking the views as
row blocks scaled by ``k_v^{r/2}`` and running the OS-ELM recursion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import oselm
from .elm import HiddenLayer, hidden_output
from .numerics import NumericsError, ShapeError, as_matrix, solve_spd

log = logging.getLogger(__name__)

DEFAULT_R = 2.0
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100


@dataclass(frozen=True)
class ViewSpec:
    name: str
    layer: HiddenLayer

    @property
    def dim(self) -> int:
        return self.layer.d


@dataclass(frozen=True)
class FusionState:
    k: np.ndarray
    r: float
    beta: np.ndarray
    c_reg: float
    objective_trace: tuple = ()
    converged: bool = False
    n_iter: int = 0

    def view_weights(self) -> np.ndarray:
        """``k_v^r`` normalized to sum to one (test-time combination weights)."""
        kr = self.k ** self.r
        return kr / kr.sum()


@dataclass(frozen=True)
class MvOnlineState:
    k: np.ndarray
    r: float
    online: oselm.OnlineState = field(repr=False)

    @property
    def beta(self) -> np.ndarray:
        return self.online.beta


def _check_views(views: Sequence) -> list[np.ndarray]:
    hs = [as_matrix(h, f"H[{i}]") for i, h in enumerate(views)]
    if not hs:
        raise ValueError("need at least one view")
    shape = hs[0].shape
    for i, h in enumerate(hs):
        if h.shape != shape:
            raise ShapeError(f"view {i} has shape {h.shape}, view 0 has {shape}")
    return hs


def _check_k(k, n_views: int) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64).ravel()
    if k.shape[0] != n_views:
        raise ShapeError(f"{k.shape[0]} coefficients for {n_views} views")
    if np.any(~(k > 0)):
        raise ValueError(f"fusion coefficients must be positive, got {k.tolist()}")
    return k


def view_errors(views, t, beta) -> np.ndarray:
    """Squared Frobenius training error of each view under shared ``beta``."""
    t = as_matrix(t, "t")
    return np.array([float(np.sum((h @ beta - t) ** 2)) for h in views])


def objective(views, t, beta, k, r: float, c_reg: float) -> float:
    e = view_errors(views, t, beta)
    return 0.5 * float(np.sum(beta * beta)) + 0.5 * c_reg * float(np.sum(np.asarray(k) ** r * e))


def _weighted_gram(hs, t, kr, c_reg):
    n_hidden = hs[0].shape[1]
    gram = np.zeros((n_hidden, n_hidden))
    rhs = np.zeros((n_hidden, t.shape[1]))
    for h, w in zip(hs, kr):
        gram += w * (h.T @ h)
        rhs += w * (h.T @ t)
    gram[np.diag_indices_from(gram)] += 1.0 / c_reg
    return gram, rhs


def solve_beta_given_k(views, t, k, r: float, c_reg: float) -> np.ndarray:
    if not c_reg > 0:
        raise ValueError(f"regularization C must be positive, got {c_reg}")
    hs = _check_views(views)
    t = as_matrix(t, "t")
    if t.shape[0] != hs[0].shape[0]:
        raise ShapeError(f"targets have {t.shape[0]} rows, views have {hs[0].shape[0]}")
    k = _check_k(k, len(hs))
    gram, rhs = _weighted_gram(hs, t, k ** r, c_reg)
    return solve_spd(gram, rhs)


def update_k_given_beta(views, t, beta, r: float) -> np.ndarray:
    if not r >= 2:
        raise ValueError(f"power factor r must be >= 2, got {r}")
    hs = _check_views(views)
    e = view_errors(hs, t, beta)
    return coefficients_from_errors(e, r)


def coefficients_from_errors(e, r: float) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    zero = e <= 0.0
    if zero.any():
        # limit of e^{1/(1-r)} as e -> 0: zero-error views take all the mass
        k = zero.astype(np.float64)
        return k / k.sum()
    # normalize in log space so tiny/huge errors do not under/overflow
    logw = np.log(e) / (1.0 - r)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def fuse_train(views, t, r: float = DEFAULT_R, c_reg: float = 1.0, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER) -> FusionState:
    """Alternate exact beta- and k-steps from uniform ``k`` until the
    relative objective change drops below ``tol``.

    A final beta-step is taken with the last ``k`` so the returned ``beta``
    is the exact minimizer for the returned coefficients.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not r >= 2:
        raise ValueError(f"power factor r must be >= 2, got {r}")
    hs = _check_views(views)
    t = as_matrix(t, "t")
    if hs[0].shape[0] < 2:
        raise ValueError("need at least two training samples")
    k = np.full(len(hs), 1.0 / len(hs))
    trace: list[float] = []
    converged = False
    beta = None
    it = 0
    for it in range(1, max_iter + 1):
        try:
            beta = solve_beta_given_k(hs, t, k, r, c_reg)
        except NumericsError as exc:
            raise type(exc)(f"fusion iteration {it}: {exc}") from None
        j_beta = objective(hs, t, beta, k, r, c_reg)
        prev = trace[-1] if trace else None
        trace.append(j_beta)
        k = update_k_given_beta(hs, t, beta, r)
        if np.any(k <= 0):
            # a zero-error view absorbed the mass; keep the others strictly positive
            k = np.maximum(k, np.finfo(float).tiny)
            k /= k.sum()
        j_k = objective(hs, t, beta, k, r, c_reg)
        trace.append(j_k)
        ref = prev if prev is not None else j_beta
        if abs(ref - j_k) <= tol * max(abs(j_k), np.finfo(float).tiny):
            converged = True
            break
    beta = solve_beta_given_k(hs, t, k, r, c_reg)
    trace.append(objective(hs, t, beta, k, r, c_reg))
    log.debug("fusion finished after %d iterations, k=%s", it, k)
    return FusionState(k=k, r=float(r), beta=beta, c_reg=float(c_reg),
                       objective_trace=tuple(trace), converged=converged, n_iter=it)


def fused_hidden(specs: Sequence[ViewSpec], weights, x_views) -> np.ndarray:
    """``sum_v w_v h_v(x_v)`` for normalized view weights ``w``."""
    if len(x_views) != len(specs):
        raise ShapeError(f"got {len(x_views)} views, model has {len(specs)}")
    out = None
    for spec, w, x in zip(specs, weights, x_views):
        if x is None:
            raise ShapeError(f"view {spec.name!r} is missing")
        h = w * hidden_output(spec.layer, x)
        out = h if out is None else out + h
    return out


def fused_predict(specs: Sequence[ViewSpec], state: FusionState, x_views) -> np.ndarray:
    return fused_hidden(specs, state.view_weights(), x_views) @ state.beta


def stack_views(views, t, k, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-stack ``k_v^{r/2} H_v`` and matching ``k_v^{r/2} T``.

    Ordinary ridge on the stacked system has the same objective as the
    fused one for fixed ``k``.
    """
    hs = _check_views(views)
    t = as_matrix(t, "t")
    scale = np.asarray(k, dtype=np.float64) ** (r / 2.0)
    h_stack = np.vstack([s * h for s, h in zip(scale, hs)])
    t_stack = np.vstack([s * t for s in scale])
    return h_stack, t_stack


def init_online_fusion(views, t, state: FusionState) -> MvOnlineState:
    h, ts = stack_views(views, t, state.k, state.r)
    online = oselm.init_online(h, ts, state.c_reg)
    online = replace(online, n_seen=as_matrix(views[0]).shape[0])
    return MvOnlineState(k=state.k.copy(), r=state.r, online=online)


def online_fuse_update(state: MvOnlineState, chunk_views, t_delta) -> MvOnlineState:
    if not chunk_views or as_matrix(chunk_views[0]).shape[0] == 0:
        return state
    h, ts = stack_views(chunk_views, t_delta, state.k, state.r)
    online = oselm.update_chunk(state.online, h, ts)
    # stacked rows count V times; n_seen tracks samples, not rows
    online = replace(online, n_seen=state.online.n_seen + as_matrix(chunk_views[0]).shape[0])
    return replace(state, online=online)
