"""Single-hidden-layer extreme learning machine.

Input weights are random and fixed; only the output weights ``beta`` are
solved, in closed form, as the ridge solution

    beta = (I/C + H^T H)^{-1} H^T T

where ``H`` is the hidden activation matrix and ``T`` the +1/-1 encoded
targets. A per-sample weighted variant is provided for retraining.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .numerics import SeededRng, ShapeError, as_matrix, rand_uniform, solve_spd

DEFAULT_N_HIDDEN = 100
DEFAULT_C = 1.0


@dataclass(frozen=True)
class Activation:
    kind: str = "sigmoid"
    rbf_gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("sigmoid", "rbf"):
            raise ValueError(f"unknown activation {self.kind!r}; expected 'sigmoid' or 'rbf'")
        if self.kind == "rbf" and self.rbf_gamma is not None and not self.rbf_gamma > 0:
            raise ValueError("rbf_gamma must be positive")


@dataclass(frozen=True)
class HiddenLayer:
    """Random feature map ``x -> h(x)`` with ``n_hidden`` nodes.

    ``weights`` is ``n_hidden x d``. For RBF nodes the rows of ``weights``
    are the centres and ``biases`` are unused.
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: Activation = field(default_factory=Activation)

    @property
    def n_hidden(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    @property
    def gamma(self) -> float:
        g = self.activation.rbf_gamma
        return 1.0 / self.d if g is None else g


@dataclass(frozen=True)
class ElmModel:
    layer: HiddenLayer
    beta: np.ndarray
    c_reg: float
    classes: tuple

    def __post_init__(self):
        if self.beta.shape[0] != self.layer.n_hidden:
            raise ShapeError(
                f"beta has {self.beta.shape[0]} rows, layer has {self.layer.n_hidden} nodes"
            )
        if len(self.classes) < 2:
            raise ValueError("an ELM classifier needs at least two classes")
        if self.beta.shape[1] != len(self.classes):
            raise ShapeError("beta columns must match the number of classes")


def init_hidden(d: int, n_hidden: int, act: Activation, rng: SeededRng) -> HiddenLayer:
    """Draw input weights from U[-1, 1] and biases from U[0, 1]."""
    if d < 1 or n_hidden < 1:
        raise ValueError(f"need d >= 1 and n_hidden >= 1, got d={d}, n_hidden={n_hidden}")
    weights = rand_uniform(rng, n_hidden, d, -1.0, 1.0)
    biases = rand_uniform(rng, 1, n_hidden, 0.0, 1.0).ravel()
    return HiddenLayer(weights, biases, act)


def hidden_output(layer: HiddenLayer, x_batch) -> np.ndarray:
    x = as_matrix(x_batch, "x_batch")
    if x.shape[1] != layer.d:
        raise ShapeError(f"input has {x.shape[1]} features, layer expects {layer.d}")
    if layer.activation.kind == "sigmoid":
        z = x @ layer.weights.T + layer.biases
        # tanh form of the logistic avoids overflow warnings for large |z|
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    sq = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * x @ layer.weights.T
        + np.sum(layer.weights * layer.weights, axis=1)[None, :]
    )
    return np.exp(-layer.gamma * np.maximum(sq, 0.0))


def _check_c(c_reg: float):
    if not c_reg > 0:
        raise ValueError(f"regularization C must be positive, got {c_reg}")


def train_batch(h, t, c_reg: float) -> np.ndarray:
    """Ridge output weights ``(I/C + H^T H)^{-1} H^T T``."""
    _check_c(c_reg)
    h = as_matrix(h, "h")
    t = as_matrix(t, "t")
    if h.shape[0] != t.shape[0]:
        raise ShapeError(f"h has {h.shape[0]} rows, t has {t.shape[0]}")
    gram = h.T @ h
    gram[np.diag_indices_from(gram)] += 1.0 / c_reg
    return solve_spd(gram, h.T @ t)


def train_batch_dual(h, t, c_reg: float) -> np.ndarray:
    """Equivalent N x N form ``H^T (I/C + H H^T)^{-1} T``; cheaper when N < n_hidden."""
    _check_c(c_reg)
    h = as_matrix(h, "h")
    t = as_matrix(t, "t")
    kernel = h @ h.T
    kernel[np.diag_indices_from(kernel)] += 1.0 / c_reg
    return h.T @ solve_spd(kernel, t)


def train_weighted(h, t, c_reg: float, w) -> np.ndarray:
    """Weighted ridge ``(I/C + H^T W H)^{-1} H^T W T`` with ``W = diag(w)``."""
    _check_c(c_reg)
    h = as_matrix(h, "h")
    t = as_matrix(t, "t")
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.shape[0] != h.shape[0] or h.shape[0] != t.shape[0]:
        raise ShapeError(f"need aligned rows: h {h.shape[0]}, t {t.shape[0]}, w {w.shape[0]}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("sample weights must be finite and non-negative")
    if not np.any(w > 0):
        raise ValueError("at least one sample weight must be positive")
    hw = h * w[:, None]
    gram = hw.T @ h
    gram[np.diag_indices_from(gram)] += 1.0 / c_reg
    return solve_spd(gram, hw.T @ t)


def ridge_objective(beta, h, t, c_reg: float) -> float:
    """``1/2 ||beta||^2 + C/2 ||H beta - T||_F^2``."""
    resid = h @ beta - t
    return 0.5 * float(np.sum(beta * beta)) + 0.5 * c_reg * float(np.sum(resid * resid))


def encode_labels(labels: Sequence, classes: Sequence) -> np.ndarray:
    """Targets with +1 at the true class and -1 elsewhere."""
    index = {c: i for i, c in enumerate(classes)}
    t = -np.ones((len(labels), len(classes)))
    for row, lab in enumerate(labels):
        try:
            t[row, index[lab]] = 1.0
        except KeyError:
            raise ValueError(f"label {lab!r} not among classes {list(classes)}") from None
    return t


def decode(scores, classes: Sequence) -> list[tuple]:
    """Per row ``(argmax class, row maximum)``; ties go to the lowest index."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] == 0:
        raise ValueError("scores must be a non-empty 2-D matrix")
    if s.shape[1] != len(classes):
        raise ShapeError(f"scores have {s.shape[1]} columns for {len(classes)} classes")
    idx = np.argmax(s, axis=1)
    margins = s[np.arange(s.shape[0]), idx]
    return [(classes[i], float(m)) for i, m in zip(idx, margins)]


def fit(x, labels, classes=None, n_hidden: int = DEFAULT_N_HIDDEN, c_reg: float = DEFAULT_C,
        act: Activation | None = None, seed: int = 0) -> ElmModel:
    """Convenience: draw a layer and train it on labelled rows of ``x``."""
    x = as_matrix(x, "x")
    classes = tuple(sorted(set(labels))) if classes is None else tuple(classes)
    layer = init_hidden(x.shape[1], n_hidden, act or Activation(), SeededRng(seed))
    beta = train_batch(hidden_output(layer, x), encode_labels(labels, classes), c_reg)
    return ElmModel(layer, beta, c_reg, classes)


def predict(model: ElmModel, x_batch) -> np.ndarray:
    return hidden_output(model.layer, x_batch) @ model.beta


def with_beta(model: ElmModel, beta: np.ndarray) -> ElmModel:
    return replace(model, beta=beta)
