"""JSON checkpoint container for trained (multi-view) ELM models.

Layout (``format_version`` 1)::

    format           "mvelm-checkpoint"
    format_version   1
    revision         1 for a fresh model, +1 for every derived checkpoint
    parent_sha256    sha256 of the checkpoint this one was derived from, or null
    seed             RNG seed the hidden layers were drawn from
    classes          ordered class labels (score columns)
    c_reg, r         regularization C and fusion power factor
    k                fusion coefficients, one per view
    views            [{name, activation: {kind, rbf_gamma}, weights, biases}]
    beta             current output weights (n_hidden x m)
    g                running inverse regularized Gram (n_hidden x n_hidden)
    n_seen           samples absorbed into g/beta
    normalizer       {mean, std} over the 44 schema attributes, or null
    objective_trace  fusion objective after every half-step
    converged, n_iter
    config           free-form training configuration

Floats are written with ``repr`` so reading a checkpoint back is exact.
Checkpoints are never overwritten in place.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .elm import Activation, ElmModel, HiddenLayer
from .fusion import FusionState, MvOnlineState, ViewSpec
from .ingest import Normalizer
from .oselm import OnlineState

FORMAT = "mvelm-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Checkpoint:
    specs: tuple
    classes: tuple
    k: np.ndarray
    r: float
    c_reg: float
    beta: np.ndarray
    g: np.ndarray
    n_seen: int
    seed: int = 0
    normalizer: Normalizer | None = None
    objective_trace: tuple = ()
    converged: bool = True
    n_iter: int = 0
    revision: int = 1
    parent_sha256: str | None = None
    config: dict = field(default_factory=dict)

    @property
    def view_names(self) -> list[str]:
        return [s.name for s in self.specs]

    def fusion_state(self) -> FusionState:
        return FusionState(k=self.k, r=self.r, beta=self.beta, c_reg=self.c_reg,
                           objective_trace=self.objective_trace, converged=self.converged,
                           n_iter=self.n_iter)

    def online_state(self) -> MvOnlineState:
        return MvOnlineState(k=self.k, r=self.r,
                             online=OnlineState(g=self.g, beta=self.beta, n_seen=self.n_seen,
                                                c_reg=self.c_reg))

    def with_online(self, state: MvOnlineState, parent_sha256: str | None) -> "Checkpoint":
        return replace(self, beta=state.online.beta, g=state.online.g, n_seen=state.online.n_seen,
                       revision=self.revision + 1, parent_sha256=parent_sha256)

    def elm_model(self) -> ElmModel:
        if len(self.specs) != 1:
            raise CheckpointError("only single-view checkpoints convert to a plain ELM model")
        return ElmModel(self.specs[0].layer, self.beta, self.c_reg, self.classes)


def from_elm_model(model: ElmModel, g: np.ndarray | None = None, n_seen: int = 0,
                   seed: int = 0, name: str = "x") -> Checkpoint:
    g = np.eye(model.layer.n_hidden) * model.c_reg if g is None else g
    return Checkpoint(specs=(ViewSpec(name, model.layer),), classes=tuple(model.classes),
                      k=np.ones(1), r=2.0, c_reg=model.c_reg, beta=model.beta, g=g,
                      n_seen=n_seen, seed=seed)


def _mat(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def to_dict(ckpt: Checkpoint) -> dict:
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "revision": ckpt.revision,
        "parent_sha256": ckpt.parent_sha256,
        "seed": ckpt.seed,
        "classes": list(ckpt.classes),
        "c_reg": ckpt.c_reg,
        "r": ckpt.r,
        "k": _mat(ckpt.k),
        "views": [
            {
                "name": s.name,
                "activation": {"kind": s.layer.activation.kind,
                               "rbf_gamma": s.layer.activation.rbf_gamma},
                "weights": _mat(s.layer.weights),
                "biases": _mat(s.layer.biases),
            }
            for s in ckpt.specs
        ],
        "beta": _mat(ckpt.beta),
        "g": _mat(ckpt.g),
        "n_seen": ckpt.n_seen,
        "normalizer": None if ckpt.normalizer is None else ckpt.normalizer.to_dict(),
        "objective_trace": list(ckpt.objective_trace),
        "converged": ckpt.converged,
        "n_iter": ckpt.n_iter,
        "config": ckpt.config,
    }


def from_dict(d: dict) -> Checkpoint:
    if d.get("format") != FORMAT:
        raise CheckpointError("not an mvelm checkpoint")
    if d.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {d.get('format_version')}")
    specs = tuple(
        ViewSpec(v["name"], HiddenLayer(np.array(v["weights"], dtype=np.float64),
                                        np.array(v["biases"], dtype=np.float64),
                                        Activation(v["activation"]["kind"],
                                                   v["activation"]["rbf_gamma"])))
        for v in d["views"]
    )
    norm = d.get("normalizer")
    return Checkpoint(
        specs=specs,
        classes=tuple(d["classes"]),
        k=np.array(d["k"], dtype=np.float64),
        r=float(d["r"]),
        c_reg=float(d["c_reg"]),
        beta=np.array(d["beta"], dtype=np.float64),
        g=np.array(d["g"], dtype=np.float64),
        n_seen=int(d["n_seen"]),
        seed=int(d["seed"]),
        normalizer=None if norm is None else Normalizer.from_dict(norm),
        objective_trace=tuple(d.get("objective_trace", ())),
        converged=bool(d.get("converged", True)),
        n_iter=int(d.get("n_iter", 0)),
        revision=int(d.get("revision", 1)),
        parent_sha256=d.get("parent_sha256"),
        config=d.get("config", {}),
    )


def dumps(ckpt: Checkpoint) -> str:
    return json.dumps(to_dict(ckpt), separators=(",", ":")) + "\n"


def save(path, ckpt: Checkpoint, overwrite: bool = False) -> str:
    """Write ``ckpt`` and return its sha256."""
    path = Path(path)
    if path.exists() and not overwrite:
        raise FileExistsError(f"refusing to overwrite checkpoint {path}")
    text = dumps(ckpt)
    path.write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode()).hexdigest()


def load(path) -> Checkpoint:
    return from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
