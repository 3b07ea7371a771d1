"""The self-encoder: a network trained to output the index of each training sample.

For a fitted model, ``predict_proba(model, x)[:, j]`` is the probability that
``x`` is anchor ``j``; ranking anchors by it gives the learned neighborhood of
``x``.  :func:`transfer_weights` rewrites the first layer so that the model
behaves identically on affinely transformed data.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .linalg import Rng, ShapeError, as_matrix, invert
from .nn import Activation, Network
from .optim import TrainSchedule, train

log = logging.getLogger(__name__)

MODEL_FORMAT = "selfenc-model"
MODEL_VERSION = 1


class DuplicateRowsWarning(UserWarning):
    """Identical training rows share one point, so no model can separate them."""


@dataclass(frozen=True)
class SelfEncoderConfig:
    hidden_dims: tuple[int, ...] = ()
    hidden_activation: Activation = Activation.RELU
    output_normalization: Activation = Activation.SOFTMAX
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    sample_size: int | None = None
    seed: int = 0
    standardize_inputs: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "hidden_activation", Activation.parse(self.hidden_activation))
        object.__setattr__(self, "output_normalization", Activation.parse(self.output_normalization))
        if self.output_normalization not in nn.OUTPUT_ACTIVATIONS:
            raise ValueError(f"output normalization must be sigmoid or softmax, got {self.output_normalization.value}")
        if self.hidden_activation is Activation.SOFTMAX:
            raise ValueError("softmax cannot be a hidden activation")
        if self.sample_size is not None and self.sample_size < 1:
            raise ValueError(f"sample_size must be at least 1, got {self.sample_size}")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden dims must be positive, got {self.hidden_dims}")

    def to_dict(self) -> dict:
        return {
            "hidden_dims": list(self.hidden_dims),
            "hidden_activation": self.hidden_activation.value,
            "output_normalization": self.output_normalization.value,
            "schedule": asdict(self.schedule),
            "sample_size": self.sample_size,
            "seed": self.seed,
            "standardize_inputs": self.standardize_inputs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SelfEncoderConfig:
        return cls(
            hidden_dims=tuple(d["hidden_dims"]),
            hidden_activation=d["hidden_activation"],
            output_normalization=d["output_normalization"],
            schedule=TrainSchedule(**d["schedule"]),
            sample_size=d["sample_size"],
            seed=d["seed"],
            standardize_inputs=d.get("standardize_inputs", True),
        )


@dataclass
class SelfEncoderModel:
    network: Network
    anchor_indices: np.ndarray
    anchor_features: np.ndarray
    config: SelfEncoderConfig
    history: list[float] = field(default_factory=list, compare=False)

    def __post_init__(self):
        self.anchor_indices = np.asarray(self.anchor_indices, dtype=np.intp).reshape(-1)
        self.anchor_features = as_matrix(self.anchor_features, "anchor features")
        n = self.network.output_dim
        if len(self.anchor_indices) != n or self.anchor_features.shape[0] != n:
            raise ShapeError(
                f"network has {n} outputs but {len(self.anchor_indices)} anchor indices "
                f"and {self.anchor_features.shape[0]} anchor rows"
            )
        if len(np.unique(self.anchor_indices)) != n:
            raise ValueError("anchor indices must be distinct")

    @property
    def n_anchors(self) -> int:
        return self.network.output_dim

    @property
    def input_dim(self) -> int:
        return self.network.input_dim


@dataclass(frozen=True)
class AffineTransform:
    """The map ``x -> M x + v``."""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix, "transform matrix")
        if m.shape[0] != m.shape[1]:
            raise ShapeError(f"transform matrix must be square, got {m.shape}")
        v = np.asarray(self.offset, dtype=np.float64).reshape(-1)
        if v.shape[0] != m.shape[0]:
            raise ShapeError(f"offset has length {v.shape[0]}, matrix is {m.shape[0]}x{m.shape[0]}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", v)
        object.__setattr__(self, "_inverse", invert(m))

    @classmethod
    def identity(cls, d: int) -> AffineTransform:
        return cls(np.eye(d), np.zeros(d))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def inverse_matrix(self) -> np.ndarray:
        return self._inverse

    def apply(self, x) -> np.ndarray:
        """Transform row vectors (a single vector or one sample per row)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ShapeError(f"transform acts on dimension {self.dim}, got shape {x.shape}")
        return x @ self.matrix.T + self.offset

    def inverse(self) -> AffineTransform:
        inv = self._inverse
        return AffineTransform(inv, -inv @ self.offset)


@dataclass(frozen=True)
class NeighborRanking:
    anchor_indices: np.ndarray
    probabilities: np.ndarray

    def __len__(self):
        return len(self.anchor_indices)

    def top(self, k: int) -> list[tuple[int, float]]:
        return [(int(i), float(p)) for i, p in zip(self.anchor_indices[:k], self.probabilities[:k])]


def sample_subset(x_train, s: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly choose ``s`` distinct training rows; indices come back ascending."""
    x_train = as_matrix(x_train, "training data")
    if s < 1:
        raise ValueError(f"sample size must be at least 1, got {s}")
    idx = rng.choice_without_replacement(x_train.shape[0], s)
    return idx, x_train[idx].copy()


def _duplicate_groups(x: np.ndarray) -> list[np.ndarray]:
    _, inverse, counts = np.unique(x, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    return [np.flatnonzero(inverse == g) for g in np.flatnonzero(counts > 1)]


def fit(x_train, config: SelfEncoderConfig | None = None) -> SelfEncoderModel:
    """Train a self-encoder whose outputs identify the rows of ``x_train`` (or a sample of them)."""
    config = config or SelfEncoderConfig()
    x_train = as_matrix(x_train, "training data")
    n, d = x_train.shape
    if n < 2:
        raise ValueError(f"need at least 2 training rows, got {n}")
    rng = Rng(config.seed)
    if config.sample_size is not None and config.sample_size < n:
        anchors, anchor_x = sample_subset(x_train, config.sample_size, rng.derive(1))
    else:
        if config.sample_size is not None and config.sample_size > n:
            log.info("sample size %d exceeds %d training rows; using all rows", config.sample_size, n)
        anchors, anchor_x = np.arange(n, dtype=np.intp), x_train.copy()
    dupes = _duplicate_groups(anchor_x)
    if dupes:
        warnings.warn(
            f"{len(dupes)} groups of duplicate training rows cannot be told apart", DuplicateRowsWarning, stacklevel=2
        )

    dims = [d, *config.hidden_dims, len(anchors)]
    acts = [config.hidden_activation] * len(config.hidden_dims) + [config.output_normalization]
    net = nn.init_network(dims, acts, rng.derive(2))
    if not config.standardize_inputs:
        result = train(net, anchor_x, np.arange(len(anchors)), config.schedule)
        return SelfEncoderModel(result.network, anchors, anchor_x, config, history=result.history)
    # Train in standardized coordinates, then fold the standardization into the
    # first layer: same function class and optimum, but Adam's per-weight step
    # no longer depends on the units of each feature.
    cond = standardizer(anchor_x)
    result = train(net, cond.apply(anchor_x), np.arange(len(anchors)), config.schedule)
    return SelfEncoderModel(
        _transfer_network(result.network, cond.inverse()), anchors, anchor_x, config, history=result.history
    )


def standardizer(x: np.ndarray) -> AffineTransform:
    """Per-feature map to zero mean and unit variance; constant features are only centred."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    tiny = std <= 1e-12 * np.maximum(np.abs(mean), 1.0)
    std = np.where(tiny, 1.0, std)
    return AffineTransform(np.diag(1.0 / std), -mean / std)


def predict_proba(model: SelfEncoderModel, x) -> np.ndarray:
    return nn.predict_proba(model.network, x)


def _order(probs: np.ndarray, anchor_indices: np.ndarray) -> np.ndarray:
    # descending probability, ties by ascending anchor index
    return np.lexsort((anchor_indices, -probs))


def rank_neighbors(model: SelfEncoderModel, x) -> NeighborRanking:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != model.input_dim:
        raise ShapeError(f"model expects dimension {model.input_dim}, got {x.shape[0]}")
    probs = predict_proba(model, x)[0]
    order = _order(probs, model.anchor_indices)
    return NeighborRanking(model.anchor_indices[order], probs[order])


def rank_batch(model: SelfEncoderModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Rankings for many queries at once: (anchor index matrix, probability matrix), one query per row."""
    probs = predict_proba(model, x)
    idx = np.empty(probs.shape, dtype=np.intp)
    ranked = np.empty_like(probs)
    for r, row in enumerate(probs):
        order = _order(row, model.anchor_indices)
        idx[r] = model.anchor_indices[order]
        ranked[r] = row[order]
    return idx, ranked


def self_identification(model: SelfEncoderModel) -> np.ndarray:
    """Boolean per anchor: does the model put its highest probability on that anchor?"""
    probs = predict_proba(model, model.anchor_features)
    return np.argmax(probs, axis=1) == np.arange(model.n_anchors)


def transfer_weights(model: SelfEncoderModel, t: AffineTransform) -> SelfEncoderModel:
    """Model that, on ``M x + v``, reproduces what ``model`` outputs on ``x``.

    First-layer weights become ``W M^-1`` and its bias ``b - W M^-1 v``; every
    other layer is copied unchanged.
    """
    if t.dim != model.input_dim:
        raise ShapeError(f"transform dimension {t.dim} does not match model input {model.input_dim}")
    return SelfEncoderModel(
        _transfer_network(model.network, t),
        model.anchor_indices.copy(),
        t.apply(model.anchor_features),
        model.config,
        history=list(model.history),
    )


def _transfer_network(net: Network, t: AffineTransform) -> Network:
    net = net.copy()
    first = net.layers[0]
    w_new = first.weights @ t.inverse_matrix
    first.weights = w_new
    first.bias = first.bias - w_new @ t.offset
    return net


def model_to_dict(model: SelfEncoderModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": model.config.to_dict(),
        "anchor_indices": model.anchor_indices.tolist(),
        "anchor_features": model.anchor_features.tolist(),
        "layers": [
            {
                "activation": layer.activation.value,
                "shape": list(layer.weights.shape),
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in model.network.layers
        ],
    }


def model_from_dict(d: dict) -> SelfEncoderModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a self-encoder model file (format={d.get('format')!r})")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')!r}")
    layers = []
    for spec in d["layers"]:
        w = np.array(spec["weights"], dtype=np.float64).reshape(spec["shape"])
        layers.append(nn.DenseLayer(w, np.array(spec["bias"], dtype=np.float64), spec["activation"]))
    return SelfEncoderModel(
        Network(layers),
        np.array(d["anchor_indices"], dtype=np.intp),
        np.array(d["anchor_features"], dtype=np.float64),
        SelfEncoderConfig.from_dict(d["config"]),
    )


def save_model(model: SelfEncoderModel, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> SelfEncoderModel:
    return model_from_dict(json.loads(Path(path).read_text()))


def with_overrides(config: SelfEncoderConfig, **changes) -> SelfEncoderConfig:
    """Copy of ``config`` with top-level fields and/or schedule fields replaced."""
    schedule_fields = set(TrainSchedule.__dataclass_fields__)
    sched = {k: changes.pop(k) for k in list(changes) if k in schedule_fields}
    if sched:
        changes["schedule"] = replace(config.schedule, **sched)
    return replace(config, **changes)
