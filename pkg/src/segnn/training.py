"""Mini-batch training at the evaluation protocol's hyperparameters.

Defaults: 400 epochs, batch size 32, Adam at 1e-3. All randomness flows from
TrainConfig.seed through named sub-streams, so a (data, config, seed) triple
fully determines the resulting checkpoint.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor, adam_step, recording, zero_grads
from .errors import SegnnError, SingleClassError
from .features import FeatureMode, build_features
from .graphs import CommGraph
from .models import MODEL_KINDS, GraphBatch, build_model, make_batch, normalize_adjacency
from .seeds import substream
from .sparse import CsrMatrix


@dataclass
class TrainConfig:
    epochs: int = 400
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    feature_mode: FeatureMode = FeatureMode.TEXT_PLUS_TYPE
    architecture: str = "ggnn"
    optimizer: str = "adam"
    arch_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 0:
            raise SegnnError("epochs must be >= 0")
        if self.batch_size <= 0 or self.learning_rate <= 0:
            raise SegnnError("batch_size and learning_rate must be positive")
        if self.architecture not in MODEL_KINDS:
            raise SegnnError(f"unknown architecture {self.architecture!r}")
        if self.optimizer != "adam":
            raise SegnnError(f"unsupported optimizer family {self.optimizer!r}")


@dataclass
class TrainLogEntry:
    epoch: int
    loss: float
    train_accuracy: float
    wall_time_s: float


@dataclass
class TrainLog:
    entries: list[TrainLogEntry] = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss,train_accuracy,wall_time_s\n")
            for e in self.entries:
                fh.write(
                    f"{e.epoch},{e.loss!r},{e.train_accuracy!r},{e.wall_time_s!r}\n"
                )


@dataclass
class GraphDataset:
    """Per-graph model inputs in one feature mode, aligned index-for-index."""

    question_ids: np.ndarray
    labels: np.ndarray  # 1.0 = unresolved (the positive class)
    adjacencies: list[CsrMatrix]
    features: list[np.ndarray]

    def __len__(self):
        return len(self.adjacencies)

    @property
    def feature_dim(self) -> int:
        return self.features[0].shape[1]


def prepare_graph_dataset(
    graphs: list[CommGraph], mode: FeatureMode, provider=None
) -> GraphDataset:
    if not graphs:
        raise SegnnError("empty graph corpus")
    return GraphDataset(
        question_ids=np.array([g.question_id for g in graphs], dtype=np.int64),
        labels=np.array([1.0 if g.unresolved else 0.0 for g in graphs]),
        adjacencies=[normalize_adjacency(g) for g in graphs],
        features=[build_features(g, mode, provider) for g in graphs],
    )


def _batch_for(ds: GraphDataset, idx: np.ndarray) -> GraphBatch:
    return make_batch([ds.adjacencies[i] for i in idx], [ds.features[i] for i in idx])


def train(
    ds: GraphDataset,
    config: TrainConfig,
    indices: np.ndarray | None = None,
    model=None,
):
    """Train a fresh (or given) model; returns (model, TrainLog)."""
    idx = np.arange(len(ds)) if indices is None else np.asarray(indices)
    labels = ds.labels[idx]
    if len(np.unique(labels)) < 2:
        raise SingleClassError(
            "training set has a single class; loss is degenerate for evaluation"
        )
    if model is None:
        model = build_model(
            config.architecture, ds.feature_dim, config.seed, config.arch_overrides
        )
    params = model.parameters()
    opt = AdamState()
    shuffle_rng = substream(config.seed, "shuffle")
    log = TrainLog()
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = idx[shuffle_rng.permutation(len(idx))]
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            batch = _batch_for(ds, chunk)
            targets = Tensor(ds.labels[chunk].reshape(-1, 1))
            with recording() as tape:
                logits = model.forward(batch, training=True)
                loss = ad.bce_loss(logits, targets)
            tape.backward(loss)
            adam_step(params, opt, config.learning_rate)
            zero_grads(params)
            loss_sum += loss.item() * len(chunk)
            predicted = (logits.values[:, 0] >= 0.0).astype(float)
            correct += int(np.sum(predicted == ds.labels[chunk]))
        log.entries.append(
            TrainLogEntry(
                epoch=epoch,
                loss=loss_sum / len(order),
                train_accuracy=correct / len(order),
                wall_time_s=time.perf_counter() - started,
            )
        )
    return model, log


def predict_dataset(
    model, ds: GraphDataset, indices: np.ndarray | None = None, batch_size: int = 256
) -> np.ndarray:
    """Evaluation-mode probabilities of the positive (unresolved) class."""
    idx = np.arange(len(ds)) if indices is None else np.asarray(indices)
    probs = np.empty(len(idx))
    for start in range(0, len(idx), batch_size):
        chunk = idx[start : start + batch_size]
        batch = _batch_for(ds, chunk)
        logits = model.forward(batch, training=False).values[:, 0]
        probs[start : start + len(chunk)] = 1.0 / (
            1.0 + np.exp(-np.clip(logits, -500, 500))
        )
    return probs
