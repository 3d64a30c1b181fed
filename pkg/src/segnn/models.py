"""Graph-level binary classifiers: a 3-layer GCN with mean-pool readout and a
GeneralConv stack ("GGNN") with PReLU, batch normalization, per-layer concat
readout and sum pooling.

Schema edges encode provenance, not information flow, so adjacencies are
symmetrized before degree normalization. Batches of graphs are processed as
one block-diagonal adjacency plus a node-to-graph segment vector.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Parameter, Tensor
from .errors import CheckpointError, SegnnError
from .graphs import CommGraph
from .seeds import substream
from .sparse import CsrMatrix

CHECKPOINT_MAGIC = b"SEGNN1"


def normalize_adjacency(g: CommGraph) -> CsrMatrix:
    """Symmetrize, add self-loops, then D^(-1/2) (A + I) D^(-1/2)."""
    n = len(g.graph.nodes)
    pairs = set()
    for e in g.graph.edges:
        pairs.add((e.source, e.target))
        pairs.add((e.target, e.source))
    for i in range(n):
        pairs.add((i, i))
    rows = np.fromiter((p[0] for p in sorted(pairs)), dtype=np.int64, count=len(pairs))
    cols = np.fromiter((p[1] for p in sorted(pairs)), dtype=np.int64, count=len(pairs))
    degree = np.bincount(rows, minlength=n).astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(degree)
    vals = inv_sqrt[rows] * inv_sqrt[cols]
    return CsrMatrix.from_coo(rows, cols, vals, (n, n))


@dataclass
class GraphBatch:
    adj: CsrMatrix
    features: Tensor
    segments: np.ndarray
    n_graphs: int


def make_batch(adjacencies: list[CsrMatrix], features: list[np.ndarray]) -> GraphBatch:
    if len(adjacencies) != len(features) or not adjacencies:
        raise SegnnError("batch needs one feature matrix per adjacency")
    widths = {f.shape[1] for f in features}
    if len(widths) != 1:
        raise SegnnError(f"batch mixes feature dimensions: {sorted(widths)}")
    segments = np.concatenate(
        [np.full(a.shape[0], i, dtype=np.int64) for i, a in enumerate(adjacencies)]
    )
    return GraphBatch(
        adj=CsrMatrix.block_diag(adjacencies),
        features=Tensor(np.vstack(features)),
        segments=segments,
        n_graphs=len(adjacencies),
    )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class GcnConfig:
    input_dim: int
    hidden: tuple = (32, 32, 32)

    def to_dict(self) -> dict:
        return {"kind": "gcn", "input_dim": self.input_dim, "hidden": list(self.hidden)}

    @classmethod
    def from_dict(cls, d: dict) -> "GcnConfig":
        return cls(input_dim=d["input_dim"], hidden=tuple(d["hidden"]))


@dataclass
class GgnnConfig:
    input_dim: int
    width: int = 256
    depth: int = 2

    def __post_init__(self):
        if self.width <= 0 or self.depth <= 0:
            raise SegnnError("GGNN width and depth must be positive")

    def to_dict(self) -> dict:
        return {
            "kind": "ggnn",
            "input_dim": self.input_dim,
            "width": self.width,
            "depth": self.depth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GgnnConfig":
        return cls(input_dim=d["input_dim"], width=d["width"], depth=d["depth"])


class GcnModel:
    """Three graph convolutions (ReLU), global average pooling, dense head."""

    kind = "gcn"

    def __init__(self, config: GcnConfig, seed: int):
        self.config = config
        rng = substream(seed, "init:gcn")
        self._params: list[Parameter] = []
        dims = [config.input_dim, *config.hidden]
        self.layers = []
        for i in range(len(config.hidden)):
            w = self._add(Parameter(_glorot(rng, dims[i], dims[i + 1]), f"conv{i}.w"))
            b = self._add(Parameter(np.zeros((1, dims[i + 1])), f"conv{i}.b"))
            self.layers.append((w, b))
        self.head_w = self._add(Parameter(_glorot(rng, dims[-1], 1), "head.w"))
        self.head_b = self._add(Parameter(np.zeros((1, 1)), "head.b"))

    def _add(self, p: Parameter) -> Parameter:
        self._params.append(p)
        return p

    def parameters(self) -> list[Parameter]:
        return list(self._params)

    def state_blocks(self) -> list[tuple[str, np.ndarray]]:
        return [(p.name, p.values) for p in self._params]

    def load_state_blocks(self, blocks: dict):
        for p in self._params:
            p.values = np.array(blocks[p.name], dtype=np.float64)

    def forward(self, batch: GraphBatch, training: bool = False) -> Tensor:
        h = batch.features
        for w, b in self.layers:
            h = ad.relu(ad.add_bias_row(ad.spmm(batch.adj, ad.matmul(h, w)), b))
        pooled = ad.segment_mean_rows(h, batch.segments, batch.n_graphs)
        return ad.add_bias_row(ad.matmul(pooled, self.head_w), self.head_b)


@dataclass
class _GenConvLayer:
    w: Parameter
    b: Parameter
    gamma: Parameter
    beta: Parameter
    slope: Parameter
    bn: BatchNormState
    skip: bool


class GgnnModel:
    """GeneralConv stack: linear transform over the normalized adjacency,
    batch normalization, PReLU, residual skip where widths match; readout is
    the concat of per-layer embeddings, sum-pooled, through a dense head."""

    kind = "ggnn"

    def __init__(self, config: GgnnConfig, seed: int):
        self.config = config
        rng = substream(seed, "init:ggnn")
        self._params: list[Parameter] = []
        self.layers: list[_GenConvLayer] = []
        in_dim = config.input_dim
        for i in range(config.depth):
            layer = _GenConvLayer(
                w=self._add(Parameter(_glorot(rng, in_dim, config.width), f"gen{i}.w")),
                b=self._add(Parameter(np.zeros((1, config.width)), f"gen{i}.b")),
                gamma=self._add(Parameter(np.ones((1, config.width)), f"gen{i}.gamma")),
                beta=self._add(Parameter(np.zeros((1, config.width)), f"gen{i}.beta")),
                slope=self._add(Parameter(np.array([[0.25]]), f"gen{i}.slope")),
                bn=BatchNormState.initial(config.width),
                skip=in_dim == config.width,
            )
            self.layers.append(layer)
            in_dim = config.width
        self.head_w = self._add(
            Parameter(_glorot(rng, config.width * config.depth, 1), "head.w")
        )
        self.head_b = self._add(Parameter(np.zeros((1, 1)), "head.b"))

    def _add(self, p: Parameter) -> Parameter:
        self._params.append(p)
        return p

    def parameters(self) -> list[Parameter]:
        return list(self._params)

    def state_blocks(self) -> list[tuple[str, np.ndarray]]:
        blocks = [(p.name, p.values) for p in self._params]
        for i, layer in enumerate(self.layers):
            blocks.append((f"gen{i}.bn.running_mean", layer.bn.running_mean))
            blocks.append((f"gen{i}.bn.running_var", layer.bn.running_var))
        return blocks

    def load_state_blocks(self, blocks: dict):
        for p in self._params:
            p.values = np.array(blocks[p.name], dtype=np.float64)
        for i, layer in enumerate(self.layers):
            layer.bn.running_mean = np.array(blocks[f"gen{i}.bn.running_mean"])
            layer.bn.running_var = np.array(blocks[f"gen{i}.bn.running_var"])

    def forward(self, batch: GraphBatch, training: bool = False) -> Tensor:
        h = batch.features
        per_layer = []
        for layer in self.layers:
            z = ad.add_bias_row(ad.spmm(batch.adj, ad.matmul(h, layer.w)), layer.b)
            z = ad.batchnorm(z, layer.gamma, layer.beta, layer.bn, training)
            z = ad.prelu(z, layer.slope)
            if layer.skip:
                z = ad.add(z, h)
            h = z
            per_layer.append(h)
        jk = ad.concat_cols(per_layer) if len(per_layer) > 1 else per_layer[0]
        pooled = ad.segment_sum_rows(jk, batch.segments, batch.n_graphs)
        return ad.add_bias_row(ad.matmul(pooled, self.head_w), self.head_b)


MODEL_KINDS = ("gcn", "ggnn")


def build_model(kind: str, input_dim: int, seed: int, overrides: dict | None = None):
    overrides = dict(overrides or {})
    if kind == "gcn":
        hidden = tuple(overrides.pop("hidden", (32, 32, 32)))
        config = GcnConfig(input_dim=input_dim, hidden=hidden)
        model = GcnModel(config, seed)
    elif kind == "ggnn":
        config = GgnnConfig(
            input_dim=input_dim,
            width=int(overrides.pop("width", 256)),
            depth=int(overrides.pop("depth", 2)),
        )
        model = GgnnModel(config, seed)
    else:
        raise SegnnError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    if overrides:
        raise SegnnError(f"unknown {kind} config keys: {sorted(overrides)}")
    return model


def model_from_config(config: dict, seed: int):
    kind = config.get("kind")
    if kind == "gcn":
        return GcnModel(GcnConfig.from_dict(config), seed)
    if kind == "ggnn":
        return GgnnModel(GgnnConfig.from_dict(config), seed)
    raise SegnnError(f"unknown model kind in config: {kind!r}")


def predict_logits(model, batch: GraphBatch) -> np.ndarray:
    """Evaluation-mode forward; no tape, BatchNorm frozen."""
    return model.forward(batch, training=False).values[:, 0]


def predict_proba(model, batch: GraphBatch) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(predict_logits(model, batch), -500, 500)))


# --- checkpoints ---------------------------------------------------------------


def save_checkpoint(model, path, seed: int, epoch: int):
    """Magic, u32 JSON header length, JSON header, f64 LE blocks in order."""
    blocks = model.state_blocks()
    header = {
        "config": model.config.to_dict(),
        "seed": seed,
        "epoch": epoch,
        "blocks": [
            {"name": name, "shape": list(arr.shape)} for name, arr in blocks
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for _, arr in blocks:
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if len(data) < 10 or data[:6] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic, not an SEGNN1 checkpoint")
    (header_len,) = struct.unpack_from("<I", data, 6)
    try:
        header = json.loads(data[10 : 10 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    model = model_from_config(header["config"], seed=header["seed"])
    offset = 10 + header_len
    blocks = {}
    for spec in header["blocks"]:
        rows, cols = spec["shape"]
        nbytes = rows * cols * 8
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated parameter block {spec['name']}")
        blocks[spec["name"]] = np.frombuffer(
            data[offset : offset + nbytes], dtype="<f8"
        ).reshape(rows, cols)
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: trailing bytes after parameter blocks")
    model.load_state_blocks(blocks)
    return model, {"seed": header["seed"], "epoch": header["epoch"]}
