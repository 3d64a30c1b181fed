"""Content-only baselines.

Both learners see only the question node's text embedding, never the graph:
a ridge-regularized logistic regression, and a few-shot head that first tunes
a linear projection with a contrastive cosine loss over sampled same-class /
cross-class pairs, then fits the logistic head on the projected shots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Parameter, Tensor, adam_step, recording, zero_grads
from .errors import FewShotConfigError, SingleClassError
from .seeds import substream


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float

    def decision(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights + self.bias

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        z = np.clip(self.decision(x), -500, 500)
        return 1.0 / (1.0 + np.exp(-z))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.predict_proba(x) >= 0.5).astype(int)


def train_logreg(
    x: np.ndarray,
    y: np.ndarray,
    l2: float = 1e-4,
    lr: float = 0.05,
    steps: int = 2000,
) -> LinearModel:
    """Full-batch gradient fit on the autodiff core; deterministic (zero init).

    The step size decays by 10x over four phases: Adam hovers around the
    optimum at an amplitude proportional to the rate, and the decay is what
    lets the fit land within analytic-oracle tolerances.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError(f"bad shapes {x.shape} vs {y.shape}")
    if len(np.unique(y)) < 2:
        raise SingleClassError("logistic regression needs both classes present")
    xs = Tensor(x)
    targets = Tensor(y.reshape(-1, 1))
    w = Parameter(np.zeros((x.shape[1], 1)), "logreg.w")
    b = Parameter(np.zeros((1, 1)), "logreg.b")
    opt = AdamState()
    decay_start = int(steps * 0.7)
    tail = max((steps - decay_start) // 3, 1)
    for step in range(steps):
        phase = 0 if step < decay_start else min((step - decay_start) // tail + 1, 3)
        with recording() as tape:
            logits = ad.add_bias_row(ad.matmul(xs, w), b)
            data_loss = ad.bce_loss(logits, targets)
            ridge = ad.scale(ad.sum_rows(ad.mul(w, w)), l2)
            loss = ad.add(data_loss, ridge)
        tape.backward(loss)
        adam_step([w, b], opt, lr * 10.0**-phase)
        zero_grads([w, b])
    return LinearModel(weights=w.values[:, 0].copy(), bias=float(b.values[0, 0]))


@dataclass
class ContrastiveTriple:
    """Indices (i, j) into the sample set, pair sign s, and the anchor class.

    s=1 pairs are same-class within the anchor class; s=0 pairs put the
    anchor-class sample first and a sample of the other class second.
    """

    i: int
    j: int
    s: int
    anchor_class: int


@dataclass
class FewShotConfig:
    shots: int
    epochs: int = 1
    batch_size: int = 16
    learning_rate: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.shots < 2:
            raise FewShotConfigError("pair construction needs at least 2 shots per class")
        if self.batch_size <= 0 or self.learning_rate <= 0 or self.epochs < 0:
            raise FewShotConfigError("bad few-shot hyperparameters")


def draw_shots(labels: np.ndarray, m: int, seed: int) -> dict:
    """m seeded draws per class, without replacement."""
    labels = np.asarray(labels)
    if m < 2:
        raise FewShotConfigError("need m >= 2 shots per class")
    shots = {}
    for c in (0, 1):
        pool = np.flatnonzero(labels == c)
        if len(pool) < m:
            raise FewShotConfigError(
                f"class {c} has {len(pool)} samples, need {m} shots"
            )
        rng = substream(seed, f"shots:class{c}")
        shots[c] = pool[rng.choice(len(pool), size=m, replace=False)]
    return shots


def construct_pairs_from_shots(shots: dict, seed: int) -> list[ContrastiveTriple]:
    m = len(shots[0])
    triples: list[ContrastiveTriple] = []
    n_pairs = m * (m - 1) // 2
    for c in (0, 1):
        own = shots[c]
        other = shots[1 - c]
        for a in range(m):
            for b in range(a + 1, m):
                triples.append(ContrastiveTriple(int(own[a]), int(own[b]), 1, c))
        # matched count of cross-class pairs, drawn without replacement from
        # the m*m grid (n_pairs < m*m, so the draw never exhausts)
        rng = substream(seed, f"neg:class{c}")
        flat = rng.choice(m * m, size=n_pairs, replace=False)
        for k in flat:
            triples.append(ContrastiveTriple(int(own[k // m]), int(other[k % m]), 0, c))
    return triples


def construct_pairs(labels: np.ndarray, m: int, seed: int) -> list[ContrastiveTriple]:
    """All same-class pairs among m seeded shots per class (m(m-1)/2 each),
    plus an equal count of cross-class pairs per class."""
    return construct_pairs_from_shots(draw_shots(labels, m, seed), seed)


@dataclass
class FewShotModel:
    projection: np.ndarray
    head: LinearModel
    n_triples: int
    shot_indices: np.ndarray = field(repr=False, default=None)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return self.head.predict_proba(np.asarray(x) @ self.projection)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.predict_proba(x) >= 0.5).astype(int)


def _cosine(a: Tensor, b: Tensor) -> Tensor:
    dot = ad.sum_cols(ad.mul(a, b))
    na = ad.sqrt(ad.add_const(ad.sum_cols(ad.mul(a, a)), 1e-24))
    nb = ad.sqrt(ad.add_const(ad.sum_cols(ad.mul(b, b)), 1e-24))
    return ad.div(dot, ad.add_const(ad.mul(na, nb), 1e-12))


def mean_same_class_cosine(x: np.ndarray, triples, projection: np.ndarray) -> float:
    z = np.asarray(x) @ projection
    vals = []
    for t in triples:
        if t.s == 1:
            u, v = z[t.i], z[t.j]
            denom = np.linalg.norm(u) * np.linalg.norm(v) + 1e-12
            vals.append(float(u @ v) / denom)
    return float(np.mean(vals))


def fewshot_train(x: np.ndarray, y: np.ndarray, config: FewShotConfig) -> FewShotModel:
    """Stage 1 tunes an identity-initialized projection on the contrastive
    pairs; stage 2 fits the logistic head on the projected shots."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    shots = draw_shots(y, config.shots, config.seed)
    triples = construct_pairs_from_shots(shots, config.seed)
    d = x.shape[1]
    projection = Parameter(np.eye(d), "fewshot.P")
    opt = AdamState()
    order_rng = substream(config.seed, "triple-shuffle")
    for _ in range(config.epochs):
        order = order_rng.permutation(len(triples))
        for start in range(0, len(order), config.batch_size):
            batch = [triples[k] for k in order[start : start + config.batch_size]]
            xi = Tensor(np.stack([x[t.i] for t in batch]))
            xj = Tensor(np.stack([x[t.j] for t in batch]))
            sign = Tensor(np.array([[float(t.s)] for t in batch]))
            with recording() as tape:
                cos = _cosine(ad.matmul(xi, projection), ad.matmul(xj, projection))
                diff = ad.sub(sign, cos)
                loss = ad.mean_rows(ad.mul(diff, diff))
            tape.backward(loss)
            adam_step([projection], opt, config.learning_rate)
            zero_grads([projection])
    shot_idx = np.concatenate([shots[0], shots[1]])
    projected = x[shot_idx] @ projection.values
    head = train_logreg(projected, y[shot_idx])
    return FewShotModel(
        projection=projection.values,
        head=head,
        n_triples=len(triples),
        shot_indices=shot_idx,
    )
