"""The full evaluation protocol: stratified k-fold CV, the four metrics with
dispersion, the 5x2cv paired t-test, per-corpus graph statistics and the
resolved-share trend.

The positive class throughout is "unresolved" (label 1).
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .baselines import FewShotConfig, fewshot_train, train_logreg
from .errors import SegnnError
from .features import FeatureMode
from .graphs import CommGraph, NodeLabel
from .ingest import PostRecord, PostType, label_questions
from .seeds import substream, substream_seed
from .training import GraphDataset, TrainConfig, predict_dataset, train

METRICS = ("accuracy", "recall", "precision", "f1")


# --- folds -------------------------------------------------------------------


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> np.ndarray:
    """Seeded shuffle within each class, then round-robin fold assignment.

    The round-robin cursor continues across classes, which balances fold
    sizes as well as per-class counts (both to within one sample)."""
    labels = np.asarray(labels)
    if k < 2:
        raise SegnnError("k must be >= 2")
    if len(labels) < k:
        raise SegnnError(f"{len(labels)} samples cannot fill k={k} folds")
    if len(np.unique(labels)) < 2:
        raise SegnnError("stratification needs at least two classes")
    fold_ids = np.empty(len(labels), dtype=np.int64)
    cursor = 0
    for value in sorted(np.unique(labels).tolist()):
        idx = np.flatnonzero(labels == value)
        rng = substream(seed, f"fold:class{value}")
        shuffled = idx[rng.permutation(len(idx))]
        fold_ids[shuffled] = (cursor + np.arange(len(shuffled))) % k
        cursor = (cursor + len(shuffled)) % k
    return fold_ids


# --- metrics -------------------------------------------------------------------


@dataclass
class MetricsValues:
    accuracy: float
    recall: float
    precision: float
    f1: float
    undefined: tuple = ()

    def get(self, metric: str) -> float:
        return getattr(self, metric)


def compute_metrics(predictions, labels) -> MetricsValues:
    """Confusion-matrix metrics; zero-denominator ratios report 0, flagged."""
    predictions = np.asarray(predictions).astype(int)
    labels = np.asarray(labels).astype(int)
    if len(predictions) == 0:
        raise SegnnError("compute_metrics on empty input")
    if len(predictions) != len(labels):
        raise SegnnError("predictions and labels differ in length")
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    tn = int(np.sum((predictions == 0) & (labels == 0)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))
    undefined = []
    accuracy = (tp + tn) / len(labels)
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        undefined.append("recall")
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        undefined.append("precision")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        undefined.append("f1")
    return MetricsValues(
        accuracy=accuracy,
        recall=recall,
        precision=precision,
        f1=f1,
        undefined=tuple(undefined),
    )


@dataclass
class MetricsReport:
    method: str
    folds: list[MetricsValues] = field(default_factory=list)

    def mean(self, metric: str) -> float:
        return float(np.mean([f.get(metric) for f in self.folds]))

    def std(self, metric: str) -> float:
        return float(np.std([f.get(metric) for f in self.folds]))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "metrics": {
                m: {
                    "mean": self.mean(m),
                    "dispersion": self.std(m),
                    "folds": [f.get(m) for f in self.folds],
                }
                for m in METRICS
            },
        }


# --- methods -------------------------------------------------------------------


@dataclass
class EvalData:
    """Everything a method may consume, keyed by feature mode where relevant."""

    labels: np.ndarray
    question_ids: np.ndarray
    graph_data: dict = field(default_factory=dict)  # FeatureMode -> GraphDataset
    question_embeddings: np.ndarray | None = None

    def graphs_for(self, mode: FeatureMode) -> GraphDataset:
        if mode not in self.graph_data:
            raise SegnnError(f"no prepared graphs for feature mode {mode.value}")
        return self.graph_data[mode]

    def embeddings(self) -> np.ndarray:
        if self.question_embeddings is None:
            raise SegnnError("no question embeddings prepared (baselines need them)")
        return self.question_embeddings


class GnnMethod:
    def __init__(
        self,
        architecture: str,
        mode: FeatureMode,
        epochs: int = 400,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        arch_overrides: dict | None = None,
    ):
        self.architecture = architecture
        self.mode = mode
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.arch_overrides = arch_overrides or {}
        self.name = f"{architecture}:{mode.value}"

    def fit_predict(self, data: EvalData, train_idx, test_idx, seed: int) -> np.ndarray:
        ds = data.graphs_for(self.mode)
        config = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=substream_seed(seed, f"train:{self.name}"),
            feature_mode=self.mode,
            architecture=self.architecture,
            arch_overrides=self.arch_overrides,
        )
        model, _ = train(ds, config, indices=train_idx)
        return predict_dataset(model, ds, test_idx)


class LogRegMethod:
    name = "logreg"

    def fit_predict(self, data: EvalData, train_idx, test_idx, seed: int) -> np.ndarray:
        x = data.embeddings()
        model = train_logreg(x[train_idx], data.labels[train_idx])
        return model.predict_proba(x[test_idx])


class FewShotMethod:
    def __init__(self, shots: int):
        self.shots = shots
        self.name = f"fewshot{shots}"

    def fit_predict(self, data: EvalData, train_idx, test_idx, seed: int) -> np.ndarray:
        x = data.embeddings()
        config = FewShotConfig(
            shots=self.shots, seed=substream_seed(seed, f"shots:{self.name}")
        )
        model = fewshot_train(x[train_idx], data.labels[train_idx], config)
        return model.predict_proba(x[test_idx])


class MajorityMethod:
    """Always predicts the training fold's majority class; the probability it
    emits is the training prior, so the >= 0.5 rule reproduces the class."""

    name = "majority"

    def fit_predict(self, data: EvalData, train_idx, test_idx, seed: int) -> np.ndarray:
        prior = float(np.mean(data.labels[train_idx]))
        return np.full(len(test_idx), prior)


# --- cross-validation ------------------------------------------------------------


@dataclass
class PredictionRow:
    question_id: int
    probability: float
    prediction: int
    label: int


def run_cv(methods: list, data: EvalData, k: int = 5, seed: int = 0):
    """Stratified k-fold CV of every method on the same folds.

    Returns ({method name: MetricsReport}, {method name: [PredictionRow]}).
    """
    folds = stratified_kfold(data.labels, k=k, seed=seed)
    reports = {m.name: MetricsReport(method=m.name) for m in methods}
    predictions = {m.name: [None] * len(data.labels) for m in methods}
    for fold in range(k):
        test_idx = np.flatnonzero(folds == fold)
        train_idx = np.flatnonzero(folds != fold)
        for method in methods:
            probs = method.fit_predict(
                data, train_idx, test_idx, substream_seed(seed, f"cvfold{fold}")
            )
            preds = (np.asarray(probs) >= 0.5).astype(int)
            reports[method.name].folds.append(
                compute_metrics(preds, data.labels[test_idx])
            )
            for i, p, pr in zip(test_idx, probs, preds):
                predictions[method.name][i] = PredictionRow(
                    question_id=int(data.question_ids[i]),
                    probability=float(p),
                    prediction=int(pr),
                    label=int(data.labels[i]),
                )
    return reports, predictions


# --- 5x2cv paired t-test -----------------------------------------------------------


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) by the continued-fraction expansion (Lentz's method)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    # symmetry switch keeps the continued fraction in its convergent region
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 3e-16):
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def student_t_two_sided_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t via the regularized incomplete beta."""
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


@dataclass
class CvTestResult:
    t_statistic: float
    p_value: float
    significant: bool
    degenerate: bool
    differences: list  # 5 replications x 2 folds of accuracy differences
    threshold: float = 0.005

    def to_dict(self) -> dict:
        return {
            "t_statistic": self.t_statistic,
            "p_value": self.p_value,
            "significant": self.significant,
            "degenerate": self.degenerate,
            "differences": self.differences,
            "threshold": self.threshold,
            "degrees_of_freedom": 5,
        }


def five_by_two_cv_test(
    method_a, method_b, data: EvalData, seed: int = 0, threshold: float = 0.005
) -> CvTestResult:
    """5 replications of 2-fold CV; t = p1_1 / sqrt(mean of per-rep variances),
    with 5 degrees of freedom and a two-sided p-value."""
    differences = []
    for rep in range(5):
        folds = stratified_kfold(data.labels, k=2, seed=substream_seed(seed, f"rep{rep}"))
        rep_diffs = []
        for half in range(2):
            test_idx = np.flatnonzero(folds == half)
            train_idx = np.flatnonzero(folds != half)
            half_seed = substream_seed(seed, f"rep{rep}:half{half}")
            accs = {}
            for method in (method_a, method_b):
                probs = method.fit_predict(data, train_idx, test_idx, half_seed)
                preds = (np.asarray(probs) >= 0.5).astype(int)
                accs[id(method)] = compute_metrics(
                    preds, data.labels[test_idx]
                ).accuracy
            rep_diffs.append(accs[id(method_a)] - accs[id(method_b)])
        differences.append(rep_diffs)

    variances = []
    for p1, p2 in differences:
        mean = (p1 + p2) / 2.0
        variances.append((p1 - mean) ** 2 + (p2 - mean) ** 2)
    denom_sq = sum(variances) / 5.0
    numerator = differences[0][0]
    if denom_sq == 0.0:
        if numerator == 0.0:
            return CvTestResult(
                t_statistic=0.0,
                p_value=1.0,
                significant=False,
                degenerate=True,
                differences=differences,
                threshold=threshold,
            )
        t = math.inf if numerator > 0 else -math.inf
    else:
        t = numerator / math.sqrt(denom_sq)
    p = student_t_two_sided_p(t, df=5)
    return CvTestResult(
        t_statistic=t,
        p_value=p,
        significant=p < threshold,
        degenerate=False,
        differences=differences,
        threshold=threshold,
    )


# --- corpus statistics ---------------------------------------------------------


@dataclass
class StatsRow:
    mean: float
    mode: float
    median: float
    q1: float
    q3: float
    std: float
    maximum: float
    minimum: float

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "mode": self.mode,
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "std": self.std,
            "max": self.maximum,
            "min": self.minimum,
        }


STATS_CHARACTERISTICS = ("nodes", "edges", "answers", "comments", "users")


@dataclass
class GraphStatsTable:
    rows: dict

    def to_dict(self) -> dict:
        return {name: row.to_dict() for name, row in self.rows.items()}

    def format_table(self) -> str:
        header = f"{'':>12}" + "".join(f"{c:>12}" for c in STATS_CHARACTERISTICS)
        lines = [header]
        for stat in ("mean", "mode", "median", "q1", "q3", "std", "max", "min"):
            cells = []
            for c in STATS_CHARACTERISTICS:
                value = self.rows[c].to_dict()[stat]
                cells.append(f"{value:>12.2f}")
            lines.append(f"{stat:>12}" + "".join(cells))
        return "\n".join(lines)


def _stats_row(values: np.ndarray) -> StatsRow:
    counts = Counter(values.tolist())
    top = max(counts.values())
    mode = min(v for v, c in counts.items() if c == top)
    q1, median, q3 = np.percentile(values, [25, 50, 75])  # linear interpolation
    return StatsRow(
        mean=float(np.mean(values)),
        mode=float(mode),
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        std=float(np.std(values)),
        maximum=float(np.max(values)),
        minimum=float(np.min(values)),
    )


def graph_statistics(graphs: list[CommGraph]) -> GraphStatsTable:
    if not graphs:
        raise SegnnError("graph_statistics on empty corpus")
    per_label = {
        "answers": NodeLabel.ANSWER,
        "comments": NodeLabel.COMMENT,
        "users": NodeLabel.USER,
    }
    series = {name: [] for name in STATS_CHARACTERISTICS}
    for g in graphs:
        series["nodes"].append(len(g.graph.nodes))
        series["edges"].append(len(g.graph.edges))
        for name, label in per_label.items():
            series[name].append(sum(1 for n in g.graph.nodes if n.label is label))
    return GraphStatsTable(
        rows={name: _stats_row(np.array(vals)) for name, vals in series.items()}
    )


# --- resolved trend --------------------------------------------------------------


def resolved_trend(posts: list[PostRecord]) -> list[tuple[int, float]]:
    """Per calendar year, the share of that year's questions that are resolved.

    Years with zero questions do not appear in the series.
    """
    labels, _ = label_questions(posts)
    by_year: dict = {}
    for p in posts:
        if p.post_type is PostType.QUESTION:
            by_year.setdefault(p.creation_date.year, []).append(labels[p.id])
    return [
        (year, sum(vals) / len(vals)) for year, vals in sorted(by_year.items())
    ]


def _ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(x, y) -> float:
    """Rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise SegnnError("spearman_rho needs two equally long series, n >= 2")
    rx, ry = _ranks(x), _ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        return 0.0
    return float(rx @ ry) / denom


# --- report writers ---------------------------------------------------------------


def write_report_csv(path, reports: dict):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method,metric,mean,dispersion\n")
        for name in sorted(reports):
            report = reports[name]
            for metric in METRICS:
                fh.write(
                    f"{name},{metric},{report.mean(metric)!r},{report.std(metric)!r}\n"
                )


def write_report_json(path, reports: dict, meta: dict):
    payload = {
        "meta": meta,
        "methods": {name: reports[name].to_dict() for name in sorted(reports)},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_predictions_csv(path, rows: list[PredictionRow]):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("question_id,probability,prediction,label\n")
        for r in rows:
            fh.write(f"{r.question_id},{r.probability!r},{r.prediction},{r.label}\n")


def write_trend_csv(path, series: list[tuple[int, float]]):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("year,pct_resolved\n")
        for year, share in series:
            fh.write(f"{year},{share!r}\n")
