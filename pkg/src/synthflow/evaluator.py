"""Real-versus-synthetic quality scoring.

A from-scratch gradient-boosted tree classifier tries to tell generated
rows from real ones; the closer its holdout ROC/AUC sits to 0.5, the better
the generator. Alongside the classifier the module reports two RMSE-style
divergence numbers, per-feature split-gain importances, and paired
histograms for plotting.

Trees are grown by exact greedy search: at every node each feature's sorted
distinct values define candidate thresholds (midpoints), and the split
maximizing the usual Newton gain (sum-of-squares reduction on the
residual/hessian ratio) wins, ties broken toward the smaller threshold and
then the smaller feature index. Leaf values are the one-step Newton
estimate sum(residual) / sum(p*(1-p)).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataio import DatasetMatrix, denormalize

HISTOGRAM_BINS = 32

# Default histogram picks for flow data; used when present in the schema.
PREFERRED_HISTOGRAM_FEATURES = (
    "Packet Length Mean",
    "Flow Bytes/s",
    "Flow Duration",
    "Fwd IAT Mean",
)


@dataclass
class LabeledSet:
    """Feature matrix with binary rows: 0 = real, 1 = synthetic."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError(
                f"features {self.features.shape} and labels {self.labels.shape} "
                f"do not line up"
            )
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 (real) or 1 (synthetic)")


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def split_search(values, residuals, hessians):
    """Best (threshold, gain) for one feature, or None if unsplittable.

    Thresholds are midpoints between consecutive sorted distinct values;
    gain = (sum r_L)^2/(sum h_L) + (sum r_R)^2/(sum h_R) - (sum r)^2/(sum h),
    which is always >= 0. Ties keep the smallest threshold. All-identical
    values yield None.
    """
    v = np.asarray(values, dtype=np.float64)
    r = np.asarray(residuals, dtype=np.float64)
    h = np.asarray(hessians, dtype=np.float64)
    if v.shape != r.shape or v.shape != h.shape or v.ndim != 1:
        raise ValueError("values/residuals/hessians must be matching 1-d arrays")
    if v.size < 2:
        return None
    order = np.argsort(v, kind="stable")
    v, r, h = v[order], r[order], h[order]
    boundary = v[:-1] < v[1:]
    if not boundary.any():
        return None
    cum_r = np.cumsum(r)
    cum_h = np.cumsum(h)
    total_r, total_h = cum_r[-1], cum_h[-1]
    left_r, left_h = cum_r[:-1], cum_h[:-1]
    right_r, right_h = total_r - left_r, total_h - left_h
    with np.errstate(divide="ignore", invalid="ignore"):
        gains = left_r**2 / left_h + right_r**2 / right_h - total_r**2 / total_h
    gains[~boundary] = -np.inf
    best = int(np.argmax(gains))  # first max: smallest threshold wins ties
    threshold = (v[best] + v[best + 1]) / 2.0
    return float(threshold), float(gains[best])


@dataclass
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (children None)."""

    feature: int = -1
    threshold: float = 0.0
    gain: float = 0.0
    value: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class RegressionTree:
    root: TreeNode

    def predict(self, features: np.ndarray) -> np.ndarray:
        out = np.empty(features.shape[0])
        self._walk(self.root, features, np.arange(features.shape[0]), out)
        return out

    def _walk(self, node, features, idx, out) -> None:
        if node.is_leaf:
            out[idx] = node.value
            return
        go_left = features[idx, node.feature] <= node.threshold
        self._walk(node.left, features, idx[go_left], out)
        self._walk(node.right, features, idx[~go_left], out)

    def iter_nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.left)
                stack.append(node.right)


def _build_tree(features, residuals, hessians, max_depth) -> TreeNode:
    def grow(idx, depth) -> TreeNode:
        node_r = residuals[idx]
        node_h = hessians[idx]
        value = float(node_r.sum() / node_h.sum())
        if depth >= max_depth or idx.size < 2:
            return TreeNode(value=value)
        best_gain = 0.0
        best_feature = -1
        best_threshold = 0.0
        for j in range(features.shape[1]):
            found = split_search(features[idx, j], node_r, node_h)
            if found is None:
                continue
            threshold, gain = found
            if gain > best_gain:  # strict: earlier feature wins ties
                best_gain, best_feature, best_threshold = gain, j, threshold
        if best_feature < 0:
            return TreeNode(value=value)
        go_left = features[idx, best_feature] <= best_threshold
        return TreeNode(
            feature=best_feature,
            threshold=best_threshold,
            gain=best_gain,
            value=value,
            left=grow(idx[go_left], depth + 1),
            right=grow(idx[~go_left], depth + 1),
        )

    idx = np.arange(features.shape[0])
    return grow(idx, 0)


@dataclass
class GbmModel:
    """Boosted logistic ensemble: sigmoid(base + shrinkage * sum(trees))."""

    base_score: float
    trees: list[RegressionTree]
    shrinkage: float
    max_depth: int
    n_features: int


def gbm_fit(
    train: LabeledSet,
    n_trees: int = 100,
    max_depth: int = 3,
    shrinkage: float = 0.1,
    rng: np.random.Generator | None = None,
) -> GbmModel:
    """Boost regression trees on the logistic loss.

    Each round fits a tree to the residual (label - predicted probability)
    with hessian weights p*(1-p). The ``rng`` argument is reserved for row
    subsampling and is currently unused, so fitting is fully deterministic.
    """
    if not 0.0 < shrinkage <= 1.0:
        raise ValueError(f"shrinkage must be in (0, 1], got {shrinkage}")
    if n_trees < 0 or max_depth < 1:
        raise ValueError(f"bad ensemble size: n_trees={n_trees}, max_depth={max_depth}")
    y = train.labels.astype(np.float64)
    if y.min() == y.max():
        raise ValueError("training set must contain both classes")
    prior = float(y.mean())
    base_score = float(np.log(prior / (1.0 - prior)))
    scores = np.full(y.shape, base_score)
    trees: list[RegressionTree] = []
    for _ in range(n_trees):
        p = sigmoid(scores)
        residuals = y - p
        hessians = p * (1.0 - p)
        tree = RegressionTree(_build_tree(train.features, residuals, hessians, max_depth))
        trees.append(tree)
        scores += shrinkage * tree.predict(train.features)
    return GbmModel(base_score, trees, shrinkage, max_depth, train.features.shape[1])


def gbm_predict(model: GbmModel, features) -> np.ndarray:
    """Per-row probability of being synthetic."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != model.n_features:
        raise ValueError(
            f"features have {features.shape[-1] if features.ndim else '?'} "
            f"columns, model was fit on {model.n_features}"
        )
    scores = np.full(features.shape[0], model.base_score)
    for tree in model.trees:
        scores += model.shrinkage * tree.predict(features)
    return sigmoid(scores)


def feature_importance(model: GbmModel) -> np.ndarray:
    """Total split gain per feature, normalized to sum 1 (all-zero if the
    ensemble never split)."""
    totals = np.zeros(model.n_features)
    for tree in model.trees:
        for node in tree.iter_nodes():
            if not node.is_leaf:
                totals[node.feature] += node.gain
    s = totals.sum()
    return totals / s if s > 0 else totals


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(scores_real, scores_synth) -> tuple[float, list[tuple[float, float]]]:
    """AUC (Mann-Whitney form, ties count 1/2) plus the ROC staircase.

    AUC is the probability that a synthetic sample outranks a real one. ROC
    points come from sweeping thresholds over the distinct scores, from
    (0, 0) to (1, 1).
    """
    real = np.asarray(scores_real, dtype=np.float64).ravel()
    synth = np.asarray(scores_synth, dtype=np.float64).ravel()
    if real.size == 0 or synth.size == 0:
        raise ValueError("both score sets must be nonempty")
    combined = np.concatenate([real, synth])
    ranks = _midranks(combined)
    n_r, n_s = real.size, synth.size
    u = ranks[n_r:].sum() - n_s * (n_s + 1) / 2.0
    auc = u / (n_s * n_r)

    points = [(0.0, 0.0)]
    order = np.argsort(-combined, kind="stable")
    is_synth = np.concatenate([np.zeros(n_r, bool), np.ones(n_s, bool)])[order]
    sorted_scores = combined[order]
    tp = fp = 0
    i = 0
    while i < combined.size:
        j = i
        while j + 1 < combined.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        block = is_synth[i : j + 1]
        tp += int(block.sum())
        fp += int(block.size - block.sum())
        points.append((fp / n_r, tp / n_s))
        i = j + 1
    return float(auc), points


def rmse_quality(real, synth) -> tuple[float, float]:
    """Two divergence numbers for matrices in normalized [0, 1] space.

    rmse_means compares per-feature means; rmse_hist compares per-feature
    32-bin frequency vectors (bins span [0, 1], frequencies normalized by
    each matrix's row count).
    """
    real = np.asarray(real, dtype=np.float64)
    synth = np.asarray(synth, dtype=np.float64)
    if real.ndim != 2 or synth.ndim != 2 or real.shape[1] != synth.shape[1]:
        raise ValueError(
            f"width mismatch: real {real.shape} vs synth {synth.shape}"
        )
    mean_gap = real.mean(axis=0) - synth.mean(axis=0)
    rmse_means = float(np.sqrt(np.mean(mean_gap**2)))

    d = real.shape[1]
    gaps = np.empty((d, HISTOGRAM_BINS))
    for j in range(d):
        freq_real = np.histogram(real[:, j], bins=HISTOGRAM_BINS, range=(0.0, 1.0))[0]
        freq_synth = np.histogram(synth[:, j], bins=HISTOGRAM_BINS, range=(0.0, 1.0))[0]
        gaps[j] = freq_real / real.shape[0] - freq_synth / synth.shape[0]
    rmse_hist = float(np.sqrt(np.mean(gaps**2)))
    return rmse_means, rmse_hist


@dataclass
class FeatureHistogram:
    """Paired 32-bin counts for one feature over the union value range."""

    feature: str
    edges: list[float]
    count_real: list[int]
    count_synth: list[int]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "edges": self.edges,
            "count_real": self.count_real,
            "count_synth": self.count_synth,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureHistogram":
        return cls(
            data["feature"], list(data["edges"]),
            list(data["count_real"]), list(data["count_synth"]),
        )


def default_histogram_features(feature_names) -> list[str]:
    preferred = [f for f in PREFERRED_HISTOGRAM_FEATURES if f in feature_names]
    if preferred:
        return preferred
    return list(feature_names)[:4]


def histogram_compare(
    real, synth, feature_names, selected=None, bins: int = HISTOGRAM_BINS
) -> list[FeatureHistogram]:
    """Paired histograms on the union range of both inputs.

    ``selected`` must be a subset of ``feature_names``; by default the
    preferred flow features are used when present, otherwise the first few
    columns. Single-valued features put all mass in one bin.
    """
    real = np.asarray(real, dtype=np.float64)
    synth = np.asarray(synth, dtype=np.float64)
    names = list(feature_names)
    if real.shape[1] != len(names) or synth.shape[1] != len(names):
        raise ValueError(
            f"matrices with {real.shape[1]}/{synth.shape[1]} columns do not "
            f"match {len(names)} feature names"
        )
    if selected is None:
        selected = default_histogram_features(names)
    unknown = [f for f in selected if f not in names]
    if unknown:
        raise ValueError(f"unknown features {unknown}; candidates: {names}")

    out = []
    for name in selected:
        j = names.index(name)
        lo = float(min(real[:, j].min(), synth[:, j].min()))
        hi = float(max(real[:, j].max(), synth[:, j].max()))
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        count_real, edges = np.histogram(real[:, j], bins=bins, range=(lo, hi))
        count_synth, _ = np.histogram(synth[:, j], bins=bins, range=(lo, hi))
        out.append(
            FeatureHistogram(
                name, edges.tolist(), count_real.tolist(), count_synth.tolist()
            )
        )
    return out


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation protocol knobs (classifier size and holdout fraction)."""

    n_trees: int = 100
    max_depth: int = 3
    shrinkage: float = 0.1
    holdout_fraction: float = 0.3
    histogram_features: tuple[str, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "shrinkage": self.shrinkage,
            "holdout_fraction": self.holdout_fraction,
            "histogram_features": (
                list(self.histogram_features)
                if self.histogram_features is not None
                else None
            ),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalConfig":
        known = dict(data)
        if known.get("histogram_features") is not None:
            known["histogram_features"] = tuple(known["histogram_features"])
        unknown = set(known) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown eval config keys: {sorted(unknown)}")
        return cls(**known)


@dataclass
class QualityReport:
    """Everything the evaluation produces, serializable to JSON."""

    rmse_means: float
    rmse_hist: float
    auc: float
    roc_points: list[tuple[float, float]]
    importances: dict[str, float]
    histograms: list[FeatureHistogram]
    n_real: int
    n_synth: int

    def to_dict(self) -> dict:
        return {
            "rmse_means": self.rmse_means,
            "rmse_hist": self.rmse_hist,
            "auc": self.auc,
            "roc_points": [list(p) for p in self.roc_points],
            "importances": self.importances,
            "histograms": [h.to_dict() for h in self.histograms],
            "n_real": self.n_real,
            "n_synth": self.n_synth,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QualityReport":
        return cls(
            rmse_means=data["rmse_means"],
            rmse_hist=data["rmse_hist"],
            auc=data["auc"],
            roc_points=[tuple(p) for p in data["roc_points"]],
            importances=dict(data["importances"]),
            histograms=[FeatureHistogram.from_dict(h) for h in data["histograms"]],
            n_real=data["n_real"],
            n_synth=data["n_synth"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "QualityReport":
        return cls.from_dict(json.loads(text))


def _stratified_split(labels: np.ndarray, holdout_fraction: float, rng):
    """Index split keeping both classes in both parts.

    When the classes have equal counts the same permutation is applied to
    both, so row i of each class lands on the same side. For generated data
    the pairing is an arbitrary coupling of independent rows; for a
    synthetic set that mirrors the real rows one-to-one it keeps each
    duplicate pair together, which stops the classifier from scoring
    holdout rows against their memorized twins.
    """
    idx0 = np.flatnonzero(labels == 0)
    idx1 = np.flatnonzero(labels == 1)
    if idx0.size == idx1.size:
        perms = [rng.permutation(idx0.size)] * 2
    else:
        perms = [rng.permutation(idx0.size), rng.permutation(idx1.size)]
    train_idx: list[np.ndarray] = []
    hold_idx: list[np.ndarray] = []
    for idx, perm in zip((idx0, idx1), perms):
        shuffled = idx[perm]
        k = int(np.floor(holdout_fraction * idx.size + 0.5))
        k = min(max(k, 1), idx.size - 1) if idx.size > 1 else k
        hold_idx.append(shuffled[:k])
        train_idx.append(shuffled[k:])
    return np.concatenate(train_idx), np.concatenate(hold_idx)


def evaluate(
    real: DatasetMatrix,
    synth: np.ndarray,
    config: EvalConfig,
    rng: np.random.Generator,
) -> QualityReport:
    """Score a synthetic batch against real data.

    Fits the classifier on a stratified 70/30-style split (real = 0,
    synthetic = 1), reports ROC/AUC on the holdout, RMSE divergences on the
    full normalized matrices, and paired histograms in denormalized feature
    units.
    """
    synth = np.asarray(synth, dtype=np.float64)
    if synth.ndim != 2 or synth.shape[1] != real.features.shape[1]:
        raise ValueError(
            f"synthetic matrix {synth.shape} does not match real width "
            f"{real.features.shape[1]}"
        )
    if real.n_rows == 0 or synth.shape[0] == 0:
        raise ValueError("real and synthetic sets must be nonempty")

    rmse_means, rmse_hist = rmse_quality(real.features, synth)

    names = real.schema.feature_names()
    selected = (
        list(config.histogram_features)
        if config.histogram_features is not None
        else default_histogram_features(names)
    )
    histograms = histogram_compare(
        denormalize(real.features, real.stats),
        denormalize(synth, real.stats),
        names,
        selected=selected,
    )

    features = np.vstack([real.features, synth])
    labels = np.concatenate(
        [np.zeros(real.n_rows, np.int64), np.ones(synth.shape[0], np.int64)]
    )
    train_idx, hold_idx = _stratified_split(labels, config.holdout_fraction, rng)
    model = gbm_fit(
        LabeledSet(features[train_idx], labels[train_idx]),
        n_trees=config.n_trees,
        max_depth=config.max_depth,
        shrinkage=config.shrinkage,
    )
    hold_scores = gbm_predict(model, features[hold_idx])
    hold_labels = labels[hold_idx]
    auc, roc_points = roc_auc(
        hold_scores[hold_labels == 0], hold_scores[hold_labels == 1]
    )
    importances = dict(zip(names, feature_importance(model).tolist()))
    return QualityReport(
        rmse_means=rmse_means,
        rmse_hist=rmse_hist,
        auc=auc,
        roc_points=roc_points,
        importances=importances,
        histograms=histograms,
        n_real=real.n_rows,
        n_synth=int(synth.shape[0]),
    )
