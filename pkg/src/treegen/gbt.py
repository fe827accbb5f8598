"""Gradient-boosted regression trees with squared-error objective.

Split finding uses per-feature quantile candidate thresholds computed once
from the training distribution, and every candidate split tries missing
rows in both directions, keeping the higher-gain side as the default route
for NaN inputs. Gains follow 0.5 * [GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2)]
- gamma with unit hessians; leaf values are -G/(H+l2); ties break to the
lowest feature index, then the lowest threshold, preferring the missing-left
variant. Fits are deterministic for a fixed seed regardless of how many
fits run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _gbt_kernels
from .errors import ValidationError


@dataclass(frozen=True)
class GBTConfig:
    n_trees: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    lambda_l2: float = 0.0
    gamma_min_gain: float = 0.0
    min_child_weight: float = 1.0
    n_bins: int = 256
    subsample: float = 1.0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("n_trees must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValidationError("learning_rate must be in (0, 1]")
        if self.lambda_l2 < 0.0:
            raise ValidationError("lambda_l2 must be >= 0")
        if self.n_bins < 2:
            raise ValidationError("n_bins must be >= 2")
        if self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if not 0.0 < self.subsample <= 1.0:
            raise ValidationError("subsample must be in (0, 1]")


@dataclass
class Forest:
    """A fitted ensemble; nodes live in flat arrays, trees are index ranges.

    predict(X) = base_score + learning_rate * sum of leaf values.
    """

    n_features: int
    base_score: float
    learning_rate: float
    node_feature: np.ndarray       # int32; -1 marks a leaf
    node_threshold: np.ndarray     # float64; split is "x <= threshold"
    node_left: np.ndarray          # int32
    node_right: np.ndarray         # int32
    node_default_left: np.ndarray  # uint8; NaN routing per node
    node_value: np.ndarray         # float64; leaf outputs
    tree_starts: np.ndarray        # int32, length n_trees + 1

    @property
    def n_trees(self) -> int:
        return len(self.tree_starts) - 1

    @property
    def n_nodes(self) -> int:
        return int(self.tree_starts[-1])

    def predict(self, features: np.ndarray, n_trees: Optional[int] = None) -> np.ndarray:
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise ValidationError(
                f"feature width {features.shape[1] if features.ndim == 2 else '?'} "
                f"!= training width {self.n_features}"
            )
        limit = self.n_trees if n_trees is None else min(n_trees, self.n_trees)
        out = np.empty(features.shape[0])
        _gbt_kernels.predict(
            features, self.node_feature, self.node_threshold, self.node_left,
            self.node_right, self.node_default_left, self.node_value,
            self.tree_starts, self.base_score, self.learning_rate, limit, out,
        )
        return out

    def equals(self, other: "Forest") -> bool:
        return (
            self.n_features == other.n_features
            and self.base_score == other.base_score
            and self.learning_rate == other.learning_rate
            and np.array_equal(self.tree_starts, other.tree_starts)
            and np.array_equal(self.node_feature, other.node_feature)
            and np.array_equal(self.node_threshold, other.node_threshold)
            and np.array_equal(self.node_left, other.node_left)
            and np.array_equal(self.node_right, other.node_right)
            and np.array_equal(self.node_default_left, other.node_default_left)
            and np.array_equal(self.node_value, other.node_value)
        )


def quantile_thresholds(col: np.ndarray, n_bins: int) -> np.ndarray:
    """Candidate split thresholds for one feature.

    All distinct values except the maximum when there are few; otherwise the
    empirical quantile values at n_bins equally spaced row ranks (rows weigh
    equally, so heavy duplicates occupy more bins).
    """
    vals = np.sort(col[~np.isnan(col)])
    if vals.size == 0:
        return np.empty(0)
    uniq = np.unique(vals)
    if uniq.size <= 1:
        return np.empty(0)
    if uniq.size <= n_bins:
        return uniq[:-1]
    ranks = (np.arange(1, n_bins) * vals.size) // n_bins
    cand = np.unique(vals[ranks])
    return cand[cand < uniq[-1]]


def bin_features(features: np.ndarray, thresholds: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map features to bin indices (first threshold >= value; -1 for NaN)."""
    n, p = features.shape
    binned = np.empty((n, p), dtype=np.int32)
    n_thr = np.array([t.size for t in thresholds], dtype=np.int64)
    max_thr = max(1, int(n_thr.max()) if p else 1)
    thr_vals = np.zeros((p, max_thr))
    for f in range(p):
        col = features[:, f]
        miss = np.isnan(col)
        idx = np.searchsorted(thresholds[f], col, side="left")
        idx[miss] = -1
        binned[:, f] = idx
        if n_thr[f]:
            thr_vals[f, :n_thr[f]] = thresholds[f]
    return binned, n_thr, thr_vals


def fit(features: np.ndarray, targets: np.ndarray,
        cfg: GBTConfig = GBTConfig(), seed: int = 0) -> Forest:
    """Fit a boosted ensemble of regression trees.

    NaN feature cells are legal (handled by default directions); NaN or
    infinite targets are not.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    if features.ndim != 2:
        raise ValidationError("features must be a 2-D matrix")
    if targets.ndim != 1 or targets.shape[0] != features.shape[0]:
        raise ValidationError("targets length must match feature rows")
    if features.shape[0] < 1:
        raise ValidationError("empty input")
    if not np.isfinite(targets).all():
        raise ValidationError("targets must be finite")

    n, p = features.shape
    thresholds = [quantile_thresholds(features[:, f], cfg.n_bins) for f in range(p)]
    binned, n_thr, thr_vals = bin_features(features, thresholds)

    capacity = cfg.n_trees * ((1 << (cfg.max_depth + 1)) - 1)
    node_feat = np.empty(capacity, dtype=np.int32)
    node_thr = np.zeros(capacity)
    node_left = np.zeros(capacity, dtype=np.int32)
    node_right = np.zeros(capacity, dtype=np.int32)
    node_default_left = np.zeros(capacity, dtype=np.uint8)
    node_value = np.zeros(capacity)
    tree_starts = np.empty(cfg.n_trees + 1, dtype=np.int32)

    base_score = float(targets.mean())
    count = _gbt_kernels.build_forest(
        binned, targets, n_thr, thr_vals, base_score, cfg.n_trees, cfg.max_depth,
        cfg.learning_rate, cfg.lambda_l2, cfg.gamma_min_gain,
        cfg.min_child_weight, cfg.subsample, seed & 0xFFFFFFFF,
        node_feat, node_thr, node_left, node_right, node_default_left,
        node_value, tree_starts,
    )
    return Forest(
        n_features=p,
        base_score=base_score,
        learning_rate=cfg.learning_rate,
        node_feature=node_feat[:count].copy(),
        node_threshold=node_thr[:count].copy(),
        node_left=node_left[:count].copy(),
        node_right=node_right[:count].copy(),
        node_default_left=node_default_left[:count].copy(),
        node_value=node_value[:count].copy(),
        tree_starts=tree_starts.copy(),
    )


def constant_forest(n_features: int, value: float, learning_rate: float = 0.3) -> Forest:
    """Zero-tree forest that predicts `value` everywhere."""
    return Forest(
        n_features=n_features,
        base_score=float(value),
        learning_rate=learning_rate,
        node_feature=np.empty(0, dtype=np.int32),
        node_threshold=np.empty(0),
        node_left=np.empty(0, dtype=np.int32),
        node_right=np.empty(0, dtype=np.int32),
        node_default_left=np.empty(0, dtype=np.uint8),
        node_value=np.empty(0),
        tree_starts=np.zeros(1, dtype=np.int32),
    )
