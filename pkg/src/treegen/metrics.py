"""Evaluation metrics for generated and imputed tables.

Distances use the Gower ground cost: the per-row distance is the SUM of
per-variable costs, each in [0, 1] (range-normalized L1 for numeric
variables, one-hot L1 halved for categorical ones, i.e. 0/1 identity).
Ranges are fitted on the real/reference side and shared with the other
side, clipping values that fall outside.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, sparse

from .errors import ValidationError
from .forest import derive_rng
from .gbt import GBTConfig, fit as gbt_fit
from .linmod import LogisticOVR, ols
from .schema import Dataset, TableSchema

WASSERSTEIN_CAP = 5000
BETA_TOLERANCE = 1e-8  # coefficients below this are excluded from percent bias


@dataclass(frozen=True)
class GowerSpace:
    schema: TableSchema
    ranges: tuple[Optional[tuple[float, float]], ...]  # per numeric variable

    @classmethod
    def fit(cls, reference: Dataset) -> "GowerSpace":
        ranges = []
        for var, col in zip(reference.schema.variables, reference.columns):
            if var.kind.is_numeric:
                finite = col[~np.isnan(col)]
                if finite.size == 0:
                    raise ValidationError(f"variable {var.name!r}: nothing observed to fit a range")
                ranges.append((float(finite.min()), float(finite.max())))
            else:
                ranges.append(None)
        return cls(reference.schema, tuple(ranges))

    def normalize(self, var_idx: int, values: np.ndarray) -> np.ndarray:
        lo, hi = self.ranges[var_idx]
        if hi == lo:
            return np.zeros_like(np.asarray(values, dtype=np.float64))
        return np.clip((np.asarray(values, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)

    def cell_cost(self, var_idx: int, a, b) -> float:
        """Cost of one variable between two cells, in [0, 1]."""
        var = self.schema.variables[var_idx]
        if var.kind.is_numeric:
            if np.isnan(a) or np.isnan(b):
                raise ValidationError("gower cost needs complete cells")
            na, nb = self.normalize(var_idx, np.array([a, b]))
            return float(abs(na - nb))
        if a == -1 or b == -1:
            raise ValidationError("gower cost needs complete cells")
        return 0.0 if a == b else 1.0

    def distance(self, row_a: Sequence, row_b: Sequence) -> float:
        """Gower distance between two complete rows (sum of per-variable costs)."""
        if len(row_a) != self.schema.n_vars or len(row_b) != self.schema.n_vars:
            raise ValidationError("row length does not match schema")
        return float(sum(self.cell_cost(j, row_a[j], row_b[j])
                         for j in range(self.schema.n_vars)))

    def pairwise(self, a: Dataset, b: Dataset) -> np.ndarray:
        """Full Gower cost matrix between two complete datasets."""
        for ds in (a, b):
            if ds.schema != self.schema:
                raise ValidationError("dataset schema does not match the gower space")
            if not ds.is_complete():
                raise ValidationError("gower distances need complete datasets")
        out = np.zeros((a.n_rows, b.n_rows))
        for j, var in enumerate(self.schema.variables):
            if var.kind.is_numeric:
                na = self.normalize(j, a.columns[j])
                nb = self.normalize(j, b.columns[j])
                out += np.abs(na[:, None] - nb[None, :])
            else:
                out += a.columns[j][:, None] != b.columns[j][None, :]
        return out


def gower(row_a: Sequence, row_b: Sequence, space: GowerSpace) -> float:
    return space.distance(row_a, row_b)


def wasserstein(real: Dataset, fake: Dataset, space: GowerSpace,
                cap: int = WASSERSTEIN_CAP, seed: int = 0) -> float:
    """Exact W1 between the two uniform empirical measures under Gower cost.

    Solved to optimality as a transportation linear program; sides larger
    than `cap` rows are subsampled with a fixed seed first.
    """
    real = _maybe_subsample(real, cap, seed, "wasserstein-real")
    fake = _maybe_subsample(fake, cap, seed, "wasserstein-fake")
    cost = space.pairwise(real, fake)
    n, m = cost.shape
    row_idx = np.repeat(np.arange(n), m)
    col_idx = np.tile(np.arange(m), n)
    var_idx = np.arange(n * m)
    a_eq = sparse.coo_matrix(
        (np.ones(2 * n * m),
         (np.concatenate([row_idx, n + col_idx]), np.concatenate([var_idx, var_idx]))),
        shape=(n + m, n * m),
    ).tocsr()
    b_eq = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])
    res = optimize.linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None),
                           method="highs")
    if not res.success:
        raise ValidationError(f"transport solve failed: {res.message}")
    return float(res.fun)


def _maybe_subsample(ds: Dataset, cap: int, seed: int, tag: str) -> Dataset:
    if ds.n_rows <= cap:
        return ds
    idx = derive_rng(seed, tag).choice(ds.n_rows, size=cap, replace=False)
    return ds.take_rows(np.sort(idx))


def select_coverage_k(d_rr: np.ndarray, target: float = 0.95) -> int:
    """Smallest k such that >= 95% of real points lie strictly inside their
    own k-nearest-neighbor sphere via some other real point.

    "Strictly inside" makes the selection non-degenerate: at k=1 no point
    beats its own nearest-neighbor distance, so k starts biting at 2 and
    grows further only under duplicated rows / tied distances.
    """
    n = d_rr.shape[0]
    d = d_rr.copy()
    np.fill_diagonal(d, np.inf)
    sorted_rows = np.sort(d, axis=1)
    nearest = sorted_rows[:, 0]
    for k in range(1, n):
        covered = nearest < sorted_rows[:, k - 1]
        if covered.mean() >= target:
            return k
    return n - 1


def coverage(real: Dataset, fake: Dataset, space: GowerSpace) -> float:
    """Fraction of real rows with at least one fake row strictly within their
    k-nearest-neighbor radius, k calibrated on the real data."""
    if real.n_rows < 2:
        raise ValidationError("coverage needs at least 2 real rows")
    d_rr = space.pairwise(real, real)
    k = select_coverage_k(d_rr)
    d_self = d_rr.copy()
    np.fill_diagonal(d_self, np.inf)
    radii = np.sort(d_self, axis=1)[:, k - 1]
    d_rf = space.pairwise(real, fake)
    return float((d_rf.min(axis=1) < radii).mean())


def _cell_costs(space: GowerSpace, var_idx: int, values: np.ndarray, center) -> np.ndarray:
    var = space.schema.variables[var_idx]
    if var.kind.is_numeric:
        return np.abs(space.normalize(var_idx, values) - center)
    return (values != center).astype(np.float64)


def mad_diversity(imputations: list[Dataset], mask: np.ndarray, space: GowerSpace) -> float:
    """Mean absolute deviation of imputed cells around their per-cell median
    (numeric, on the normalized scale) or mode (categorical)."""
    if len(imputations) < 2:
        raise ValidationError("MAD needs at least 2 imputations")
    _check_imputation_inputs(imputations, mask, space)
    total, count = 0.0, 0
    for j, var in enumerate(space.schema.variables):
        rows = np.flatnonzero(mask[:, j])
        if rows.size == 0:
            continue
        stacked = np.stack([imp.columns[j][rows] for imp in imputations])  # (k, rows)
        if var.kind.is_numeric:
            norm = space.normalize(j, stacked)
            med = np.median(norm, axis=0)
            costs = np.abs(norm - med[None, :])
        else:
            costs = np.empty(stacked.shape)
            for r in range(stacked.shape[1]):
                mode = np.bincount(stacked[:, r]).argmax()  # lowest id wins ties
                costs[:, r] = stacked[:, r] != mode
        total += costs.sum()
        count += costs.size
    if count == 0:
        raise ValidationError("mask selects no cells")
    return total / count


def mae_min_avg(imputations: list[Dataset], truth: Dataset, mask: np.ndarray,
                space: GowerSpace) -> tuple[float, float]:
    """Row-wise minimum and average mean-absolute-error against the truth.

    Each imputation scores a row by the mean Gower cost over that row's
    masked cells; MinMAE keeps the best imputation per row before averaging
    rows, AvgMAE averages across all imputations (so MinMAE <= AvgMAE).
    """
    if not imputations:
        raise ValidationError("need at least one imputation")
    _check_imputation_inputs(imputations, mask, space)
    if truth.schema != space.schema:
        raise ValidationError("truth schema does not match the gower space")
    k = len(imputations)
    n = truth.n_rows
    cost_sum = np.zeros((k, n))
    cells = np.zeros(n)
    for j, var in enumerate(space.schema.variables):
        rows = np.flatnonzero(mask[:, j])
        if rows.size == 0:
            continue
        truth_col = truth.columns[j][rows]
        if var.kind.is_numeric and np.isnan(truth_col).any():
            raise ValidationError("truth must be complete at masked positions")
        if var.kind.is_categorical and (truth_col == -1).any():
            raise ValidationError("truth must be complete at masked positions")
        center = space.normalize(j, truth_col) if var.kind.is_numeric else truth_col
        for m, imp in enumerate(imputations):
            cost_sum[m, rows] += _cell_costs(space, j, imp.columns[j][rows], center)
        cells[rows] += 1
    has_missing = cells > 0
    row_mae = cost_sum[:, has_missing] / cells[has_missing]
    min_mae = float(row_mae.min(axis=0).mean())
    avg_mae = float(row_mae.mean(axis=0).mean())
    return min_mae, avg_mae


def _check_imputation_inputs(imputations: list[Dataset], mask: np.ndarray, space: GowerSpace):
    for imp in imputations:
        if imp.schema != space.schema:
            raise ValidationError("imputation schema mismatch")
        if not imp.is_complete():
            raise ValidationError("imputations must be complete")
        if mask.shape != (imp.n_rows, imp.schema.n_vars):
            raise ValidationError("mask shape mismatch")


def _design_matrix(data: Dataset, feature_vars: list[int],
                   normalizers: Optional[dict[int, tuple[float, float]]] = None,
                   intercept: bool = True) -> np.ndarray:
    cols = [np.ones(data.n_rows)] if intercept else []
    for j in feature_vars:
        var = data.schema.variables[j]
        col = data.columns[j]
        if var.kind.is_numeric:
            if normalizers and j in normalizers:
                lo, hi = normalizers[j]
                col = (col - lo) / (hi - lo) if hi > lo else np.zeros_like(col)
            cols.append(col.astype(np.float64))
        else:
            for c in range(1, var.n_categories):
                cols.append((col == c).astype(np.float64))
    return np.column_stack(cols)


def inference_stats(true_data: Dataset, synthetic_sets: list[Dataset],
                    beta_tolerance: float = BETA_TOLERANCE) -> tuple[float, float]:
    """Percent bias and 95% confidence-interval coverage of OLS coefficients
    estimated on synthetic sets against those from the true data.

    Returns (p_bias, cov_rate); singular fits contribute missing entries
    which are excluded from both means.
    """
    if not synthetic_sets:
        raise ValidationError("need at least one synthetic set")
    schema = true_data.schema
    if schema.outcome_index is None:
        raise ValidationError("inference stats need an outcome variable")
    if not schema.outcome.kind.is_numeric:
        raise ValidationError("inference stats need a numeric outcome (linear regression)")
    feature_vars = [j for j in range(schema.n_vars) if j != schema.outcome_index]

    truth_fit = ols(_design_matrix(true_data, feature_vars),
                    true_data.columns[schema.outcome_index])
    if truth_fit.singular:
        raise ValidationError("true-data design matrix is singular")
    beta = truth_fit.beta

    rel_bias = np.full((len(synthetic_sets), beta.size), np.nan)
    contains = np.full((len(synthetic_sets), beta.size), np.nan)
    for s, synth in enumerate(synthetic_sets):
        if synth.schema != schema:
            raise ValidationError("synthetic set schema mismatch")
        fit_s = ols(_design_matrix(synth, feature_vars),
                    synth.columns[schema.outcome_index])
        if fit_s.singular:
            continue
        lo, hi = fit_s.conf_int()
        contains[s] = (lo <= beta) & (beta <= hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel_bias[s] = (fit_s.beta - beta) / beta

    keep = np.abs(beta) >= beta_tolerance
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        per_coef = np.abs(np.nanmean(rel_bias[:, keep], axis=0))
        p_bias = float(np.nanmean(per_coef)) if keep.any() else float("nan")
        cov_rate = float(np.nanmean(contains))
    return p_bias, cov_rate


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    classes = np.union1d(np.unique(y_true), np.unique(y_pred))
    scores = []
    for c in classes:
        tp = float(((y_pred == c) & (y_true == c)).sum())
        fp = float(((y_pred == c) & (y_true != c)).sum())
        fn = float(((y_pred != c) & (y_true == c)).sum())
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


def r_squared(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    ss_res = float(((y_true - y_pred) ** 2).sum())
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0


def efficiency(train_synth: Dataset, test_real: Dataset,
               gbt_cfg: GBTConfig = GBTConfig(), seed: int = 0) -> float:
    """Downstream usefulness: train the model roster (linear/logistic and
    in-house GBT) on synthetic data, average macro-F1 (categorical outcome)
    or R^2 (numeric outcome) on the real test set."""
    schema = train_synth.schema
    if schema != test_real.schema:
        raise ValidationError("train/test schema mismatch")
    if schema.outcome_index is None:
        raise ValidationError("efficiency needs an outcome variable")
    out_idx = schema.outcome_index
    out_var = schema.outcome
    feature_vars = [j for j in range(schema.n_vars) if j != out_idx]
    normalizers = {}
    for j in feature_vars:
        if schema.variables[j].kind.is_numeric:
            col = train_synth.columns[j]
            normalizers[j] = (float(np.nanmin(col)), float(np.nanmax(col)))

    x_train = _design_matrix(train_synth, feature_vars, normalizers)
    x_test = _design_matrix(test_real, feature_vars, normalizers)
    y_train = train_synth.columns[out_idx]
    y_test = test_real.columns[out_idx]

    if out_var.kind.is_categorical:
        if np.unique(y_train).size < 2:
            raise ValidationError("classification needs at least 2 training classes")
        k = out_var.n_categories
        lin_pred = LogisticOVR(k).fit(x_train, y_train).predict(x_test)
        gbt_scores = np.stack([
            gbt_fit(x_train, (y_train == c).astype(np.float64), gbt_cfg, seed=seed).predict(x_test)
            for c in range(k)
        ])
        gbt_pred = np.argmax(gbt_scores, axis=0).astype(np.int64)
        return float(np.mean([macro_f1(y_test, lin_pred), macro_f1(y_test, gbt_pred)]))

    lin = ols(x_train, y_train)
    lin_pred = x_test @ lin.beta
    gbt_pred = gbt_fit(x_train, y_train, gbt_cfg, seed=seed).predict(x_test)
    return float(np.mean([r_squared(y_test, lin_pred), r_squared(y_test, gbt_pred)]))


@dataclass
class MetricReport:
    """One experiment's metric values; fields stay None when inapplicable."""

    w_train: Optional[float] = None
    w_test: Optional[float] = None
    cov_train: Optional[float] = None
    cov_test: Optional[float] = None
    mad: Optional[float] = None
    min_mae: Optional[float] = None
    avg_mae: Optional[float] = None
    efficiency: Optional[float] = None
    p_bias: Optional[float] = None
    cov_rate: Optional[float] = None

    def __post_init__(self):
        for name in ("cov_train", "cov_test", "cov_rate"):
            v = getattr(self, name)
            if v is not None and not np.isnan(v) and not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be a fraction, got {v}")
        for name in ("w_train", "w_test", "mad", "min_mae", "avg_mae"):
            v = getattr(self, name)
            if v is not None and not np.isnan(v) and v < 0.0:
                raise ValidationError(f"{name} must be non-negative, got {v}")

    @staticmethod
    def field_names() -> list[str]:
        return [f.name for f in fields(MetricReport)]

    def as_row(self) -> list[str]:
        out = []
        for name in self.field_names():
            v = getattr(self, name)
            out.append("" if v is None else repr(float(v)))
        return out
