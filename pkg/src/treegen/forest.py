"""Training, sampling, and imputation over the forest grid.

Training duplicates the encoded rows n_noise times, draws one shared
standard-normal matrix of that shape, and for every noise level fits one
GBT regressor per encoded column (and per outcome class when label
conditioning is on) mapping the noised matrix to that column of the
regression target. Sampling runs the learned reverse dynamics from fresh
noise; imputation (VP only) interleaves reverse steps on missing positions
with forward-noised truth on observed ones and repaints by jumping the
state back up the noise scale.
"""

from __future__ import annotations

import hashlib
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .encoding import Encoder, decode_dataset, encode, fit_encoder
from .errors import ValidationError
from .gbt import Forest, GBTConfig, constant_forest, fit as gbt_fit
from .process import (
    NoiseSchedule,
    ProcessKind,
    TimeGrid,
    flow_forward,
    flow_reverse_step,
    vp_forward,
    vp_forward_jump,
    vp_reverse_step,
)
from .schema import Dataset, TableSchema

NO_LABEL = -1


@dataclass(frozen=True)
class TrainConfig:
    process: ProcessKind = ProcessKind.FLOW_MATCHING
    n_t: int = 50
    n_noise: int = 100
    label_conditioning: Optional[bool] = None  # None = auto (on for categorical outcome)
    gbt: GBTConfig = field(default_factory=GBTConfig)
    seed: int = 0
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    cell_budget: int = 200_000_000  # duplicated-matrix cells before n_noise is halved

    def __post_init__(self):
        if self.n_t < 1:
            raise ValidationError("n_t must be >= 1")
        if self.n_noise < 1:
            raise ValidationError("n_noise must be >= 1")


@dataclass(frozen=True)
class ImputeConfig:
    k_imputations: int = 10
    repaint_r: int = 10
    jump_j: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k_imputations < 1:
            raise ValidationError("k_imputations must be >= 1")
        if self.repaint_r < 1:
            raise ValidationError("repaint_r must be >= 1")
        if self.jump_j < 1:
            raise ValidationError("jump_j must be >= 1")


@dataclass
class TabularDiffusionModel:
    """Grid of fitted forests indexed by (level, encoded column, label)."""

    process: ProcessKind
    grid: TimeGrid
    schedule: NoiseSchedule
    encoder: Encoder
    label_var: Optional[int]            # outcome index when conditioning, else None
    label_probs: Optional[np.ndarray]   # empirical class distribution of the outcome
    models: dict[tuple[int, int, int], Forest]
    n_noise_effective: int
    train_config: TrainConfig

    @property
    def schema(self) -> TableSchema:
        return self.encoder.schema

    @property
    def conditioned(self) -> bool:
        return self.label_var is not None

    @property
    def excluded_vars(self) -> frozenset[int]:
        return frozenset({self.label_var}) if self.conditioned else frozenset()

    @property
    def p_enc(self) -> int:
        return self.encoder.width_without(self.excluded_vars)

    @property
    def labels(self) -> list[int]:
        if not self.conditioned:
            return [NO_LABEL]
        return list(range(len(self.label_probs)))

    def forest(self, level: int, column: int, label: int = NO_LABEL) -> Forest:
        return self.models[(level, column, label)]

    def check_complete(self):
        want = {(i, j, lab)
                for i in range(1, self.grid.n_t + 1)
                for j in range(self.p_enc)
                for lab in self.labels}
        if set(self.models) != want:
            raise ValidationError("model grid is incomplete")


def derive_seed(*keys) -> int:
    """Stable cross-platform stream id from arbitrary keys."""
    digest = hashlib.blake2b(repr(keys).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_rng(*keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*keys)))


def _thread_map(fn, items, threads: Optional[int]):
    if threads is not None and threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _resolve_conditioning(schema: TableSchema, requested: Optional[bool]) -> bool:
    if requested is None:
        return schema.outcome_is_label
    if requested and not schema.outcome_is_label:
        raise ValidationError("label conditioning requires a categorical outcome variable")
    return requested


def train(data: Dataset, cfg: TrainConfig, threads: Optional[int] = None) -> TabularDiffusionModel:
    """Fit the full (level x column x label) grid of regressors."""
    schema = data.schema
    conditioning = _resolve_conditioning(schema, cfg.label_conditioning)

    label_var = None
    label_probs = None
    labels_col = None
    if conditioning:
        label_var = schema.outcome_index
        out_var = schema.outcome
        labels_col = data.columns[label_var]
        if (labels_col == -1).any():
            raise ValidationError("label conditioning requires a fully observed outcome")
        counts = np.bincount(labels_col, minlength=out_var.n_categories)
        if (counts == 0).any():
            missing = [out_var.categories[k] for k in np.flatnonzero(counts == 0)]
            raise ValidationError(f"outcome classes with no rows: {missing}")
        label_probs = counts.astype(np.float64) / data.n_rows

    encoder = fit_encoder(data)
    exclude = frozenset({label_var}) if conditioning else frozenset()
    x_enc = encode(encoder, data, exclude=exclude)
    n, p_enc = x_enc.shape

    n_noise = cfg.n_noise
    while n * n_noise * p_enc > cfg.cell_budget and n_noise > 1:
        n_noise = max(1, n_noise // 2)
        warnings.warn(
            f"duplicated matrix exceeds cell budget; reducing n_noise to {n_noise}",
            RuntimeWarning, stacklevel=2,
        )

    x_dup = np.tile(x_enc, (n_noise, 1))
    z = derive_rng(cfg.seed, "train-noise").standard_normal(x_dup.shape)

    if conditioning:
        dup_labels = np.tile(labels_col, n_noise)
        groups = [(int(lab), np.flatnonzero(dup_labels == lab)) for lab in range(len(label_probs))]
    else:
        groups = [(NO_LABEL, np.arange(x_dup.shape[0]))]

    grid = TimeGrid(cfg.n_t)
    models: dict[tuple[int, int, int], Forest] = {}

    def fit_one(task):
        level, column, lab, feats, tgt = task
        keep = ~np.isnan(tgt)
        if not keep.any():
            return (level, column, lab), constant_forest(p_enc, 0.0, cfg.gbt.learning_rate)
        if not keep.all():
            feats = feats[keep]
            tgt = tgt[keep]
        forest = gbt_fit(feats, tgt, cfg.gbt, seed=derive_seed(cfg.seed, level, column, lab))
        return (level, column, lab), forest

    for level in range(1, cfg.n_t + 1):
        t = grid.level(level)
        if cfg.process is ProcessKind.FLOW_MATCHING:
            x_t, y_t = flow_forward(z, x_dup, t)
        else:
            x_t, y_t = vp_forward(z, x_dup, t, cfg.schedule)
        tasks = []
        for lab, rows in groups:
            feats = x_t if rows.shape[0] == x_dup.shape[0] else x_t[rows]
            for column in range(p_enc):
                tasks.append((level, column, lab, feats, y_t[rows, column]))
        for key, forest in _thread_map(fit_one, tasks, threads):
            models[key] = forest

    model = TabularDiffusionModel(
        process=cfg.process,
        grid=grid,
        schedule=cfg.schedule,
        encoder=encoder,
        label_var=label_var,
        label_probs=label_probs,
        models=models,
        n_noise_effective=n_noise,
        train_config=cfg,
    )
    model.check_complete()
    return model


def _predict_grid(model: TabularDiffusionModel, level: int, x: np.ndarray,
                  labels: Optional[np.ndarray], threads: Optional[int]) -> np.ndarray:
    """Predicted target matrix at one level: column j from forest (level, j, label)."""
    preds = np.empty_like(x)
    if not model.conditioned:
        def run(column):
            preds[:, column] = model.forest(level, column).predict(x)
        _thread_map(run, range(x.shape[1]), threads)
        return preds
    for lab in np.unique(labels):
        rows = labels == lab
        sub = np.ascontiguousarray(x[rows])

        def run(column, lab=int(lab), rows=rows, sub=sub):
            preds[rows, column] = model.forest(level, column, lab).predict(sub)
        _thread_map(run, range(x.shape[1]), threads)
    return preds


def generate(model: TabularDiffusionModel, n_obs: int, seed: int = 0,
             threads: Optional[int] = None, verbatim_noise: bool = False) -> Dataset:
    """Sample n_obs rows by running the reverse process from fresh noise."""
    if n_obs < 1:
        raise ValidationError("n_obs must be >= 1")
    rng = derive_rng(seed, "generate")
    labels = None
    if model.conditioned:
        labels = rng.choice(len(model.label_probs), size=n_obs, p=model.label_probs).astype(np.int64)
    x = rng.standard_normal((n_obs, model.p_enc))
    grid = model.grid
    h = grid.step

    if model.process is ProcessKind.FLOW_MATCHING:
        # s runs upward from noise (s=0) to data (s=1); model i covers level i/n_t
        for level in range(1, grid.n_t + 1):
            v = _predict_grid(model, level, x, labels, threads)
            x = flow_reverse_step(x, v, h)
    else:
        for level in range(grid.n_t, 0, -1):
            eps = _predict_grid(model, level, x, labels, threads)
            z = rng.standard_normal(x.shape) if level > 1 else np.zeros_like(x)
            x = vp_reverse_step(x, eps, grid.level(level), h, z, model.schedule,
                                verbatim_noise=verbatim_noise)

    overrides = {model.label_var: labels} if model.conditioned else None
    return decode_dataset(model.encoder, x, overrides=overrides)


def impute(model: TabularDiffusionModel, data: Dataset, cfg: ImputeConfig,
           threads: Optional[int] = None, verbatim_noise: bool = False) -> list[Dataset]:
    """Produce k completed copies of `data` (VP models only).

    Observed cells are restored verbatim from the input; missing cells are
    filled by the reverse process with repainting.
    """
    if model.process is not ProcessKind.VP_DIFFUSION:
        raise ValidationError("imputation relies on the stochastic reverse process; "
                              "flow models cannot impute (train with process=vp)")
    if data.schema != model.schema:
        raise ValidationError("dataset schema does not match the model")
    if cfg.jump_j > model.grid.n_t:
        raise ValidationError("jump_j cannot exceed n_t")

    raw_missing = data.missing_mask()
    if not raw_missing.any():
        warnings.warn("input has no missing cells; returning it unchanged", RuntimeWarning,
                      stacklevel=2)
        return [data.copy()]

    labels = None
    if model.conditioned:
        if raw_missing[:, model.label_var].any():
            raise ValidationError("conditioned imputation requires a fully observed outcome")
        labels = data.columns[model.label_var]

    x_true = encode(model.encoder, data, exclude=model.excluded_vars)
    miss = np.isnan(x_true)
    x_true_filled = np.where(miss, 0.0, x_true)

    grid = model.grid
    n_t, h = grid.n_t, grid.step
    results = []
    for k in range(1, cfg.k_imputations + 1):
        rng = derive_rng(cfg.seed, "impute", k)
        x = rng.standard_normal(x_true.shape)
        counter = 1
        t = n_t
        just_jumped = False
        while t > 0:
            # a jump lands on a level that is itself a window boundary, so
            # both boundary checks are suppressed for that one iteration;
            # the next check fires back at the window's lower edge
            at_boundary = (t + 1) % cfg.jump_j == 0 and not just_jumped
            just_jumped = False
            if at_boundary and t < n_t and counter < cfg.repaint_r:
                # repaint: push the state back up the noise scale, one forward
                # step per level, then redo the reverse from there
                counter += 1
                steps = min(cfg.jump_j, n_t - t)
                for s in range(steps):
                    z = rng.standard_normal(x.shape)
                    x = vp_forward_jump(z, x, grid.level(t + s), h, model.schedule,
                                        verbatim_noise=verbatim_noise)
                t += steps
                just_jumped = True
                continue

            eps = _predict_grid(model, t, x, labels, threads)
            z = rng.standard_normal(x.shape) if t > 1 else np.zeros_like(x)
            x_rev = vp_reverse_step(x, eps, grid.level(t), h, z, model.schedule,
                                    verbatim_noise=verbatim_noise)
            z_obs = rng.standard_normal(x.shape)
            x_obs, _ = vp_forward(z_obs, x_true_filled, grid.level(t), model.schedule)
            x = np.where(miss, x_rev, x_obs)

            if at_boundary and counter == cfg.repaint_r:
                counter = 0
            t -= 1

        overrides = {model.label_var: labels.copy()} if model.conditioned else None
        out = decode_dataset(model.encoder, x, overrides=overrides)
        for j, var in enumerate(model.schema.variables):
            observed = ~raw_missing[:, j]
            out.columns[j][observed] = data.columns[j][observed]
        results.append(out)
    return results
