"""Desk-scale reproduction study on the bundled iris table.

Runs both processes at the reference ablation settings over a few seeds,
scoring each run against the held-out split with Wasserstein distance,
coverage, and downstream efficiency. REFERENCE holds the target values
the baselines and ablation rows are compared against.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .forest import TrainConfig, derive_rng, generate, train
from .metrics import GowerSpace, coverage, efficiency, wasserstein
from .process import ProcessKind
from .schema import Dataset, load_dataset

DEFAULT_SEEDS = (0, 1, 2)
TRAIN_FRACTION = 0.8
MCAR_FRACTION = 0.2

# variant -> (W_test, cov_test, F1) reference values
REFERENCE = {
    ("flow", "baseline"): (0.57, 0.92, 0.95),
    ("vp", "baseline"): (0.57, 0.93, 0.96),
    ("flow", "n_noise=1"): (0.72, 0.86, 0.81),
    ("vp", "n_noise=1"): (0.81, 0.71, 0.69),
    ("vp", "n_t=10"): (0.75, 0.56, 0.84),
}
# acceptance bands apply to the baselines only
BAND_W, BAND_COV, BAND_F1 = 0.10, 0.06, 0.06
MCAR_W_RATIO_LIMIT = 1.3


@dataclass
class StudyRow:
    process: str
    variant: str
    w_test: float
    cov_test: float
    f1: float
    reference: Optional[tuple[float, float, float]] = None

    def in_band(self) -> Optional[tuple[bool, bool, bool]]:
        if self.reference is None or self.variant != "baseline":
            return None
        rw, rc, rf = self.reference
        return (abs(self.w_test - rw) <= BAND_W,
                abs(self.cov_test - rc) <= BAND_COV,
                abs(self.f1 - rf) <= BAND_F1)


def iris_path() -> str:
    return str(resources.files("treegen.data").joinpath("iris.csv"))


def load_iris() -> Dataset:
    return load_dataset(iris_path(), outcome="species")


def split_dataset(data: Dataset, seed: int,
                  train_fraction: float = TRAIN_FRACTION) -> tuple[Dataset, Dataset]:
    """Seeded shuffle split into (train, test)."""
    rng = derive_rng(seed, "split")
    idx = rng.permutation(data.n_rows)
    n_train = int(round(data.n_rows * train_fraction))
    return data.take_rows(idx[:n_train]), data.take_rows(idx[n_train:])


def apply_mcar(data: Dataset, fraction: float, seed: int,
               skip_outcome: bool = True) -> Dataset:
    """Remove cells completely at random from the feature columns."""
    rng = derive_rng(seed, "mcar")
    out = data.copy()
    for j, var in enumerate(data.schema.variables):
        if skip_outcome and j == data.schema.outcome_index:
            continue
        hit = rng.random(data.n_rows) < fraction
        if var.kind.is_numeric:
            out.columns[j][hit] = np.nan
        else:
            out.columns[j][hit] = -1
    return out


def score_generation(train_ds: Dataset, test_ds: Dataset, fake: Dataset) -> tuple[float, float, float]:
    space = GowerSpace.fit(test_ds)
    return (wasserstein(test_ds, fake, space),
            coverage(test_ds, fake, space),
            efficiency(fake, test_ds))


def run_variant(train_ds: Dataset, test_ds: Dataset, process: ProcessKind, seed: int,
                n_t: int = 50, n_noise: int = 100,
                threads: Optional[int] = None) -> tuple[float, float, float]:
    cfg = TrainConfig(process=process, n_t=n_t, n_noise=n_noise,
                      label_conditioning=False, seed=seed)
    model = train(train_ds, cfg, threads=threads)
    fake = generate(model, train_ds.n_rows, seed=seed, threads=threads)
    return score_generation(train_ds, test_ds, fake)


VARIANTS = (
    ("flow", "baseline", ProcessKind.FLOW_MATCHING, 50, 100, False),
    ("vp", "baseline", ProcessKind.VP_DIFFUSION, 50, 100, False),
    ("flow", "n_noise=1", ProcessKind.FLOW_MATCHING, 50, 1, False),
    ("vp", "n_noise=1", ProcessKind.VP_DIFFUSION, 50, 1, False),
    ("vp", "n_t=10", ProcessKind.VP_DIFFUSION, 10, 100, False),
    ("flow", "mcar20", ProcessKind.FLOW_MATCHING, 50, 100, True),
)


def run_iris_study(seeds=DEFAULT_SEEDS, threads: Optional[int] = None,
                   include_mcar: bool = True, mcar_fraction: float = MCAR_FRACTION,
                   progress=None) -> list[StudyRow]:
    """Mean W_test / cov_test / F1 per variant over the given seeds."""
    data = load_iris()
    sums: dict[tuple[str, str], np.ndarray] = {}
    for seed in seeds:
        train_ds, test_ds = split_dataset(data, seed)
        for proc_name, variant, process, n_t, n_noise, mcar in VARIANTS:
            if mcar and not include_mcar:
                continue
            fit_ds = apply_mcar(train_ds, mcar_fraction, seed) if mcar else train_ds
            scores = run_variant(fit_ds, test_ds, process, seed, n_t=n_t,
                                 n_noise=n_noise, threads=threads)
            if progress is not None:
                progress(f"seed {seed} {proc_name}/{variant}: "
                         f"W_test={scores[0]:.3f} cov_test={scores[1]:.3f} F1={scores[2]:.3f}")
            key = (proc_name, variant)
            sums[key] = sums.get(key, np.zeros(3)) + np.asarray(scores)
    rows = []
    for proc_name, variant, *_ in VARIANTS:
        key = (proc_name, variant)
        if key not in sums:
            continue
        mean = sums[key] / len(seeds)
        rows.append(StudyRow(proc_name, variant, float(mean[0]), float(mean[1]),
                             float(mean[2]), REFERENCE.get(key)))
    return rows


def format_study(rows: list[StudyRow]) -> str:
    lines = [f"{'process':8} {'variant':10} {'W_test':>8} {'cov_test':>9} {'F1':>7}"
             f"   {'ref W/cov/F1':>16}   band"]
    by_key = {(r.process, r.variant): r for r in rows}
    for row in rows:
        ref = "-" if row.reference is None else "/".join(f"{v:.2f}" for v in row.reference)
        band = row.in_band()
        if band is None:
            verdict = "-"
        else:
            verdict = " ".join(f"{name}:{'pass' if ok else 'FAIL'}"
                               for name, ok in zip(("W", "cov", "F1"), band))
        lines.append(f"{row.process:8} {row.variant:10} {row.w_test:8.3f} "
                     f"{row.cov_test:9.3f} {row.f1:7.3f}   {ref:>16}   {verdict}")
    base = by_key.get(("flow", "baseline"))
    mcar = by_key.get(("flow", "mcar20"))
    if base and mcar:
        ratio = mcar.w_test / base.w_test
        ok = ratio <= MCAR_W_RATIO_LIMIT
        lines.append(f"incomplete-data W ratio (flow mcar20 / baseline): {ratio:.3f} "
                     f"(limit {MCAR_W_RATIO_LIMIT}) {'pass' if ok else 'FAIL'}")
    for proc in ("flow", "vp"):
        b = by_key.get((proc, "baseline"))
        d = by_key.get((proc, "n_noise=1"))
        if b and d:
            ok = d.w_test > b.w_test
            lines.append(f"ordering {proc}: W(n_noise=1)={d.w_test:.3f} > "
                         f"W(n_noise=100)={b.w_test:.3f} {'pass' if ok else 'FAIL'}")
    b, d = by_key.get(("vp", "baseline")), by_key.get(("vp", "n_t=10"))
    if b and d:
        ok = d.w_test > b.w_test
        lines.append(f"ordering vp: W(n_t=10)={d.w_test:.3f} > "
                     f"W(n_t=50)={b.w_test:.3f} {'pass' if ok else 'FAIL'}")
    return "\n".join(lines)
