"""Small deterministic linear models used by the evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats


@dataclass
class OLSFit:
    beta: np.ndarray
    se: np.ndarray           # classical standard errors
    dof: int
    singular: bool

    def conf_int(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        if self.singular or self.dof <= 0:
            nan = np.full_like(self.beta, np.nan)
            return nan, nan
        tcrit = stats.t.ppf(0.5 + level / 2.0, self.dof)
        return self.beta - tcrit * self.se, self.beta + tcrit * self.se


def ols(design: np.ndarray, y: np.ndarray) -> OLSFit:
    """Least squares with classical standard errors.

    A rank-deficient design is flagged singular; callers treat its
    coefficients as missing.
    """
    n, p = design.shape
    beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    dof = n - p
    if rank < p or dof <= 0:
        return OLSFit(beta, np.full(p, np.nan), dof, singular=True)
    resid = y - design @ beta
    sigma2 = float(resid @ resid) / dof
    xtx_inv = np.linalg.inv(design.T @ design)
    se = np.sqrt(np.clip(np.diag(xtx_inv) * sigma2, 0.0, None))
    return OLSFit(beta, se, dof, singular=False)


def logistic_irls(design: np.ndarray, y01: np.ndarray, max_iter: int = 100,
                  tol: float = 1e-8) -> np.ndarray:
    """Binary logistic regression by iteratively reweighted least squares."""
    n, p = design.shape
    beta = np.zeros(p)
    for _ in range(max_iter):
        eta = np.clip(design @ beta, -30.0, 30.0)
        prob = 1.0 / (1.0 + np.exp(-eta))
        w = np.clip(prob * (1.0 - prob), 1e-10, None)
        grad = design.T @ (y01 - prob)
        hess = (design * w[:, None]).T @ design
        hess[np.diag_indices_from(hess)] += 1e-10
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.abs(step).max() < tol:
            break
    return beta


class LogisticOVR:
    """One-vs-rest logistic classifier; predicts the argmax class score."""

    def __init__(self, n_classes: int):
        self.n_classes = n_classes
        self.betas: Optional[np.ndarray] = None

    def fit(self, design: np.ndarray, labels: np.ndarray) -> "LogisticOVR":
        self.betas = np.stack([
            logistic_irls(design, (labels == c).astype(np.float64))
            for c in range(self.n_classes)
        ])
        return self

    def predict(self, design: np.ndarray) -> np.ndarray:
        scores = design @ self.betas.T
        return np.argmax(scores, axis=1).astype(np.int64)
