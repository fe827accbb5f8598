"""Forward and reverse dynamics over encoded matrices.

Two processes are supported:

* variance-preserving (VP) diffusion: the forward map shrinks data toward a
  standard normal, ``x_T = exp(C) x + sqrt(1 - exp(2C)) z`` with
  ``C(T) = -T^2 (b_max - b_min) / 4 - T b_min / 2``, and the reverse is an
  Euler-Maruyama step of the reverse-time SDE driven by a noise predictor;
* flow matching: linear interpolation ``x_s = (1 - s) z + s x`` (s=0 noise,
  s=1 data) whose reverse is explicit Euler on ``dx = v ds``.

All kernels are pure: randomness enters only through explicit ``z``
arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class NoiseSchedule:
    beta_min: float = 0.1
    beta_max: float = 20.0

    def __post_init__(self):
        if not 0.0 < self.beta_min < self.beta_max:
            raise ValidationError("need 0 < beta_min < beta_max")

    def beta(self, t: float) -> float:
        return self.beta_min + t * (self.beta_max - self.beta_min)

    def log_mean_coeff(self, t: float) -> float:
        """C(t): log of the data coefficient of the VP forward map."""
        return -0.25 * t * t * (self.beta_max - self.beta_min) - 0.5 * t * self.beta_min


@dataclass(frozen=True)
class TimeGrid:
    """Levels 1/n_t, 2/n_t, ..., 1; index 0 means the clean-data end."""

    n_t: int

    def __post_init__(self):
        if self.n_t < 1:
            raise ValidationError("n_t must be >= 1")

    @property
    def step(self) -> float:
        return 1.0 / self.n_t

    def level(self, index: int) -> float:
        if not 0 <= index <= self.n_t:
            raise ValidationError(f"level index {index} outside 0..{self.n_t}")
        return index / self.n_t

    @property
    def levels(self) -> np.ndarray:
        return np.arange(1, self.n_t + 1) / self.n_t


class ProcessKind(str, Enum):
    VP_DIFFUSION = "vp"
    FLOW_MATCHING = "flow"


def _check_shapes(z: np.ndarray, x: np.ndarray):
    if z.shape != x.shape:
        raise ValidationError(f"shape mismatch: {z.shape} vs {x.shape}")


def flow_forward(z: np.ndarray, x: np.ndarray, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Interpolate noise to data at s in [0, 1]; regression target is x - z."""
    _check_shapes(z, x)
    return (1.0 - s) * z + s * x, x - z


def vp_forward(z: np.ndarray, x: np.ndarray, t: float,
               sched: NoiseSchedule = NoiseSchedule()) -> tuple[np.ndarray, np.ndarray]:
    """Diffuse data to level t; regression target is the injected noise z."""
    _check_shapes(z, x)
    c = sched.log_mean_coeff(t)
    mean_coeff = math.exp(c)
    noise_coeff = math.sqrt(max(0.0, 1.0 - math.exp(2.0 * c)))
    return mean_coeff * x + noise_coeff * z, z


def vp_forward_jump(z: np.ndarray, x_t: np.ndarray, t: float, h: float,
                    sched: NoiseSchedule = NoiseSchedule(),
                    verbatim_noise: bool = False) -> np.ndarray:
    """One forward Euler-Maruyama step from level t to t + h.

    Default noise scale is sqrt(beta * h); `verbatim_noise` switches to the
    alternative sqrt(beta) scaling kept for comparison runs.
    """
    _check_shapes(z, x_t)
    if h <= 0.0:
        raise ValidationError("h must be positive")
    beta = sched.beta(t)
    scale = math.sqrt(beta) if verbatim_noise else math.sqrt(beta * h)
    return x_t - h * 0.5 * beta * x_t + scale * z


def flow_reverse_step(x: np.ndarray, v_pred: np.ndarray, h: float) -> np.ndarray:
    """Explicit Euler step of dx = v ds, integrating s upward toward data."""
    if x.shape != v_pred.shape:
        raise ValidationError(f"shape mismatch: {x.shape} vs {v_pred.shape}")
    return x + h * v_pred


def vp_reverse_step(x: np.ndarray, eps_pred: np.ndarray, t: float, h: float,
                    z: np.ndarray, sched: NoiseSchedule = NoiseSchedule(),
                    verbatim_noise: bool = False) -> np.ndarray:
    """One reverse step at level t > 0 given a noise prediction.

    score = -eps_pred / sqrt(1 - exp(2C)); mu = -beta (x/2 + score);
    x' = x - h mu + sqrt(beta h) z. Callers pass z = 0 for the final
    (denoising) step to level 0.
    """
    if x.shape != eps_pred.shape:
        raise ValidationError(f"shape mismatch: {x.shape} vs {eps_pred.shape}")
    _check_shapes(z, x)
    if t <= 0.0:
        raise ValidationError("vp_reverse_step needs t > 0")
    beta = sched.beta(t)
    var = 1.0 - math.exp(2.0 * sched.log_mean_coeff(t))
    score = -eps_pred / math.sqrt(var)
    mu = -0.5 * beta * x - beta * score
    scale = beta * math.sqrt(h) if verbatim_noise else math.sqrt(beta * h)
    return x - h * mu + scale * z
