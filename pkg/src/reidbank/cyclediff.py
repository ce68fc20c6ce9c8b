"""Cycle-consistent translation between two diffusion models via a shared
latent code, with closed-form Gaussian models as verifiable oracles.

Encoding runs the exact posterior chain of the source model on an input
x0 and records, per step, the residual of the drawn state against the
source model's mean prediction, normalized by the posterior step noise:

    eps_t = (v_{t-1} - mu_V(v_t, t)) / sigma_t

Decoding replays those residuals through the target model:

    t_{t-1} = mu_T(t_t, t) + sigma_t * eps_t

At a zero-variance step (the final step has sigma_1 = 0 under the
posterior-variance schedule) the residual is stored and replayed
unscaled; this keeps the round trip through a single model an exact
identity, which is the property the latent code exists to provide.

PSNR and SSIM quality metrics for comparing translated outputs against
their sources live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise levels beta_1..beta_T with the derived quantities
    alpha_t = 1 - beta_t, alpha_bar_t = prod(alpha), and the posterior
    standard deviations sigma_t, where
    sigma_t^2 = ((1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)) * beta_t."""

    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a non-empty 1-D sequence")
        if not ((beta > 0) & (beta < 1)).all():
            raise ValueError("every beta must lie strictly in (0, 1)")
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
        sigma = np.sqrt((1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta)
        for arr in (beta, alpha, alpha_bar, sigma):
            arr.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", alpha_bar)
        object.__setattr__(self, "sigma", sigma)

    @property
    def T(self) -> int:
        return self.beta.shape[0]

    def abar(self, t: int) -> float:
        """alpha_bar_t with the convention alpha_bar_0 = 1."""
        if not 0 <= t <= self.T:
            raise ValueError(f"step {t} outside [0, {self.T}]")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def beta_at(self, t: int) -> float:
        self._check_step(t)
        return float(self.beta[t - 1])

    def alpha_at(self, t: int) -> float:
        self._check_step(t)
        return float(self.alpha[t - 1])

    def sigma_at(self, t: int) -> float:
        self._check_step(t)
        return float(self.sigma[t - 1])

    def _check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"step {t} outside [1, {self.T}]")


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule over T steps."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError("require 0 < beta_start <= beta_end < 1")
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    return arr


def forward_sample(schedule: NoiseSchedule, x0, t: int, rng: np.random.Generator) -> np.ndarray:
    """Draw x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eta, eta ~ N(0, I)."""
    schedule._check_step(t)
    v = _as_vector(x0, "x0")
    ab = schedule.abar(t)
    return math.sqrt(ab) * v + math.sqrt(1.0 - ab) * rng.standard_normal(v.shape[0])


def posterior_mean(schedule: NoiseSchedule, x_t, x0, t: int) -> np.ndarray:
    """Mean of the forward posterior q(x_{t-1} | x_t, x0)."""
    schedule._check_step(t)
    xt = _as_vector(x_t, "x_t")
    v0 = _as_vector(x0, "x0")
    ab_t = schedule.abar(t)
    ab_prev = schedule.abar(t - 1)
    beta_t = schedule.beta_at(t)
    c0 = math.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
    c1 = math.sqrt(schedule.alpha_at(t)) * (1.0 - ab_prev) / (1.0 - ab_t)
    return c0 * v0 + c1 * xt


def posterior_sample(schedule: NoiseSchedule, x_t, x0, t: int, rng: np.random.Generator) -> np.ndarray:
    """Draw from q(x_{t-1} | x_t, x0); at sigma_t = 0 (the t = 1 step) the
    posterior mean is returned deterministically and no noise is drawn."""
    mean = posterior_mean(schedule, x_t, x0, t)
    sigma = schedule.sigma_at(t)
    if sigma == 0.0:
        return mean
    return mean + sigma * rng.standard_normal(mean.shape[0])


@runtime_checkable
class DiffusionModel(Protocol):
    """Anything with a schedule and a deterministic mean predictor
    mu(x, t) of the previous state."""

    schedule: NoiseSchedule

    def mean(self, x: np.ndarray, t: int) -> np.ndarray: ...


@dataclass(frozen=True)
class GaussianDDIM:
    """Closed-form optimal model for data x0 ~ N(data_mean, data_scale^2 I);
    its mean predictor is exactly Bayes-optimal, which makes it a ground
    truth oracle for the translation algorithm."""

    data_mean: np.ndarray
    data_scale: float
    schedule: NoiseSchedule

    def __post_init__(self):
        m = np.array(self.data_mean, dtype=np.float64)
        if m.ndim != 1 or m.size == 0:
            raise ValueError("data_mean must be a non-empty 1-D vector")
        if not np.isfinite(m).all():
            raise ValueError("data_mean must be finite")
        if not (math.isfinite(self.data_scale) and self.data_scale >= 0):
            raise ValueError("data_scale must be finite and >= 0")
        m.flags.writeable = False
        object.__setattr__(self, "data_mean", m)
        object.__setattr__(self, "data_scale", float(self.data_scale))

    @property
    def dimension(self) -> int:
        return self.data_mean.shape[0]

    def mean(self, x: np.ndarray, t: int) -> np.ndarray:
        return gaussian_mean_predictor(self, x, t)


def gaussian_x0_estimate(model: GaussianDDIM, x_t, t: int) -> np.ndarray:
    """Conjugate posterior mean E[x0 | x_t] for Gaussian data.

    With data_scale = 0 this is the point mass mean, exactly constant in
    x_t; as data_scale grows it approaches x_t / sqrt(abar_t).
    """
    xt = _as_vector(x_t, "x_t")
    ab = model.schedule.abar(t)
    tau2 = model.data_scale * model.data_scale
    return (tau2 * math.sqrt(ab) * xt + (1.0 - ab) * model.data_mean) / (ab * tau2 + (1.0 - ab))


def gaussian_mean_predictor(model: GaussianDDIM, x_t, t: int) -> np.ndarray:
    """Optimal mean prediction mu(x_t, t): the posterior mean evaluated at
    the conjugate x0 estimate."""
    return posterior_mean(model.schedule, x_t, gaussian_x0_estimate(model, x_t, t), t)


@dataclass(frozen=True)
class LatentCode:
    """Terminal noisy state plus one residual vector per encoding step,
    ordered t = T_es .. 1; (T_es + 1) * d scalars in total."""

    v_terminal: np.ndarray
    epsilons: tuple[np.ndarray, ...]
    encoding_steps: int

    def __post_init__(self):
        v = np.array(self.v_terminal, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("v_terminal must be a non-empty 1-D vector")
        eps = tuple(np.array(e, dtype=np.float64) for e in self.epsilons)
        if len(eps) != self.encoding_steps:
            raise ValueError(f"expected {self.encoding_steps} residual vectors, got {len(eps)}")
        for e in eps:
            if e.shape != v.shape:
                raise ValueError("all residual vectors must match the terminal state's shape")
            e.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "v_terminal", v)
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "encoding_steps", int(self.encoding_steps))

    @property
    def dimension(self) -> int:
        return self.v_terminal.shape[0]

    @property
    def scalar_count(self) -> int:
        return (self.encoding_steps + 1) * self.dimension


def encode(model_v: DiffusionModel, x0, encoding_steps: int, rng: np.random.Generator) -> LatentCode:
    """Run the source model's exact posterior chain on x0 and record the
    normalized step residuals.

    Steps with sigma_t > 0 store (v_{t-1} - mu_V(v_t, t)) / sigma_t; the
    zero-variance final step stores the raw residual so that decoding with
    the same model reproduces the chain endpoint exactly.
    """
    schedule = model_v.schedule
    if not 1 <= encoding_steps <= schedule.T:
        raise ValueError(f"encoding_steps must lie in [1, {schedule.T}], got {encoding_steps}")
    v = _as_vector(x0, "x0")
    v_t = forward_sample(schedule, v, encoding_steps, rng)
    terminal = v_t
    residuals = []
    for t in range(encoding_steps, 0, -1):
        v_prev = posterior_sample(schedule, v_t, v, t, rng)
        mu = model_v.mean(v_t, t)
        sigma = schedule.sigma_at(t)
        residual = v_prev - mu
        residuals.append(residual / sigma if sigma > 0.0 else residual)
        v_t = v_prev
    return LatentCode(v_terminal=terminal, epsilons=tuple(residuals), encoding_steps=encoding_steps)


def decode(model_t: DiffusionModel, code: LatentCode) -> np.ndarray:
    """Replay a latent code through the target model, deterministically."""
    schedule = model_t.schedule
    if schedule.T < code.encoding_steps:
        raise ValueError(
            f"target schedule has {schedule.T} steps but the code was encoded over {code.encoding_steps}"
        )
    x = code.v_terminal
    probe = model_t.mean(x, code.encoding_steps)
    if probe.shape != x.shape:
        raise ValueError("target model output dimension does not match the latent code")
    for i, t in enumerate(range(code.encoding_steps, 0, -1)):
        mu = model_t.mean(x, t)
        sigma = schedule.sigma_at(t)
        x = mu + sigma * code.epsilons[i] if sigma > 0.0 else mu + code.epsilons[i]
    return x


def translate(
    model_v: DiffusionModel,
    model_t: DiffusionModel,
    x0,
    encoding_steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Encode under the source model, decode under the target model."""
    return decode(model_t, encode(model_v, x0, encoding_steps, rng))


def psnr(a, b, peak: float) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if not peak > 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(a, b, dynamic_range: float) -> float:
    """Mean structural similarity over 8x8 sliding windows.

    Constants follow the conventional C1 = (0.01 R)^2, C2 = (0.03 R)^2
    with R the dynamic range; inputs must be 2-D with min side >= 8.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape != y.shape:
        raise ValueError("ssim expects two equal-shape 2-D grids")
    if min(x.shape) < 8:
        raise ValueError(f"ssim requires min side >= 8, got shape {x.shape}")
    if not dynamic_range > 0:
        raise ValueError("dynamic_range must be positive")
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    xw = sliding_window_view(x, (8, 8))
    yw = sliding_window_view(y, (8, 8))
    mu_x = xw.mean(axis=(-2, -1))
    mu_y = yw.mean(axis=(-2, -1))
    var_x = ((xw - mu_x[..., None, None]) ** 2).mean(axis=(-2, -1))
    var_y = ((yw - mu_y[..., None, None]) ** 2).mean(axis=(-2, -1))
    cov = ((xw - mu_x[..., None, None]) * (yw - mu_y[..., None, None])).mean(axis=(-2, -1))
    scores = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )
    return float(scores.mean())


def write_latent_code(path, code: LatentCode) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{code.encoding_steps},{code.dimension}\n")
        fh.write(",".join(repr(float(v)) for v in code.v_terminal) + "\n")
        for eps in code.epsilons:
            fh.write(",".join(repr(float(v)) for v in eps) + "\n")


def read_latent_code(path) -> LatentCode:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        t_es, d = (int(v) for v in fh.readline().rstrip("\n").split(","))
        vectors = [
            np.array([float(v) for v in line.rstrip("\n").split(",")])
            for line in fh
            if line.strip()
        ]
    if len(vectors) != t_es + 1 or any(vec.shape[0] != d for vec in vectors):
        raise ValueError(f"{path}: latent body does not match declared {t_es + 1} vectors of dim {d}")
    return LatentCode(v_terminal=vectors[0], epsilons=tuple(vectors[1:]), encoding_steps=t_es)
