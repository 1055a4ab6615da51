"""Unscented Kalman Filter over static error-model parameters.

The stacked component parameters form the filter state.  They are treated
as constants, so the process model is the identity and the prediction step
only inflates the covariance by the process noise.  The measurement
function is the composite difference model evaluated at the current
kinematic input, and the measurement is the observed localizer difference
with its composed covariance.

Sigma points follow the scaled construction of Wan and van der Merwe
(parameters ``alpha``, ``beta``, ``kappa``).  The covariance square root
tries a Cholesky factorization first; on failure it retries once with a
diagonal jitter of ``1e-9 * trace(P) / n`` and then falls back to a
symmetric eigendecomposition root if the matrix is semi-definite within
tolerance (a covariance that has validly collapsed to singular, e.g. all
zero, must still yield sigma points).  A genuinely indefinite covariance
raises :class:`~locdecomp.exceptions.CholeskyFailure`, which signals
filter divergence rather than a recoverable condition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .error_models import CompositeModel, KinematicInput
from .exceptions import CholeskyFailure, DimensionMismatch, FilterStepError, NotPSD
from .frames import as_vec2

SYM_TOL = 1e-9
PSD_TOL = 1e-9


def _check_covariance(m, name: str, dim: int | None = None) -> np.ndarray:
    """Validate symmetry and positive semi-definiteness within tolerance."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if dim is not None and m.shape != (dim, dim):
        raise DimensionMismatch(f"{name} must have shape ({dim}, {dim}), got {m.shape}")
    scale = max(np.abs(m).max(), 1.0)
    if np.abs(m - m.T).max() > SYM_TOL * scale:
        raise NotPSD(f"{name} is not symmetric within tolerance")
    eigvals = np.linalg.eigvalsh((m + m.T) / 2.0)
    if eigvals.min() < -PSD_TOL * max(np.trace(m), 1.0):
        raise NotPSD(f"{name} has negative eigenvalue {eigvals.min()}")
    return m


@dataclass
class GaussianBelief:
    """Mean and covariance of a Gaussian state estimate."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if self.mean.ndim != 1:
            raise ValueError(f"mean must be a vector, got shape {self.mean.shape}")
        if not np.all(np.isfinite(self.mean)):
            raise ValueError("mean must be finite")
        self.covariance = _check_covariance(self.covariance, "covariance", self.mean.size)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class UkfConfig:
    """Sigma-point spread parameters, process noise and initial belief.

    ``beta = 2`` is optimal for Gaussian priors in the scaled construction;
    a small ``alpha`` keeps the points close to the mean, which suits the
    mildly nonlinear rotation measurements handled here.  ``mahalanobis_gate``
    optionally skips updates whose normalized innovation exceeds the gate
    (off by default; the simulated pipelines have no outliers).
    """

    process_noise: np.ndarray
    initial_belief: GaussianBelief
    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0
    mahalanobis_gate: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        q = _check_covariance(self.process_noise, "process_noise",
                              self.initial_belief.dim)
        object.__setattr__(self, "process_noise", q)


@dataclass(frozen=True)
class DifferenceObservation:
    """Measured localizer difference with its composed covariance."""

    d: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", as_vec2(self.d, "d"))
        object.__setattr__(self, "R", _check_covariance(self.R, "R", 2))


def compose_measurement_covariance(cov_ref, cov_other) -> np.ndarray:
    """Total difference covariance: the sum of the two localizer covariances.

    The difference of two independent Gaussian position estimates is
    Gaussian with the covariances added; each input must be a valid 2x2
    covariance on its own.
    """
    a = _check_covariance(cov_ref, "cov_ref", 2)
    b = _check_covariance(cov_other, "cov_other", 2)
    return a + b


@dataclass(frozen=True)
class SigmaPoints:
    """Weighted sigma-point set; ``points`` has shape (2n+1, n)."""

    points: np.ndarray
    mean_weights: np.ndarray
    cov_weights: np.ndarray


def _covariance_sqrt(p: np.ndarray) -> np.ndarray:
    """Matrix S with S @ S.T = p, tolerant of semi-definite input."""
    try:
        return np.linalg.cholesky(p)
    except np.linalg.LinAlgError:
        pass
    n = p.shape[0]
    jitter = PSD_TOL * np.trace(p) / n
    if jitter > 0.0:
        try:
            return np.linalg.cholesky(p + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            pass
    eigvals, eigvecs = np.linalg.eigh((p + p.T) / 2.0)
    if eigvals.min() < -PSD_TOL * max(np.trace(p), 1.0):
        raise CholeskyFailure(
            f"covariance is indefinite (min eigenvalue {eigvals.min()}); "
            "the filter has diverged")
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def generate_sigma_points(belief: GaussianBelief, cfg: UkfConfig) -> SigmaPoints:
    """Scaled sigma points reproducing the belief's mean and covariance.

    Returns 2n+1 points; the weighted point mean equals ``belief.mean``
    exactly and the weighted point covariance equals ``belief.covariance``
    up to the square-root accuracy.
    """
    n = belief.dim
    lam = cfg.alpha ** 2 * (n + cfg.kappa) - n
    scale = n + lam
    if scale <= 0.0:
        raise ValueError(f"sigma-point scale n + lambda = {scale} must be positive")
    root = np.sqrt(scale) * _covariance_sqrt(belief.covariance)
    points = np.empty((2 * n + 1, n))
    points[0] = belief.mean
    points[1:n + 1] = belief.mean + root.T
    points[n + 1:] = belief.mean - root.T
    wm = np.full(2 * n + 1, 1.0 / (2.0 * scale))
    wc = wm.copy()
    wm[0] = lam / scale
    wc[0] = lam / scale + (1.0 - cfg.alpha ** 2 + cfg.beta)
    return SigmaPoints(points=points, mean_weights=wm, cov_weights=wc)


def predict(belief: GaussianBelief, cfg: UkfConfig) -> GaussianBelief:
    """Prediction step for constant parameters: inflate covariance by Q."""
    return GaussianBelief(belief.mean.copy(),
                          belief.covariance + cfg.process_noise)


def update(belief: GaussianBelief, obs: DifferenceObservation, u: KinematicInput,
           model: CompositeModel, cfg: UkfConfig) -> GaussianBelief:
    """Measurement update against the composite difference model.

    Propagates sigma points through the model at the current kinematic
    input, forms the innovation against the observed difference and applies
    the standard unscented gain.
    """
    if belief.dim != model.state_dim:
        raise DimensionMismatch(
            f"belief dimension {belief.dim} does not match model state "
            f"dimension {model.state_dim}")
    sp = generate_sigma_points(belief, cfg)
    outputs = np.array([model.evaluate(point, u) for point in sp.points])
    predicted = sp.mean_weights @ outputs
    dz = outputs - predicted
    dx = sp.points - belief.mean
    innov_cov = (sp.cov_weights[:, None] * dz).T @ dz + obs.R
    cross_cov = (sp.cov_weights[:, None] * dx).T @ dz
    innovation = obs.d - predicted
    if cfg.mahalanobis_gate is not None:
        m2 = innovation @ np.linalg.solve(innov_cov, innovation)
        if m2 > cfg.mahalanobis_gate ** 2:
            return GaussianBelief(belief.mean.copy(), belief.covariance.copy())
    gain = np.linalg.solve(innov_cov, cross_cov.T).T
    mean = belief.mean + gain @ innovation
    cov = belief.covariance - gain @ innov_cov @ gain.T
    cov = (cov + cov.T) / 2.0
    return GaussianBelief(mean, cov)


def run_filter(model: CompositeModel, cfg: UkfConfig, stream) -> list[GaussianBelief]:
    """Run predict/update over a time-ordered stream of (observation, input).

    Returns the initial belief followed by one posterior per step.  Errors
    raised inside a step are re-raised as
    :class:`~locdecomp.exceptions.FilterStepError` carrying the step index.
    """
    beliefs = [cfg.initial_belief]
    for step, (obs, u) in enumerate(stream):
        try:
            prior = predict(beliefs[-1], cfg)
            beliefs.append(update(prior, obs, u, model, cfg))
        except Exception as exc:
            raise FilterStepError(step, str(exc)) from exc
    return beliefs
