"""Trajectory ingestion and ground-truth error injection.

Given a clean navigation-frame trajectory, this module synthesizes the two
localizer outputs: the reference localizer reports the true position plus
its own noise, and the other localizer reports the position displaced by
the composite error model evaluated at the configured true parameters,
plus its own noise.  The resulting difference observation then has the
model output as its mean and the sum of the two noise covariances as its
covariance, which is exactly what the estimator assumes.

Trajectory files are delimiter-separated text, one sample per line, with
columns ``t_s, east_m, north_m[, heading_rad]``.  Lines starting with
``#`` are ignored and every numeric field must carry a decimal point.
When the heading column is missing, headings are derived from the bearings
of successive position deltas; heading rates are always filled by central
differences over the heading series.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .error_models import CompositeModel, KinematicInput
from .estimator import DifferenceObservation
from .exceptions import DimensionMismatch, NonMonotoneTime, ParseError
from .frames import Heading, as_vec2, heading_rates, normalize_angle

DEFAULT_STEP_S = 1.0
DEFAULT_SPEED_MPS = 10.0
TURN_COUNT = 5


@dataclass(frozen=True)
class TrajectorySample:
    """One time-stamped true pose of the agent."""

    t: float
    position: np.ndarray
    heading: Heading

    def __post_init__(self):
        if not np.isfinite(self.t):
            raise ValueError(f"timestamp must be finite, got {self.t}")
        object.__setattr__(self, "position", as_vec2(self.position, "position"))


@dataclass(frozen=True)
class InjectionConfig:
    """True error parameters and per-localizer noise levels.

    The sigmas are per-axis standard deviations; the injected difference
    noise then has covariance ``(sigma_ref^2 + sigma_other^2) * I``.  Use
    :meth:`with_total_sigma` to split a single total disturbance evenly
    across the two localizers.
    """

    true_params: np.ndarray
    noise_sigma_ref: float
    noise_sigma_other: float
    rng_seed: int

    def __post_init__(self):
        object.__setattr__(self, "true_params",
                           np.asarray(self.true_params, dtype=float))
        if self.noise_sigma_ref < 0.0 or self.noise_sigma_other < 0.0:
            raise ValueError("noise sigmas must be >= 0")

    @classmethod
    def with_total_sigma(cls, true_params, total_sigma: float,
                         rng_seed: int) -> "InjectionConfig":
        """Equal-variance split of one total noise level across both localizers."""
        if total_sigma < 0.0:
            raise ValueError("total_sigma must be >= 0")
        per = total_sigma / np.sqrt(2.0)
        return cls(true_params=true_params, noise_sigma_ref=per,
                   noise_sigma_other=per, rng_seed=rng_seed)

    def observation_covariance(self) -> np.ndarray:
        return (self.noise_sigma_ref ** 2 + self.noise_sigma_other ** 2) * np.eye(2)


class InjectedStep(NamedTuple):
    """One simulated step: the two localizer outputs, the kinematic input
    built from the reference output, and the difference observation."""

    p_ref: np.ndarray
    p_other: np.ndarray
    u: KinematicInput
    obs: DifferenceObservation


def _parse_float(token: str, line_no: int, column: str) -> float:
    token = token.strip()
    if "." not in token:
        raise ParseError(f"field '{column}' value {token!r} lacks a decimal point",
                         line_no)
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"field '{column}' value {token!r} is not a number",
                         line_no) from None
    if not np.isfinite(value):
        raise ParseError(f"field '{column}' value {token!r} is not finite", line_no)
    return value


def load_trajectory(source) -> list[TrajectorySample]:
    """Read trajectory samples from a file.

    ``source`` may be a path or an open text stream.  Raises
    :class:`~locdecomp.exceptions.ParseError` with the offending line number
    and :class:`~locdecomp.exceptions.NonMonotoneTime` on repeated or
    decreasing timestamps.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as handle:
            return load_trajectory(handle)
    if not isinstance(source, io.TextIOBase) and not hasattr(source, "__iter__"):
        raise TypeError(f"cannot read a trajectory from {type(source)!r}")

    times: list[float] = []
    positions: list[np.ndarray] = []
    angles: list[float] = []
    has_heading: bool | None = None
    for line_no, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split(",")
        if len(tokens) not in (3, 4):
            raise ParseError(f"expected 3 or 4 comma-separated fields, got "
                             f"{len(tokens)}", line_no)
        row_has_heading = len(tokens) == 4
        if has_heading is None:
            has_heading = row_has_heading
        elif has_heading != row_has_heading:
            raise ParseError("inconsistent column count across lines", line_no)
        t = _parse_float(tokens[0], line_no, "t_s")
        east = _parse_float(tokens[1], line_no, "east_m")
        north = _parse_float(tokens[2], line_no, "north_m")
        if times and t <= times[-1]:
            raise NonMonotoneTime(
                f"line {line_no}: timestamp {t} does not increase past {times[-1]}")
        times.append(t)
        positions.append(np.array([east, north]))
        if row_has_heading:
            angles.append(_parse_float(tokens[3], line_no, "heading_rad"))

    if not times:
        raise ParseError("no data lines found")
    if not has_heading:
        if len(times) < 2:
            raise ParseError("cannot derive headings from a single sample; "
                             "add a heading_rad column")
        deltas = np.diff(np.vstack(positions), axis=0)
        angles = [float(np.arctan2(dn, de)) for de, dn in deltas]
        angles.append(angles[-1])

    t_arr = np.array(times)
    rates = heading_rates(t_arr, np.array(angles))
    return [TrajectorySample(t=times[k], position=positions[k],
                             heading=Heading(angle=angles[k], rate=rates[k]))
            for k in range(len(times))]


def synthesize_trajectory(kind: str, n_samples: int, step: float = DEFAULT_STEP_S,
                          speed: float = DEFAULT_SPEED_MPS,
                          initial_heading: float = 0.0,
                          turn_samples: int | None = None,
                          start=(0.0, 0.0)) -> list[TrajectorySample]:
    """Generate a statistically analogous driving segment.

    ``kind="straight"`` holds the heading constant.  ``kind="corner"``
    produces a piecewise-straight path whose heading sweeps through five
    90-degree turns with alternating direction, each ramped linearly over
    ``turn_samples`` samples (default: a tenth of the trajectory) and
    separated by straight legs, i.e. exactly five heading-change events.
    """
    if kind not in ("straight", "corner"):
        raise ValueError(f"kind must be 'straight' or 'corner', got {kind!r}")
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    if step <= 0.0:
        raise ValueError(f"step must be positive, got {step}")
    if kind == "corner" and n_samples < 4 * TURN_COUNT:
        raise ValueError(f"a corner segment needs at least {4 * TURN_COUNT} "
                         f"samples to fit {TURN_COUNT} separated turns, got "
                         f"{n_samples}")

    if kind == "straight":
        angles = np.full(n_samples, float(initial_heading))
    else:
        turn = max(2, n_samples // 10) if turn_samples is None else int(turn_samples)
        turn = max(1, min(turn, (n_samples - TURN_COUNT - 1) // TURN_COUNT))
        n_legs = TURN_COUNT + 1
        leg_total = n_samples - TURN_COUNT * turn
        base, extra = divmod(leg_total, n_legs)
        legs = [base] * n_legs
        # inner legs first: adjacent turns would merge into one heading event
        for i in [1, 2, 3, 4, 0, 5][:extra]:
            legs[i] += 1
        angles_list: list[float] = []
        current = float(initial_heading)
        direction = 1.0
        for i in range(TURN_COUNT):
            angles_list.extend([current] * legs[i])
            increment = direction * (np.pi / 2.0) / turn
            for _ in range(turn):
                current += increment
                angles_list.append(current)
            direction = -direction
        angles_list.extend([current] * legs[TURN_COUNT])
        angles = np.array(angles_list[:n_samples])

    t = np.arange(n_samples) * step
    rates = heading_rates(t, angles)
    positions = np.empty((n_samples, 2))
    positions[0] = as_vec2(start, "start")
    steps = speed * step * np.column_stack([np.cos(angles[1:]), np.sin(angles[1:])])
    positions[1:] = positions[0] + np.cumsum(steps, axis=0)
    return [TrajectorySample(t=float(t[k]), position=positions[k],
                             heading=Heading(angle=normalize_angle(angles[k]),
                                             rate=rates[k]))
            for k in range(n_samples)]


def to_kinematic_inputs(trajectory) -> list[KinematicInput]:
    """Kinematic inputs with the true positions standing in for the reference
    localizer; used for observability analysis of a clean trajectory."""
    return [KinematicInput(t=s.t, heading=s.heading, ref_position=s.position)
            for s in trajectory]


def inject_errors(trajectory, cfg: InjectionConfig,
                  model: CompositeModel) -> list[InjectedStep]:
    """Simulate the two localizer outputs along a trajectory.

    The reference localizer reports the true position plus its noise; the
    kinematic input is built from that (measured) reference position; the
    other localizer reports the true position displaced by the model output
    at the true parameters, plus its own noise.  Identical seeds reproduce
    bit-identical outputs.
    """
    if cfg.true_params.shape != (model.state_dim,):
        raise DimensionMismatch(
            f"true_params has shape {cfg.true_params.shape}, model expects "
            f"({model.state_dim},)")
    trajectory = list(trajectory)
    rng = np.random.default_rng(cfg.rng_seed)
    n = len(trajectory)
    noise_ref = rng.normal(0.0, cfg.noise_sigma_ref, (n, 2))
    noise_other = rng.normal(0.0, cfg.noise_sigma_other, (n, 2))
    r = cfg.observation_covariance()

    steps: list[InjectedStep] = []
    for k, sample in enumerate(trajectory):
        p_ref = sample.position + noise_ref[k]
        u = KinematicInput(t=sample.t, heading=sample.heading, ref_position=p_ref)
        displacement = model.evaluate(cfg.true_params, u)
        p_other = sample.position - displacement + noise_other[k]
        obs = DifferenceObservation(d=p_ref - p_other, R=r.copy())
        steps.append(InjectedStep(p_ref=p_ref, p_other=p_other, u=u, obs=obs))
    return steps
