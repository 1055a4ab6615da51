"""Decomposability analysis of composed error models along a trajectory.

A composed model is decomposable on a stretch of driving when the stacked
difference outputs over the visited kinematic inputs determine the
parameter vector uniquely.  Because the parameters are constants, the
continuous observability criterion reduces to injectivity of the map from
parameters to the outputs collected over a window of inputs, which this
module tests numerically: the Jacobian of the stacked output map is formed
by central differences and its rank is read off the singular values over
sliding windows.

The windowed test certifies local full rank along the given trajectory
only; it does not prove global uniqueness over all conceivable inputs.
That gap is inherent to a numerical criterion and is left to the model
designer.

For the canonical two-component model (vehicle-fixed offset plus map
translation) the parameters are also recoverable in closed form from a
single difference observation and its time derivative, provided the agent
is turning; :func:`closed_form_decomposition` implements that solution and
serves as an independent cross-check of the filter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .error_models import CompositeModel
from .exceptions import ZeroTurnRate

DEFAULT_RANK_TOL = 1e-8
DEFAULT_MIN_TURN_RATE = 1e-3


@dataclass
class ObservabilityReport:
    """Windowed rank analysis of a model along one input trajectory.

    ``observable`` is true iff at least one window attains full rank.
    ``deficient_windows`` and ``degenerate_windows`` list (start, end)
    sample index pairs (end exclusive); a degenerate window is one whose
    model-relevant inputs are all identical although the model depends on
    the kinematic state, so no rank can be gained from it.
    """

    observable: bool
    state_dim: int
    window_length: int
    window_starts: list
    rank_profile: list
    condition_numbers: list
    deficient_windows: list
    degenerate_windows: list

    @property
    def full_rank_windows(self) -> list:
        return [s for s, r in zip(self.window_starts, self.rank_profile)
                if r == self.state_dim]


def stacked_output_map(model: CompositeModel, x, window) -> np.ndarray:
    """Concatenated model outputs over a window of kinematic inputs.

    The window must carry at least ceil(state_dim / 2) samples, otherwise
    the stacked output cannot determine the state even in the best case.
    """
    window = list(window)
    min_len = -(-model.state_dim // 2)
    if len(window) < min_len:
        raise ValueError(
            f"window of {len(window)} samples cannot determine {model.state_dim} "
            f"parameters; need at least {min_len}")
    return np.concatenate([model.evaluate(x, u) for u in window])


def _stacked_jacobian(model: CompositeModel, x0: np.ndarray, window,
                      step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the stacked output map w.r.t. the state."""
    cols = []
    for j in range(model.state_dim):
        h = step * max(1.0, abs(x0[j]))
        xp, xm = x0.copy(), x0.copy()
        xp[j] += h
        xm[j] -= h
        cols.append((stacked_output_map(model, xp, window)
                     - stacked_output_map(model, xm, window)) / (2.0 * h))
    return np.column_stack(cols)


def _window_is_degenerate(model: CompositeModel, window) -> bool:
    """True when every input field the model reads is constant over the window."""
    read = set()
    for comp in model.components:
        read |= comp.depends_on
    if not read:
        return False
    first = window[0]
    for u in window[1:]:
        if "heading" in read and (u.heading.angle != first.heading.angle
                                  or u.heading.rate != first.heading.rate):
            return False
        if "ref_position" in read and not np.array_equal(u.ref_position,
                                                         first.ref_position):
            return False
    return True


def numerical_rank_test(model: CompositeModel, x0, inputs,
                        window_length: int | None = None,
                        rank_tolerance: float = DEFAULT_RANK_TOL) -> ObservabilityReport:
    """Sliding-window rank test of the stacked sensitivity matrix.

    For every window the Jacobian of the stacked output map at ``x0`` is
    formed and its numerical rank computed as the number of singular values
    above ``rank_tolerance`` times the largest one.  The default window
    length is twice the state dimension.
    """
    inputs = list(inputs)
    x0 = np.asarray(x0, dtype=float)
    n = model.state_dim
    if x0.shape != (n,):
        raise ValueError(f"x0 must have shape ({n},), got {x0.shape}")
    wl = 2 * n if window_length is None else int(window_length)
    if wl < -(-n // 2):
        raise ValueError(f"window_length {wl} too short for {n} parameters")
    if len(inputs) < wl:
        raise ValueError(f"trajectory of {len(inputs)} samples is shorter than "
                         f"one window of {wl}")

    starts, ranks, conds, deficient, degenerate = [], [], [], [], []
    for start in range(len(inputs) - wl + 1):
        window = inputs[start:start + wl]
        jac = _stacked_jacobian(model, x0, window)
        sv = np.linalg.svd(jac, compute_uv=False)
        if sv[0] > 0.0:
            rank = int(np.sum(sv > rank_tolerance * sv[0]))
            cond = float(sv[0] / sv[-1]) if sv[-1] > 0.0 else float("inf")
        else:
            rank, cond = 0, float("inf")
        starts.append(start)
        ranks.append(rank)
        conds.append(cond)
        if rank < n:
            deficient.append((start, start + wl))
        if _window_is_degenerate(model, window):
            degenerate.append((start, start + wl))

    return ObservabilityReport(
        observable=any(r == n for r in ranks),
        state_dim=n,
        window_length=wl,
        window_starts=starts,
        rank_profile=ranks,
        condition_numbers=conds,
        deficient_windows=deficient,
        degenerate_windows=degenerate,
    )


def closed_form_decomposition(d, d_rate, heading_angle: float, heading_rate: float,
                              min_turn_rate: float = DEFAULT_MIN_TURN_RATE) -> np.ndarray:
    """Analytic split of one difference observation into body and map offsets.

    For the model consisting of a vehicle-fixed offset (rotated by heading)
    plus a state-independent map translation, the four parameters follow in
    closed form from the difference vector, its time derivative, the
    heading and the heading rate.  The heading must be changing: the
    formulas divide by the heading rate, and with a constant heading the
    two offsets are indistinguishable.

    Returns ``(body_x, body_y, map_east, map_north)``.
    """
    d = np.asarray(d, dtype=float)
    d_rate = np.asarray(d_rate, dtype=float)
    if abs(heading_rate) <= min_turn_rate:
        raise ZeroTurnRate(
            f"|heading rate| = {abs(heading_rate)} <= {min_turn_rate}; the agent "
            "must be turning to separate the body offset from the map offset")
    c, s = np.cos(heading_angle), np.sin(heading_angle)
    body_x = (-d_rate[0] * s + d_rate[1] * c) / heading_rate
    body_y = -(d_rate[0] * c + d_rate[1] * s) / heading_rate
    map_e = d[0] - d_rate[1] / heading_rate
    map_n = d[1] + d_rate[0] / heading_rate
    return np.array([body_x, body_y, map_e, map_n])


def difference_rates(t, d_series, smooth_window: int = 3) -> np.ndarray:
    """Time derivatives of a sampled difference series by central differences.

    The series is smoothed with a centered moving average (edge-replicated)
    before differentiating, since measured differences are noisy and the
    closed-form decomposition consumes their rates directly.
    ``smooth_window`` must be odd; 1 disables smoothing.
    """
    t = np.asarray(t, dtype=float)
    d = np.asarray(d_series, dtype=float)
    if d.ndim != 2 or d.shape[1] != 2 or d.shape[0] != t.size:
        raise ValueError(f"d_series must have shape (len(t), 2), got {d.shape}")
    if smooth_window < 1 or smooth_window % 2 == 0:
        raise ValueError(f"smooth_window must be odd and >= 1, got {smooth_window}")
    if t.size < 2:
        return np.zeros_like(d)
    if smooth_window > 1:
        half = smooth_window // 2
        padded = np.pad(d, ((half, half), (0, 0)), mode="edge")
        kernel = np.full(smooth_window, 1.0 / smooth_window)
        d = np.column_stack([np.convolve(padded[:, k], kernel, mode="valid")
                             for k in range(2)])
    return np.gradient(d, t, axis=0)
