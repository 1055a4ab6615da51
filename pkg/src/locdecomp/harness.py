"""Experiment orchestration: Monte Carlo batches and result tables.

An experiment couples a trajectory source, a composed error model, an
injection configuration and a filter configuration, runs a number of
independent simulate-then-filter pipelines and aggregates the per-step,
per-parameter mean squared estimation error across runs.

Per-run seeds are derived by mixing the master seed with the run index, so
runs are independent of execution order and may run concurrently.  The
same configuration (including the seed) always produces byte-identical
result files.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import error_models
from .error_models import CompositeModel
from .estimator import GaussianBelief, UkfConfig, run_filter
from .exceptions import ConfigError, ExperimentRunError
from .simulation import (InjectionConfig, TrajectorySample, inject_errors,
                         load_trajectory, synthesize_trajectory)

DEFAULT_CONVERGENCE_THRESHOLD_M2 = 0.1
FLOAT_FORMAT = "%.9g"


@dataclass(frozen=True)
class SyntheticTrajectory:
    """Synthetic segment settings (see :func:`~locdecomp.simulation.synthesize_trajectory`)."""

    kind: str
    n_samples: int
    step: float = 1.0
    speed: float = 10.0
    initial_heading: float = 0.0
    turn_samples: int | None = None


@dataclass(frozen=True)
class FileTrajectory:
    """Trajectory loaded from a delimiter-separated text file."""

    path: str


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one Monte Carlo experiment."""

    trajectory: SyntheticTrajectory | FileTrajectory
    model: CompositeModel
    injection: InjectionConfig
    ukf: UkfConfig
    n_runs: int
    workers: int = 1
    convergence_threshold: float = DEFAULT_CONVERGENCE_THRESHOLD_M2
    output: str | None = None

    def __post_init__(self):
        if self.n_runs < 1:
            raise ConfigError(f"n_runs must be >= 1, got {self.n_runs}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.injection.true_params.shape != (self.model.state_dim,):
            raise ConfigError(
                f"true_params dimension {self.injection.true_params.size} does not "
                f"match model state dimension {self.model.state_dim}")
        if self.ukf.initial_belief.dim != self.model.state_dim:
            raise ConfigError(
                f"filter dimension {self.ukf.initial_belief.dim} does not match "
                f"model state dimension {self.model.state_dim}")


@dataclass
class MseSeries:
    """Across-run estimation error statistics per step and state entry.

    ``mse[k, j]`` is the mean over runs of the squared error of parameter
    ``j`` after processing sample ``k``; ``mean`` and ``variance`` are the
    across-run moments of the estimates themselves, so
    ``mse = (mean - truth)^2 + variance`` holds exactly.  ``initial_mse``
    is the squared error of the filter's initial state estimate, the value
    every error trajectory starts from before the first observation.
    """

    mse: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    true_params: np.ndarray
    initial_mse: np.ndarray
    n_runs: int

    @property
    def n_steps(self) -> int:
        return self.mse.shape[0]

    @property
    def state_dim(self) -> int:
        return self.mse.shape[1]

    @property
    def final_mse(self) -> np.ndarray:
        return self.mse[-1]

    def converged(self, threshold: float = DEFAULT_CONVERGENCE_THRESHOLD_M2) -> np.ndarray:
        return self.final_mse < threshold


def derive_run_seed(master_seed: int, run_index: int) -> int:
    """Stable per-run seed; depends only on (master_seed, run_index)."""
    seq = np.random.SeedSequence([int(master_seed), int(run_index)])
    return int(seq.generate_state(1, np.uint64)[0])


def build_trajectory(source) -> list[TrajectorySample]:
    if isinstance(source, FileTrajectory):
        return load_trajectory(source.path)
    return synthesize_trajectory(kind=source.kind, n_samples=source.n_samples,
                                 step=source.step, speed=source.speed,
                                 initial_heading=source.initial_heading,
                                 turn_samples=source.turn_samples)


def _single_run(trajectory, model, injection: InjectionConfig, ukf: UkfConfig,
                run_index: int) -> np.ndarray:
    """One simulate-then-filter pipeline; returns per-step posterior means."""
    seed = derive_run_seed(injection.rng_seed, run_index)
    steps = inject_errors(trajectory, replace(injection, rng_seed=seed), model)
    beliefs = run_filter(model, ukf, [(s.obs, s.u) for s in steps])
    return np.array([b.mean for b in beliefs[1:]])


def run_experiment(cfg: ExperimentConfig) -> MseSeries:
    """Execute the Monte Carlo batch and aggregate the error statistics."""
    trajectory = build_trajectory(cfg.trajectory)

    def worker(run_index: int) -> np.ndarray:
        try:
            return _single_run(trajectory, cfg.model, cfg.injection, cfg.ukf,
                               run_index)
        except Exception as exc:
            raise ExperimentRunError(run_index, str(exc)) from exc

    if cfg.workers == 1:
        estimates = [worker(r) for r in range(cfg.n_runs)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            estimates = list(pool.map(worker, range(cfg.n_runs)))

    stacked = np.stack(estimates)           # (runs, steps, dim)
    truth = cfg.injection.true_params
    errors = stacked - truth
    return MseSeries(
        mse=np.mean(errors ** 2, axis=0),
        mean=np.mean(stacked, axis=0),
        variance=np.var(stacked, axis=0),
        true_params=truth.copy(),
        initial_mse=(cfg.ukf.initial_belief.mean - truth) ** 2,
        n_runs=cfg.n_runs,
    )


# ---------------------------------------------------------------------------
# result emission
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return FLOAT_FORMAT % value


def emit_results(series: MseSeries, out_dir,
                 convergence_threshold: float = DEFAULT_CONVERGENCE_THRESHOLD_M2) -> list[Path]:
    """Write the per-step MSE table and the run summary.

    Creates ``mse.csv`` (columns ``step, mse_x1.., mean_x1..``) and
    ``summary.txt`` under ``out_dir``.  Formatting is deterministic (9
    significant digits), so identical series produce identical bytes.
    """
    if series.n_steps == 0:
        raise ValueError("cannot emit an empty series")
    if not str(out_dir):
        raise OSError("output path is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    dim = series.state_dim
    table_path = out_dir / "mse.csv"
    header = (["step"] + [f"mse_x{j + 1}" for j in range(dim)]
              + [f"mean_x{j + 1}" for j in range(dim)])
    lines = [",".join(header)]
    for k in range(series.n_steps):
        row = [str(k)] + [_fmt(v) for v in series.mse[k]] \
            + [_fmt(v) for v in series.mean[k]]
        lines.append(",".join(row))
    table_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    flags = series.converged(convergence_threshold)
    summary_path = out_dir / "summary.txt"
    out = [
        f"runs = {series.n_runs}",
        f"steps = {series.n_steps}",
        f"state_dim = {dim}",
        f"convergence_threshold_m2 = {_fmt(convergence_threshold)}",
        "true_params = " + ",".join(_fmt(v) for v in series.true_params),
        "final_estimate = " + ",".join(_fmt(v) for v in series.mean[-1]),
        "initial_mse = " + ",".join(_fmt(v) for v in series.initial_mse),
        "final_mse = " + ",".join(_fmt(v) for v in series.final_mse),
        "mse_ratio = " + ",".join(
            _fmt(f / i) if i > 0.0 else "inf"
            for f, i in zip(series.final_mse, series.initial_mse)),
        "converged = " + ",".join(str(bool(f)).lower() for f in flags),
    ]
    summary_path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return [table_path, summary_path]


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

_COMPONENT_OPTION_KEYS = {
    "body_offset": set(),
    "map_translation": set(),
    "map_rotation": {"pivot", "reference"},
    "map_scale": {"pivot", "reference"},
    "map_shear": {"pivot", "reference", "axis"},
}


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}; "
                          f"allowed: {sorted(allowed)}")


def _build_component(entry: dict, centroid: np.ndarray):
    if not isinstance(entry, dict) or "type" not in entry:
        raise ConfigError(f"each model entry needs a 'type', got {entry!r}")
    kind = entry["type"]
    if kind not in _COMPONENT_OPTION_KEYS:
        raise ConfigError(f"unknown component type {kind!r}; available: "
                          f"{sorted(_COMPONENT_OPTION_KEYS)}")
    _reject_unknown(entry, _COMPONENT_OPTION_KEYS[kind] | {"type", "initial"},
                    f"component {kind!r}")
    initial = entry.get("initial")
    if kind == "body_offset":
        comp = error_models.body_offset()
    elif kind == "map_translation":
        comp = error_models.map_translation()
    else:
        pivot = entry.get("pivot", centroid)
        reference = entry.get("reference", "ref")
        if kind == "map_rotation":
            comp = error_models.map_rotation(pivot=pivot, reference=reference)
        elif kind == "map_scale":
            comp = error_models.map_scale(pivot=pivot, reference=reference)
        else:
            comp = error_models.map_shear(pivot=pivot,
                                          axis=entry.get("axis", "x"),
                                          reference=reference)
    if initial is None:
        guess = comp.neutral
    else:
        guess = np.asarray(initial, dtype=float)
        if guess.shape != (comp.param_dim,):
            raise ConfigError(f"component {kind!r} initial guess must have "
                              f"{comp.param_dim} entries, got {guess.shape}")
    return comp, guess


def _as_matrix(value, dim: int, where: str) -> np.ndarray:
    """Scalar -> scaled identity; vector -> diagonal; nested list -> matrix."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(dim)
    if arr.ndim == 1:
        if arr.size != dim:
            raise ConfigError(f"{where} needs {dim} diagonal entries, got {arr.size}")
        return np.diag(arr)
    if arr.shape == (dim, dim):
        return arr
    raise ConfigError(f"{where} must be a scalar, a {dim}-vector or a "
                      f"{dim}x{dim} matrix, got shape {arr.shape}")


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from decoded configuration data.

    Unknown keys anywhere are errors: silently ignoring a misspelled key
    would run a different experiment than the one asked for.
    """
    if not isinstance(raw, dict):
        raise ConfigError(f"configuration must be a mapping, got {type(raw)!r}")
    _reject_unknown(raw, {"trajectory", "model", "injection", "filter", "runs",
                          "workers", "convergence_threshold", "output"},
                    "configuration")
    for key in ("trajectory", "model", "injection", "filter"):
        if key not in raw:
            raise ConfigError(f"missing required section '{key}'")

    traj_raw = raw["trajectory"]
    if "file" in traj_raw:
        _reject_unknown(traj_raw, {"file"}, "trajectory")
        path = Path(traj_raw["file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        trajectory = FileTrajectory(path=str(path))
    else:
        _reject_unknown(traj_raw, {"kind", "n_samples", "step", "speed",
                                   "initial_heading", "turn_samples"}, "trajectory")
        try:
            trajectory = SyntheticTrajectory(
                kind=traj_raw["kind"], n_samples=int(traj_raw["n_samples"]),
                step=float(traj_raw.get("step", 1.0)),
                speed=float(traj_raw.get("speed", 10.0)),
                initial_heading=float(traj_raw.get("initial_heading", 0.0)),
                turn_samples=(int(traj_raw["turn_samples"])
                              if "turn_samples" in traj_raw else None))
        except KeyError as exc:
            raise ConfigError(f"trajectory section is missing {exc}") from None

    samples = build_trajectory(trajectory)
    centroid = np.mean([s.position for s in samples], axis=0)

    model_raw = raw["model"]
    if not isinstance(model_raw, list) or not model_raw:
        raise ConfigError("'model' must be a non-empty list of components")
    built = [_build_component(entry, centroid) for entry in model_raw]
    model = CompositeModel(components=tuple(comp for comp, _ in built))
    default_x0 = np.concatenate([guess for _, guess in built])

    inj_raw = raw["injection"]
    _reject_unknown(inj_raw, {"true_params", "noise_sigma_ref", "noise_sigma_other",
                              "noise_sigma_total", "seed"}, "injection")
    if "true_params" not in inj_raw or "seed" not in inj_raw:
        raise ConfigError("injection needs 'true_params' and 'seed'")
    true_params = np.asarray(inj_raw["true_params"], dtype=float)
    seed = int(inj_raw["seed"])
    if "noise_sigma_total" in inj_raw:
        if "noise_sigma_ref" in inj_raw or "noise_sigma_other" in inj_raw:
            raise ConfigError("give either noise_sigma_total or the per-localizer "
                              "sigmas, not both")
        injection = InjectionConfig.with_total_sigma(
            true_params, float(inj_raw["noise_sigma_total"]), seed)
    else:
        injection = InjectionConfig(
            true_params=true_params,
            noise_sigma_ref=float(inj_raw.get("noise_sigma_ref", 0.0)),
            noise_sigma_other=float(inj_raw.get("noise_sigma_other", 0.0)),
            rng_seed=seed)

    filt_raw = raw["filter"]
    _reject_unknown(filt_raw, {"alpha", "beta", "kappa", "process_noise",
                               "initial_mean", "initial_covariance",
                               "mahalanobis_gate"}, "filter")
    dim = model.state_dim
    if "process_noise" not in filt_raw or "initial_covariance" not in filt_raw:
        raise ConfigError("filter needs 'process_noise' and 'initial_covariance'")
    x0 = np.asarray(filt_raw.get("initial_mean", default_x0), dtype=float)
    if x0.shape != (dim,):
        raise ConfigError(f"initial_mean needs {dim} entries, got {x0.shape}")
    ukf = UkfConfig(
        process_noise=_as_matrix(filt_raw["process_noise"], dim, "process_noise"),
        initial_belief=GaussianBelief(
            mean=x0,
            covariance=_as_matrix(filt_raw["initial_covariance"], dim,
                                  "initial_covariance")),
        alpha=float(filt_raw.get("alpha", 0.1)),
        beta=float(filt_raw.get("beta", 2.0)),
        kappa=float(filt_raw.get("kappa", 0.0)),
        mahalanobis_gate=(float(filt_raw["mahalanobis_gate"])
                          if filt_raw.get("mahalanobis_gate") is not None else None))

    return ExperimentConfig(
        trajectory=trajectory, model=model, injection=injection, ukf=ukf,
        n_runs=int(raw.get("runs", 1)), workers=int(raw.get("workers", 1)),
        convergence_threshold=float(raw.get("convergence_threshold",
                                            DEFAULT_CONVERGENCE_THRESHOLD_M2)),
        output=raw.get("output"))


def load_config(path) -> ExperimentConfig:
    """Load and validate an experiment configuration from a JSON file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw, base_dir=path.parent)
