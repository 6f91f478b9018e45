"""The outer tuning loop: Sobol' warm-up, then surrogate-guided proposals."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import surrogate
from ..harness import OK, AdapterLaunchError, TrialOptions, TrialResult, run_trial
from ..search_space import Configuration, SearchSpace, check_space, sobol_sample
from ..tracking import RunRecord, append_run
from .acquisition import MC_SAMPLES, config_features
from .acquisition import propose as _propose
from .pareto import MINIMIZE, ObjectiveSpec, ParetoFront, infer_reference_point, normalize, pareto_update

log = logging.getLogger(__name__)

EFFICIENCY = "efficiency"
PERFORMANCE = ("performance", "perf")


class OptimizationAborted(RuntimeError):
    """The adapter could not be launched; ``observations`` holds what ran."""

    def __init__(self, message, observations, front):
        super().__init__(message)
        self.observations = observations
        self.front = front


@dataclass
class Observation:
    trial_id: int
    config: Configuration
    objectives: tuple
    status: str
    energy: object = None
    wall_seconds: float = 0.0
    phase: str = "sobol"
    metadata: dict = field(default_factory=dict)


@dataclass
class RunOptions:
    seed: int = 0
    trial: TrialOptions = field(default_factory=TrialOptions)
    log_path: str | None = None
    mc_samples: int = MC_SAMPLES
    noisy: bool = True

    @property
    def skip_train(self) -> bool:
        return self.trial.skip_train


@dataclass
class OptimizerState:
    space: SearchSpace
    objectives: list
    budget: int
    sobol_count: int
    rng_seed: int = 0
    observations: list = field(default_factory=list)
    front: ParetoFront | None = None
    iteration: int = 0

    def __post_init__(self):
        if not 0 <= self.sobol_count <= self.budget:
            raise ValueError("need 0 <= N0 <= T")
        if self.front is None:
            self.front = ParetoFront([o.direction for o in self.objectives])

    @property
    def ok_observations(self) -> list:
        return [o for o in self.observations if o.status == OK]


def objective_value(result: TrialResult, name: str) -> float:
    """Pull a named objective out of a trial result.

    ``performance`` (alias ``perf``) and ``efficiency`` are built in; any other name is looked
    up in the adapter's metadata, then in the energy report.
    """
    if name in PERFORMANCE:
        return result.performance
    if name == EFFICIENCY:
        return result.efficiency
    if name == "wall_seconds":
        return result.wall_seconds
    if name in result.metadata:
        return float(result.metadata[name])
    if result.energy is not None and hasattr(result.energy, name):
        return float(getattr(result.energy, name))
    raise KeyError(f"trial result has no objective {name!r}")


def penalty_values(objectives, observations) -> tuple:
    """Finite stand-in objectives for a failed trial.

    Efficiency is zero; any other objective takes its threshold, else the
    worst value observed so far, else 0.
    """
    ok = [o for o in observations if o.status == OK]
    out = []
    for i, obj in enumerate(objectives):
        if obj.name == EFFICIENCY:
            out.append(0.0)
        elif obj.threshold is not None:
            out.append(float(obj.threshold))
        elif ok:
            vals = [o.objectives[i] for o in ok]
            out.append(float(max(vals) if obj.direction == MINIMIZE else min(vals)))
        else:
            out.append(0.0)
    return tuple(out)


def fit_surrogates(state: OptimizerState, seed: int):
    """GPs on normalised ok observations plus the matching reference point."""
    ok = state.ok_observations
    values = np.array([o.objectives for o in ok], dtype=float)
    normalized, transform = normalize(values, state.objectives)
    ref = infer_reference_point(normalized, state.objectives, transform)
    X = np.array([config_features(o.config, state.space) for o in ok])
    models = [surrogate.fit(X, normalized[:, i], seed=seed + i) for i in range(normalized.shape[1])]
    return models, ref, transform


def propose(state: OptimizerState, surrogates, ref, mc_samples: int = MC_SAMPLES,
            noisy: bool = True) -> Configuration:
    front_features = np.array(
        [config_features(m.config, state.space) for m in state.front.members]
    )
    config, _ = _propose(state.space, surrogates, front_features, ref.values,
                         n0=state.sobol_count, t=state.iteration, seed=state.rng_seed,
                         mc_samples=mc_samples, noisy=noisy)
    return config


def _record(obs: Observation, objectives, result: TrialResult) -> RunRecord:
    metadata = dict(obs.metadata)
    metadata.update(performance=result.performance, efficiency=result.efficiency,
                    samples=result.samples, epochs_run=result.epochs_run)
    if result.message:
        metadata["message"] = result.message
    return RunRecord(
        trial_id=obs.trial_id,
        config=obs.config,
        objectives={o.name: v for o, v in zip(objectives, obs.objectives)},
        status=obs.status,
        energy=result.energy.to_dict() if result.energy is not None else {},
        wall_seconds=obs.wall_seconds,
        phase=obs.phase,
        metadata=metadata,
    )


def run_optimization(space: SearchSpace, objectives, adapter, T: int, N0: int,
                     options: RunOptions | None = None, trial_runner=None):
    """Tune ``space`` for ``T`` trials, the first ``N0`` from a Sobol' design.

    ``adapter`` is the adapter command line. ``trial_runner`` replaces
    :func:`run_trial` (same keyword signature) and exists for in-process
    testing. Returns ``(front, observations)``.
    """
    options = options or RunOptions()
    objectives = [o if isinstance(o, ObjectiveSpec) else ObjectiveSpec.parse(o) for o in objectives]
    check_space(space)
    state = OptimizerState(space, objectives, T, N0, options.seed)
    runner = trial_runner or run_trial
    design = sobol_sample(space, T, options.seed) if T else []

    for t in range(1, T + 1):
        state.iteration = t
        phase = "sobol"
        if t <= N0 or not state.ok_observations:
            if t > N0:
                log.warning("trial %d: no successful observations yet, sampling Sobol' point", t)
            config = design[t - 1]
        else:
            phase = "mobo"
            models, ref, _ = fit_surrogates(state, seed=options.seed * 100003 + t * 11)
            config = propose(state, models, ref, options.mc_samples, options.noisy)

        penalty = penalty_values(objectives, state.observations)
        perf_index = next((i for i, o in enumerate(objectives) if o.name in PERFORMANCE), None)
        try:
            result = runner(adapter, config, options.trial, trial_id=t,
                            penalty_performance=penalty[perf_index] if perf_index is not None else 0.0)
        except AdapterLaunchError as exc:
            raise OptimizationAborted(str(exc), state.observations, state.front) from exc

        status = result.status
        values = penalty
        if status == OK:
            try:
                values = tuple(objective_value(result, o.name) for o in objectives)
                if not all(math.isfinite(v) for v in values):
                    raise ValueError("non-finite objective value")
            except (KeyError, ValueError, TypeError) as exc:
                log.warning("trial %d: %s", t, exc)
                status, values = "failed", penalty
                result.message = str(exc)
        obs = Observation(t, config, values, status, result.energy, result.wall_seconds, phase,
                          dict(result.metadata))
        state.observations.append(obs)
        if status == OK:
            state.front = pareto_update(state.front, obs)
        if options.log_path:
            append_run(options.log_path, _record(obs, objectives, result))
        log.info("trial %d/%d [%s] %s -> %s %s", t, T, phase, config, status, values)

    return state.front, state.observations
