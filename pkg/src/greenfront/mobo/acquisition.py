"""Monte-Carlo noisy expected hypervolume improvement and its maximisation."""

from __future__ import annotations

import numpy as np

from ..search_space import (
    SearchSpace,
    choice_combinations,
    _same_value,
    decode,
    encode,
    random_choice_assignment,
    snap,
    sobol_points,
)
from .pareto import _staircase

MC_SAMPLES = 128
RESTARTS = 16
MAX_COMBINATIONS = 64
INITIAL_STEP = 0.25
MIN_STEP = 1e-3
MAX_PATTERN_STEPS = 60


def _segments(front, ref):
    """Step function of a front: (left, right, height) arrays, x ascending."""
    stair = _staircase(front, ref)
    if len(stair) == 0:
        return np.array([ref[0]]), np.array([np.inf]), np.array([ref[1]])
    xs, ys = stair[:, 0], stair[:, 1]
    left = np.concatenate([[ref[0]], xs])
    right = np.concatenate([xs, [np.inf]])
    height = np.concatenate([ys, [ref[1]]])
    return left, right, height


class HypervolumeImprovement:
    """Batched MC estimator of E[HVI] against ``n_draws`` sampled fronts.

    ``front_draws`` has shape ``(S, k, 2)``; draw ``s`` of every candidate is
    scored against front draw ``s``. A deterministic front is a single array
    broadcast to every draw.
    """

    def __init__(self, front_draws, ref, n_draws: int = MC_SAMPLES, seed: int = 0):
        ref = np.asarray(list(ref), dtype=float)
        front_draws = np.asarray(front_draws, dtype=float)
        if front_draws.ndim == 2 or front_draws.size == 0:
            front_draws = np.broadcast_to(front_draws.reshape(-1, 2), (n_draws,) + front_draws.reshape(-1, 2).shape)
        if front_draws.shape[0] != n_draws:
            raise ValueError("front draws must match n_draws")
        segs = [_segments(f, ref) for f in front_draws]
        width = max(len(s[0]) for s in segs)
        self.left = np.full((n_draws, width), np.inf)
        self.right = np.full((n_draws, width), np.inf)
        self.height = np.zeros((n_draws, width))
        for i, (lft, rgt, hgt) in enumerate(segs):
            self.left[i, : len(lft)] = lft
            self.right[i, : len(rgt)] = rgt
            self.height[i, : len(hgt)] = hgt
        self.ref = ref
        self.z = np.random.default_rng(seed).standard_normal((n_draws, 2))

    def __call__(self, means, variances) -> np.ndarray:
        means = np.atleast_2d(np.asarray(means, dtype=float))
        sds = np.sqrt(np.maximum(np.atleast_2d(np.asarray(variances, dtype=float)), 0.0))
        y = means[:, None, :] + sds[:, None, :] * self.z[None, :, :]  # (C, S, 2)
        x_hi = np.minimum(y[..., 0:1], self.right[None])
        width = np.clip(x_hi - self.left[None], 0.0, None)
        lift = np.clip(y[..., 1:2] - self.height[None], 0.0, None)
        return np.sum(width * lift, axis=-1).mean(axis=1)


def ehvi(candidate_posteriors, front, ref, mc_samples: int = MC_SAMPLES, seed: int = 0,
         front_posteriors=None) -> float:
    """Expected hypervolume improvement of one candidate (q = 1).

    ``candidate_posteriors`` is ``[(mean, variance)]`` per objective in
    normalised (maximise) space. If ``front_posteriors`` is given as
    ``[(means, covariance)]`` per objective, the front members are redrawn
    from it on every MC draw instead of being taken as exact.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    front = np.asarray(front, dtype=float).reshape(-1, 2)
    if front_posteriors is not None and len(front):
        draws = sample_front(front_posteriors, mc_samples, np.random.default_rng([seed, 1]))
    else:
        draws = front
    est = HypervolumeImprovement(draws, ref, mc_samples, seed)
    means = [p[0] for p in candidate_posteriors]
    variances = [p[1] for p in candidate_posteriors]
    return float(est(means, variances)[0])


def sample_front(front_posteriors, n_draws, rng) -> np.ndarray:
    """Joint posterior draws of the front members, shape ``(n_draws, k, m)``."""
    cols = []
    for mean, cov in front_posteriors:
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 1:
            cov = np.diag(cov)
        cov = 0.5 * (cov + cov.T)
        w, v = np.linalg.eigh(cov)
        root = v * np.sqrt(np.clip(w, 0.0, None))
        z = rng.standard_normal((n_draws, len(mean)))
        cols.append(mean + z @ root.T)
    return np.stack(cols, axis=-1)


def features(unit_points, assignment, space: SearchSpace) -> np.ndarray:
    """Surrogate inputs: range coordinates followed by choice one-hot columns."""
    unit_points = np.atleast_2d(np.asarray(unit_points, dtype=float))
    onehot = []
    for spec in space.choice_specs:
        if len(spec.values) < 2:
            continue
        v = assignment[spec.name]
        onehot.extend(1.0 if _same_value(c, v) else 0.0 for c in spec.values)
    block = np.broadcast_to(np.asarray(onehot, dtype=float), (unit_points.shape[0], len(onehot)))
    return np.hstack([unit_points, block])


def config_features(config, space: SearchSpace) -> np.ndarray:
    return features(encode(config, space)[None, :], config, space)[0]


def _candidate_combinations(space, rng):
    combos = choice_combinations(space) if _n_combos(space) <= MAX_COMBINATIONS else None
    if combos is not None:
        return combos
    picked, seen = [], set()
    for _ in range(MAX_COMBINATIONS * 4):
        c = random_choice_assignment(space, rng)
        key = tuple(repr(c[k]) for k in sorted(c))
        if key not in seen:
            seen.add(key)
            picked.append(c)
        if len(picked) == MAX_COMBINATIONS:
            break
    return picked


def _n_combos(space):
    total = 1
    for spec in space.choice_specs:
        total *= len(spec.values)
    return total


def maximize_acquisition(score, space: SearchSpace, starts: np.ndarray, combos):
    """Compass search from every start point for every choice combination.

    ``score(unit_points, assignment) -> values`` must accept a batch. Returns
    ``(best_config, best_value, evaluated)`` where ``evaluated`` lists every
    ``(config, value)`` pair actually scored at a start point.
    """
    d = len(space.range_specs)
    best = (None, -np.inf)
    start_values = []
    for combo in combos:
        if d == 0:
            u = np.empty((1, 0))
            val = float(score(u, combo)[0])
            start_values.append((decode(u[0], combo, space), val))
            if val > best[1]:
                best = (decode(u[0], combo, space), val)
            continue
        x = snap(starts, space)
        f = score(x, combo)
        for xi, fi in zip(x, f):
            start_values.append((decode(xi, combo, space), float(fi)))
        step = np.full(len(x), INITIAL_STEP)
        eye = np.eye(d)
        for _ in range(MAX_PATTERN_STEPS):
            active = step >= MIN_STEP
            if not np.any(active):
                break
            moves = np.concatenate([eye, -eye])  # (2d, d)
            cand = np.clip(x[:, None, :] + step[:, None, None] * moves[None], 0.0, 1.0)
            cand = snap(cand.reshape(-1, d), space).reshape(len(x), 2 * d, d)
            vals = score(cand.reshape(-1, d), combo).reshape(len(x), 2 * d)
            j = np.argmax(vals, axis=1)
            top = vals[np.arange(len(x)), j]
            improved = active & (top > f + 1e-15)
            x[improved] = cand[improved, j[improved]]
            f[improved] = top[improved]
            step[active & ~improved] /= 2.0
        i = int(np.argmax(f))
        if f[i] > best[1]:
            best = (decode(x[i], combo, space), float(f[i]))
    return best[0], best[1], start_values


def restart_points(space: SearchSpace, n0: int, t: int, n: int = RESTARTS) -> np.ndarray:
    """Sobol' points following the initial design, distinct for each iteration."""
    offset = 1 + n0 + n * max(t - n0 - 1, 0)
    return sobol_points(len(space.range_specs), n, skip=offset)


def propose(space: SearchSpace, surrogates, front_features, ref, *, n0: int, t: int,
            seed: int = 0, mc_samples: int = MC_SAMPLES, noisy: bool = True):
    """Next configuration maximising noisy EHVI under the fitted surrogates.

    ``surrogates`` are fit in normalised objective space on
    :func:`features` inputs; ``front_features`` are the inputs of the
    current observed front members.
    """
    rng = np.random.default_rng([seed, t, 7])
    front_features = np.asarray(front_features, dtype=float).reshape(-1, _feature_width(space))
    if len(front_features):
        preds = [gp.predict(front_features, full_cov=True) for gp in surrogates]
        if noisy:
            draws = sample_front(preds, mc_samples, np.random.default_rng([seed, t, 11]))
        else:
            draws = np.stack([p[0] for p in preds], axis=-1)
    else:
        draws = np.empty((0, 2))
    estimator = HypervolumeImprovement(draws, ref, mc_samples, seed=seed + t)

    def score(unit_points, combo):
        X = features(unit_points, combo, space)
        preds = [gp.predict(X) for gp in surrogates]
        means = np.stack([p[0] for p in preds], axis=-1)
        variances = np.stack([p[1] for p in preds], axis=-1)
        return estimator(means, variances)

    combos = _candidate_combinations(space, rng)
    starts = restart_points(space, n0, t)
    config, value, _ = maximize_acquisition(score, space, starts, combos)
    return config, value


def _feature_width(space):
    return len(space.range_specs) + sum(
        len(s.values) for s in space.choice_specs if len(s.values) > 1
    )
