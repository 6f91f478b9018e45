"""Dominance, Pareto fronts, improvement normalisation and 2-D hypervolume."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

MAXIMIZE, MINIMIZE = "maximize", "minimize"


@dataclass(frozen=True)
class ObjectiveSpec:
    name: str
    direction: str = MAXIMIZE
    threshold: float | None = None

    def __post_init__(self):
        if self.direction not in (MAXIMIZE, MINIMIZE):
            raise ValueError(f"{self.name}: direction must be maximize or minimize")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == MAXIMIZE else -1.0

    @classmethod
    def parse(cls, text: str) -> "ObjectiveSpec":
        """Parse ``name:direction[:threshold]``."""
        parts = text.split(":")
        if len(parts) not in (2, 3) or not parts[0]:
            raise ValueError(f"objective {text!r} is not name:direction[:threshold]")
        direction = {"max": MAXIMIZE, "min": MINIMIZE}.get(parts[1], parts[1])
        threshold = float(parts[2]) if len(parts) == 3 else None
        return cls(parts[0], direction, threshold)


def _directions(dirs, m):
    if dirs is None:
        return [MAXIMIZE] * m
    out = []
    for d in dirs:
        out.append(d.direction if isinstance(d, ObjectiveSpec) else d)
    if len(out) != m:
        raise ValueError(f"{len(out)} directions for {m} objectives")
    return out


def dominates(a: Sequence[float], b: Sequence[float], dirs=None) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and better somewhere."""
    if len(a) != len(b):
        raise ValueError(f"arity mismatch: {len(a)} vs {len(b)}")
    better = False
    for x, y, d in zip(a, b, _directions(dirs, len(a))):
        if d == MINIMIZE:
            x, y = -x, -y
        if x < y:
            return False
        if x > y:
            better = True
    return better


def values_of(item) -> tuple:
    return tuple(item.objectives) if hasattr(item, "objectives") else tuple(item)


@dataclass
class ParetoFront:
    """Mutually non-dominating members; members may be observations or vectors."""

    directions: list[str]
    members: list = field(default_factory=list)
    # sign-oriented member values, kept in step with ``members`` by pareto_update
    _keys: list | None = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def values(self) -> np.ndarray:
        return np.array([values_of(m) for m in self.members], dtype=float).reshape(
            len(self.members), len(self.directions)
        )

    def keys(self) -> list:
        if self._keys is None or len(self._keys) != len(self.members):
            signs = _signs(self.directions)
            self._keys = [_oriented(values_of(m), signs) for m in self.members]
        return self._keys


def _signs(dirs) -> tuple:
    return tuple(-1.0 if d == MINIMIZE else 1.0 for d in _directions(dirs, len(dirs)))


def _oriented(values, signs) -> tuple:
    if len(values) != len(signs):
        raise ValueError(f"arity mismatch: {len(values)} vs {len(signs)}")
    return tuple(v * s for v, s in zip(values, signs))


def _dominates_key(a, b) -> bool:
    better = False
    for x, y in zip(a, b):
        if x < y:
            return False
        if x > y:
            better = True
    return better


def pareto_update(front: ParetoFront, obs) -> ParetoFront:
    """Return a new front with ``obs`` inserted if nothing dominates it.

    Members dominated by ``obs`` are dropped. An ``obs`` whose objective
    vector equals a member's adds nothing and is not inserted, so the front
    holds one representative (the earliest) per vector.
    """
    dirs = front.directions
    new = _oriented(values_of(obs), _signs(dirs))
    keys = front.keys()
    kept, kept_keys = [], []
    for m, k in zip(front.members, keys):
        if k == new or _dominates_key(k, new):
            return ParetoFront(list(dirs), list(front.members), list(keys))
        if not _dominates_key(new, k):
            kept.append(m)
            kept_keys.append(k)
    kept.append(obs)
    kept_keys.append(new)
    return ParetoFront(list(dirs), kept, kept_keys)


def nondominated(items, dirs=None) -> list:
    """Brute-force O(n^2) filter, order preserved."""
    vals = [values_of(i) for i in items]
    if not vals:
        return []
    dirs = _directions(dirs, len(vals[0]))
    return [
        item for i, item in enumerate(items)
        if not any(dominates(vals[j], vals[i], dirs) for j in range(len(vals)) if j != i)
    ]


@dataclass(frozen=True)
class Normalization:
    """Per-objective affine map into improvement space (worst 0, best 1)."""

    worst: np.ndarray
    best: np.ndarray
    signs: np.ndarray
    degenerate: np.ndarray

    def forward(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        span = self.best - self.worst
        safe = np.where(self.degenerate, 1.0, span)
        out = (values - self.worst) / safe
        return np.where(self.degenerate, 0.5 + (values - self.worst) * self.signs, out)

    def inverse(self, normalized) -> np.ndarray:
        normalized = np.asarray(normalized, dtype=float)
        span = self.best - self.worst
        out = self.worst + normalized * span
        return np.where(self.degenerate, self.worst + (normalized - 0.5) * self.signs, out)


def normalize(values, dirs=None) -> tuple[np.ndarray, Normalization]:
    """Improvement-normalise an ``(n, m)`` array of observed objective values.

    For a constant objective the span is undefined; it is centred on 0.5 with
    unit slope in the improvement direction and a warning is logged.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ValueError("normalize needs at least one ok observation")
    dirs = _directions(dirs, values.shape[1])
    signs = np.array([1.0 if d == MAXIMIZE else -1.0 for d in dirs])
    oriented = values * signs
    worst = oriented.min(axis=0) * signs
    best = oriented.max(axis=0) * signs
    degenerate = np.isclose(worst, best, rtol=0.0, atol=0.0)
    for i in np.flatnonzero(degenerate):
        log.warning("objective %d is constant (%g); normalised to 0.5", i, worst[i])
    transform = Normalization(worst, best, signs, degenerate)
    return transform.forward(values), transform


@dataclass(frozen=True)
class ReferencePoint:
    values: np.ndarray

    def __iter__(self):
        return iter(self.values)


REF_QUANTILE = 10.0
REF_MARGIN = 0.1


def infer_reference_point(normalized, objectives=None, transform: Normalization | None = None) -> ReferencePoint:
    """Anti-ideal point in normalised space.

    A user threshold (in raw units) wins when present; otherwise the 10th
    percentile of the normalised values minus a 0.1 margin is used.
    """
    normalized = np.asarray(normalized, dtype=float)
    if normalized.ndim != 2 or normalized.shape[0] == 0:
        raise ValueError("reference point needs at least one observation")
    ref = np.percentile(normalized, REF_QUANTILE, axis=0) - REF_MARGIN
    for i, obj in enumerate(objectives or []):
        if isinstance(obj, ObjectiveSpec) and obj.threshold is not None:
            if transform is None:
                raise ValueError("a threshold needs the normalisation transform")
            raw = np.array(transform.worst, dtype=float)
            raw[i] = obj.threshold
            ref[i] = transform.forward(raw)[i]
    return ReferencePoint(ref)


def _staircase(points, ref):
    """Nondominated points strictly dominating ``ref``, sorted by x ascending."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pts = pts[(pts[:, 0] > ref[0]) & (pts[:, 1] > ref[1])]
    if len(pts) == 0:
        return pts
    # descending x, ties broken by descending y; keep strict y records
    order = np.lexsort((-pts[:, 1], -pts[:, 0]))
    pts = pts[order]
    keep = []
    best_y = -math.inf
    for p in pts:
        if p[1] > best_y:
            keep.append(p)
            best_y = p[1]
    return np.array(keep)[::-1]


def hypervolume2d(front, ref) -> float:
    """Exact area dominated by a 2-D front (maximisation) above ``ref``."""
    ref = np.asarray(list(ref), dtype=float)
    pts = np.asarray(front, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return 0.0
    bad = ~np.all(pts >= ref, axis=1)
    if np.any(bad):
        raise ValueError(f"point {pts[bad][0].tolist()} does not dominate the reference point")
    return clipped_hypervolume2d(pts, ref)


def clipped_hypervolume2d(points, ref) -> float:
    """Like :func:`hypervolume2d` but points outside the box contribute nothing."""
    ref = np.asarray(list(ref), dtype=float)
    stair = _staircase(points, ref)
    if len(stair) == 0:
        return 0.0
    # sweep right-to-left: x descending, y ascending
    xs = stair[:, 0]
    ys = stair[:, 1]
    left = np.concatenate([[ref[0]], xs[:-1]])
    return float(np.sum((xs - left) * (ys - ref[1])))
