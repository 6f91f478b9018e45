"""Typed hyperparameter domains and their unit-cube encoding.

A :class:`SearchSpace` is an ordered list of :class:`HyperparameterSpec`.
Range specs are embedded in ``[0, 1]`` for the surrogate; choice specs are
left out of the embedding and enumerated by the acquisition optimiser;
fixed specs only ever take their constant.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.stats import qmc

RANGE, CHOICE, FIXED = "range", "choice", "fixed"
INTEGER, FLOAT, BOOLEAN = "integer", "float", "boolean"

KINDS = (RANGE, CHOICE, FIXED)
VALUE_TYPES = (INTEGER, FLOAT, BOOLEAN)

_TYPE_ALIASES = {
    "int": INTEGER,
    "integer": INTEGER,
    "float": FLOAT,
    "bool": BOOLEAN,
    "boolean": BOOLEAN,
}

Configuration = dict[str, Any]


class SearchSpaceError(ValueError):
    """Raised for an invalid space or a configuration outside its domain."""


@dataclass(frozen=True)
class HyperparameterSpec:
    name: str
    kind: str
    value_type: str
    bounds: tuple[float, float] | None = None
    values: tuple[Any, ...] | None = None
    value: Any = None
    log_scale: bool = False

    @classmethod
    def range(cls, name, lo, hi, value_type=INTEGER, log_scale=False):
        return cls(name, RANGE, value_type, bounds=(lo, hi), log_scale=log_scale)

    @classmethod
    def choice(cls, name, values, value_type=None):
        values = tuple(values)
        if value_type is None:
            value_type = _infer_type(values)
        return cls(name, CHOICE, value_type, values=values)

    @classmethod
    def fixed(cls, name, value, value_type=None):
        if value_type is None:
            value_type = _infer_type((value,))
        return cls(name, FIXED, value_type, value=value)

    def size(self) -> float:
        """Number of distinct values in the domain (``inf`` for float ranges)."""
        if self.kind == FIXED:
            return 1
        if self.kind == CHOICE:
            return len(self.values)
        if self.value_type == FLOAT:
            return math.inf
        if self.value_type == BOOLEAN:
            return 2
        lo, hi = self.bounds
        return int(hi) - int(lo) + 1

    def contains(self, v) -> bool:
        if self.kind == FIXED:
            return _same_value(v, self.value)
        if self.kind == CHOICE:
            return any(_same_value(v, c) for c in self.values)
        lo, hi = self.bounds
        if self.value_type == INTEGER:
            if isinstance(v, bool) or not float(v).is_integer():
                return False
        return lo <= v <= hi


def _same_value(a, b) -> bool:
    # True == 1 in Python; keep booleans and integers apart
    if isinstance(a, bool) != isinstance(b, bool):
        return False
    return a == b


def _infer_type(values: Iterable[Any]) -> str:
    values = list(values)
    if values and all(isinstance(v, bool) for v in values):
        return BOOLEAN
    if values and all(isinstance(v, int) and not isinstance(v, bool) for v in values):
        return INTEGER
    return FLOAT


@dataclass(frozen=True)
class SearchSpace:
    specs: tuple[HyperparameterSpec, ...]

    def __init__(self, specs: Sequence[HyperparameterSpec]):
        object.__setattr__(self, "specs", tuple(specs))

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    @property
    def dimensionality(self) -> int:
        return sum(1 for s in self.specs if s.kind != FIXED)

    @property
    def range_specs(self) -> list[HyperparameterSpec]:
        return [s for s in self.specs if s.kind == RANGE]

    @property
    def choice_specs(self) -> list[HyperparameterSpec]:
        return [s for s in self.specs if s.kind == CHOICE]

    @property
    def varying_names(self) -> list[str]:
        return [s.name for s in self.specs if s.kind != FIXED]

    def __getitem__(self, name: str) -> HyperparameterSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise KeyError(name)

    def __add__(self, other: "SearchSpace") -> "SearchSpace":
        return SearchSpace(self.specs + other.specs)


@dataclass
class Violation:
    name: str
    message: str

    def __str__(self):
        return f"{self.name or '<space>'}: {self.message}"


def validate_space(space: SearchSpace) -> list[Violation]:
    """Check every spec invariant; an empty list means the space is valid."""
    violations = []
    if not space.specs:
        violations.append(Violation("", "search space has no specs"))
    seen = set()
    for spec in space.specs:
        name = spec.name
        if not name:
            violations.append(Violation(name, "empty name"))
        elif name in seen:
            violations.append(Violation(name, "duplicate name"))
        seen.add(name)
        if spec.kind not in KINDS:
            violations.append(Violation(name, f"unknown kind {spec.kind!r}"))
            continue
        if spec.value_type not in VALUE_TYPES:
            violations.append(Violation(name, f"unknown value type {spec.value_type!r}"))
        if spec.kind == RANGE:
            if spec.bounds is None or len(spec.bounds) != 2:
                violations.append(Violation(name, "range needs bounds [lo, hi]"))
                continue
            lo, hi = spec.bounds
            if lo > hi:
                violations.append(Violation(name, "lo > hi"))
            if spec.value_type == BOOLEAN:
                violations.append(Violation(name, "boolean range is not supported, use choice"))
            if spec.value_type == INTEGER and not (
                float(lo).is_integer() and float(hi).is_integer()
            ):
                violations.append(Violation(name, "integer range needs integer bounds"))
            if spec.log_scale:
                if spec.value_type != FLOAT:
                    violations.append(Violation(name, "log scale only applies to float ranges"))
                if lo <= 0:
                    violations.append(Violation(name, "log scale requires lo > 0"))
        elif spec.kind == CHOICE:
            values = spec.values or ()
            if len(values) < 1:
                violations.append(Violation(name, "choice needs at least one value"))
            distinct = []
            for v in values:
                if any(_same_value(v, d) for d in distinct):
                    violations.append(Violation(name, f"repeated choice value {v!r}"))
                distinct.append(v)
            if spec.log_scale:
                violations.append(Violation(name, "log scale only applies to float ranges"))
        else:
            if spec.values is not None or spec.bounds is not None:
                violations.append(Violation(name, "fixed takes exactly one value"))
            if spec.log_scale:
                violations.append(Violation(name, "log scale only applies to float ranges"))
    return violations


def check_space(space: SearchSpace) -> None:
    violations = validate_space(space)
    if violations:
        raise SearchSpaceError("; ".join(str(v) for v in violations))


def cardinality(space: SearchSpace) -> float:
    """Size of the Cartesian product of the domains; ``math.inf`` if unbounded."""
    total = 1
    for spec in space.specs:
        size = spec.size()
        if size == math.inf:
            return math.inf
        total *= size
    return total


def validate_config(config: Configuration, space: SearchSpace) -> None:
    missing = [n for n in space.names if n not in config]
    extra = [n for n in config if n not in space.names]
    if missing or extra:
        raise SearchSpaceError(f"config mismatch: missing={missing} unexpected={extra}")
    for spec in space.specs:
        if not spec.contains(config[spec.name]):
            raise SearchSpaceError(
                f"{spec.name}: value {config[spec.name]!r} outside domain"
            )


def _encode_value(spec: HyperparameterSpec, v) -> float:
    lo, hi = spec.bounds
    if not spec.contains(v):
        raise SearchSpaceError(f"{spec.name}: value {v!r} outside [{lo}, {hi}]")
    if hi == lo:
        return 0.0
    if spec.log_scale:
        return math.log(v / lo) / math.log(hi / lo)
    return (v - lo) / (hi - lo)


def _decode_value(spec: HyperparameterSpec, u: float):
    lo, hi = spec.bounds
    if spec.value_type == INTEGER:
        lo, hi = int(lo), int(hi)
        return min(hi, lo + int(math.floor(u * (hi - lo + 1))))
    if spec.log_scale:
        v = lo * math.exp(u * math.log(hi / lo))
    else:
        v = lo + u * (hi - lo)
    return float(min(max(v, lo), hi))


def encode(config: Configuration, space: SearchSpace) -> np.ndarray:
    """Map the range values of ``config`` to unit-cube coordinates."""
    coords = []
    for spec in space.range_specs:
        if spec.name not in config:
            raise SearchSpaceError(f"{spec.name}: missing from config")
        coords.append(_encode_value(spec, config[spec.name]))
    return np.asarray(coords, dtype=float)


def decode(point, choice_assignment: dict | None, space: SearchSpace) -> Configuration:
    """Inverse of :func:`encode` given values for the choice specs.

    Integers use stratified flooring so every integer owns an equal slice of
    ``[0, 1]``; ``u == 1`` clamps to the upper bound.
    """
    point = np.asarray(point, dtype=float).ravel()
    ranges = space.range_specs
    if point.shape[0] != len(ranges):
        raise SearchSpaceError(
            f"point has {point.shape[0]} coordinates, space has {len(ranges)} ranges"
        )
    if np.any(point < 0.0) or np.any(point > 1.0) or not np.all(np.isfinite(point)):
        raise SearchSpaceError(f"coordinates outside [0, 1]: {point.tolist()}")
    choice_assignment = choice_assignment or {}
    coords = iter(point)
    config = {}
    for spec in space.specs:
        if spec.kind == RANGE:
            config[spec.name] = _decode_value(spec, float(next(coords)))
        elif spec.kind == CHOICE:
            if spec.name not in choice_assignment:
                raise SearchSpaceError(f"{spec.name}: no value given for choice")
            v = choice_assignment[spec.name]
            if not spec.contains(v):
                raise SearchSpaceError(f"{spec.name}: {v!r} is not a listed choice")
            config[spec.name] = v
        else:
            config[spec.name] = spec.value
    return config


def snap(point, space: SearchSpace) -> np.ndarray:
    """Round a unit point onto the representable grid (integers snap)."""
    out = np.array(point, dtype=float)
    for i, spec in enumerate(space.range_specs):
        if spec.value_type == INTEGER:
            out[..., i] = _snap_integer(out[..., i], spec)
    return out


def _snap_integer(u, spec):
    lo, hi = int(spec.bounds[0]), int(spec.bounds[1])
    if hi == lo:
        return np.zeros_like(u)
    idx = np.minimum(hi - lo, np.floor(u * (hi - lo + 1)))
    return idx / (hi - lo)


def sobol_points(d: int, n: int, skip: int = 1) -> np.ndarray:
    """Unscrambled base-2 Sobol' points ``skip .. skip+n-1`` in ``[0, 1)^d``."""
    if n == 0:
        return np.empty((0, d))
    if d == 0:
        return np.empty((n, 0))
    engine = qmc.Sobol(d, scramble=False)
    if skip:
        engine.fast_forward(skip)
    with warnings.catch_warnings():
        # balance warning for non power-of-two n is irrelevant here
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(n)


def choice_combinations(space: SearchSpace) -> list[dict]:
    """All assignments of the choice specs, in lexicographic order."""
    combos = [{}]
    for spec in space.choice_specs:
        combos = [{**c, spec.name: v} for c in combos for v in spec.values]
    return combos


def random_choice_assignment(space: SearchSpace, rng: np.random.Generator) -> dict:
    return {
        spec.name: spec.values[int(rng.integers(len(spec.values)))]
        for spec in space.choice_specs
    }


def sobol_sample(space: SearchSpace, n: int, seed: int = 0) -> list[Configuration]:
    """Space-filling initial design of ``n`` configurations."""
    if n < 0:
        raise ValueError("n must be >= 0")
    check_space(space)
    points = sobol_points(len(space.range_specs), n)
    rng = np.random.default_rng(seed)
    return [
        decode(p, random_choice_assignment(space, rng), space) for p in points
    ]


# --- file format -----------------------------------------------------------

def spec_from_dict(d: dict) -> HyperparameterSpec:
    try:
        name = d["name"]
        kind = d["type"]
    except KeyError as exc:
        raise SearchSpaceError(f"spec {d!r} lacks {exc.args[0]!r}") from None
    dtype = d.get("data_type")
    if dtype is not None:
        if dtype not in _TYPE_ALIASES:
            raise SearchSpaceError(f"{name}: unknown data_type {dtype!r}")
        dtype = _TYPE_ALIASES[dtype]
    if kind == RANGE:
        if "bounds" not in d:
            raise SearchSpaceError(f"{name}: range needs bounds")
        lo, hi = d["bounds"]
        dtype = dtype or _infer_type((lo, hi))
        if dtype == INTEGER:
            lo, hi = int(lo), int(hi)
        else:
            lo, hi = float(lo), float(hi)
        return HyperparameterSpec(name, RANGE, dtype, bounds=(lo, hi),
                                  log_scale=bool(d.get("log", False)))
    if kind == CHOICE:
        values = tuple(d.get("values", ()))
        return HyperparameterSpec(name, CHOICE, dtype or _infer_type(values),
                                  values=values, log_scale=bool(d.get("log", False)))
    if kind == FIXED:
        if "value" not in d:
            raise SearchSpaceError(f"{name}: fixed needs a value")
        return HyperparameterSpec(name, FIXED, dtype or _infer_type((d["value"],)),
                                  value=d["value"])
    raise SearchSpaceError(f"{name}: unknown type {kind!r}")


def spec_to_dict(spec: HyperparameterSpec) -> dict:
    short = {INTEGER: "int", FLOAT: "float", BOOLEAN: "bool"}
    d = {"name": spec.name, "type": spec.kind, "data_type": short.get(spec.value_type, spec.value_type)}
    if spec.kind == RANGE:
        d["bounds"] = list(spec.bounds)
        if spec.log_scale:
            d["log"] = True
    elif spec.kind == CHOICE:
        d["values"] = list(spec.values)
    else:
        d["value"] = spec.value
    return d


def space_from_json(data) -> SearchSpace:
    if isinstance(data, dict):
        data = data.get("parameters", data.get("specs"))
    if not isinstance(data, list):
        raise SearchSpaceError("search-space document must be a list of specs")
    space = SearchSpace([spec_from_dict(d) for d in data])
    check_space(space)
    return space


def load_space(path) -> SearchSpace:
    with open(path, encoding="utf-8") as fh:
        return space_from_json(json.load(fh))


def dump_space(space: SearchSpace, path) -> None:
    Path(path).write_text(json.dumps([spec_to_dict(s) for s in space.specs], indent=2) + "\n")
