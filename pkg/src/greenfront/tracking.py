"""Append-only run log and the reports built from it.

Each trial is one JSON object per line. Readers drop a torn final line so a
log can be read while the optimiser is still appending.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .mobo.pareto import MAXIMIZE, ObjectiveSpec, nondominated


class TrackingError(RuntimeError):
    pass


class UndefinedCorrelation(ValueError):
    pass


@dataclass
class RunRecord:
    trial_id: int
    config: dict
    objectives: dict
    status: str = "ok"
    timestamp: float = field(default_factory=lambda: round(time.time(), 3))
    energy: dict = field(default_factory=dict)
    wall_seconds: float = 0.0
    phase: str = "sobol"
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        return cls(**json.loads(line))

    def metric(self, name: str):
        """Look ``name`` up across the record's fields, objectives first."""
        if name in ("trial_id", "status", "phase", "timestamp", "wall_seconds"):
            return getattr(self, name)
        if name in self.objectives:
            return self.objectives[name]
        if name in self.energy:
            return self.energy[name]
        components = self.energy.get("joules_by_component", {})
        if name.endswith("_joules") and name[: -len("_joules")] in components:
            return components[name[: -len("_joules")]]
        if name in self.metadata:
            return self.metadata[name]
        if name in self.config:
            return self.config[name]
        raise KeyError(name)


def append_run(log_path, record: RunRecord) -> None:
    """Append one record as a single line and fsync it.

    The parent directory must already exist.
    """
    path = Path(log_path)
    if not path.parent.is_dir():
        raise TrackingError(f"log directory {path.parent} does not exist")
    line = record.to_json() + "\n"
    try:
        fd = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        try:
            os.write(fd, line.encode("utf-8"))
            os.fsync(fd)
        finally:
            os.close(fd)
    except OSError as exc:
        raise TrackingError(f"cannot append to {path}: {exc}") from exc


def load_runs(log_path) -> list[RunRecord]:
    path = Path(log_path)
    if not path.exists():
        return []
    records = []
    lines = path.read_text(encoding="utf-8").split("\n")
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(RunRecord.from_json(line))
        except (json.JSONDecodeError, TypeError):
            if i == len(lines) - 1:
                break  # torn final line from a concurrent append
            raise TrackingError(f"{path}:{i + 1}: corrupt record")
    return records


def _objective_specs(objectives) -> list[ObjectiveSpec]:
    if objectives is None:
        return [ObjectiveSpec("performance", MAXIMIZE), ObjectiveSpec("efficiency", MAXIMIZE)]
    return [o if isinstance(o, ObjectiveSpec) else ObjectiveSpec.parse(o) for o in objectives]


def varying_parameters(records) -> list[str]:
    """Config keys that take more than one value across ``records``."""
    names: list[str] = []
    for r in records:
        for k in r.config:
            if k not in names:
                names.append(k)
    return [k for k in names if len({json.dumps(r.config.get(k)) for r in records}) > 1]


def frontier_report(records, objectives=None, parameters=None) -> tuple[list[str], list[list]]:
    """Pareto-optimal ok records as ``(columns, rows)``.

    Rows are sorted descending by the first objective. Columns are the
    objectives followed by ``parameters`` (default: the config keys that vary
    across the log).
    """
    objectives = _objective_specs(objectives)
    ok = [r for r in records if r.status == "ok"]
    names = [o.name for o in objectives]
    vectors = [tuple(r.objectives[n] for n in names) for r in ok]
    items = [_Item(v, r) for v, r in zip(vectors, ok)]
    keep = nondominated(items, [o.direction for o in objectives])
    first = objectives[0]
    keep.sort(key=lambda it: it.objectives[0], reverse=(first.direction == MAXIMIZE))
    if parameters is None:
        parameters = varying_parameters(records)
    columns = names + list(parameters)
    rows = [list(it.objectives) + [it.record.config.get(p) for p in parameters] for it in keep]
    return columns, rows


class _Item:
    __slots__ = ("objectives", "record")

    def __init__(self, objectives, record):
        self.objectives = objectives
        self.record = record


def format_table(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Aligned plain-text table; numbers right-aligned."""

    def cell(v):
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    text = [[cell(v) for v in row] for row in rows]
    widths = [max([len(c)] + [len(r[i]) for r in text]) for i, c in enumerate(columns)]
    numeric = [all(isinstance(row[i], (int, float)) and not isinstance(row[i], bool)
                   for row in rows) for i in range(len(columns))]

    def line(values):
        return "  ".join(v.rjust(w) if num else v.ljust(w)
                         for v, w, num in zip(values, widths, numeric)).rstrip()

    out = [line(list(columns)), line(["-" * w for w in widths])]
    out.extend(line(r) for r in text)
    return "\n".join(out)


def pearson(xs, ys) -> float:
    """Product-moment correlation coefficient."""
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("pearson needs two equal-length series of at least 2 values")
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelation("correlation undefined for a constant series")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def correlation_report(records, metric_pairs) -> list[tuple[tuple[str, str], float | None]]:
    """Pearson r per requested pair over ok records; ``None`` flags undefined."""
    ok = [r for r in records if r.status == "ok"]
    out = []
    for a, b in metric_pairs:
        try:
            xs = [r.metric(a) for r in ok]
            ys = [r.metric(b) for r in ok]
        except KeyError as exc:
            raise KeyError(f"unknown metric {exc.args[0]!r}") from None
        try:
            out.append(((a, b), pearson(xs, ys)))
        except ValueError:
            out.append(((a, b), None))
    return out


def export_csv(records, columns: Sequence[str], path) -> None:
    rows = []
    for r in records:
        row = []
        for c in columns:
            try:
                v = r.metric(c)
            except KeyError:
                raise KeyError(f"unknown column {c!r}") from None
            row.append(repr(v) if isinstance(v, float) else
                       json.dumps(v) if isinstance(v, (dict, list)) else v)
        rows.append(row)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            writer.writerows(rows)
    except OSError as exc:
        raise TrackingError(f"cannot write {path}: {exc}") from exc
