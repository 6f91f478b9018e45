"""Run one trial against an adapter subprocess.

The adapter speaks line-delimited JSON on stdin/stdout.  Engine to adapter::

    {"cmd": "train", "trial_id": N, "config": {...}, "dataset": "ref"}
    {"cmd": "stop"}
    {"cmd": "evaluate", "trial_id": N, "config": {...}}

Adapter to engine::

    {"event": "epoch", "val_loss": x}
    {"event": "trained"}
    {"event": "evaluated", "performance": x, "samples": N, "metadata": {...}}
    {"event": "oom"}
    {"event": "error", "message": "..."}

The adapter exits when its stdin closes. Its stderr is inherited.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field

from .meter import EnergyReport, MeterConfig, MeterSession

log = logging.getLogger(__name__)

OK, FAILED, OOM = "ok", "failed", "oom"
DEFAULT_TIMEOUT = 3600.0
EVENTS = {"epoch", "trained", "evaluated", "oom", "error"}


class AdapterLaunchError(RuntimeError):
    """The adapter command could not be started at all."""


class ProtocolError(RuntimeError):
    pass


class NeverBreaksEven(ValueError):
    pass


def early_stop_check(val_losses, patience: int = 3, min_delta: float = 0.001) -> bool:
    """True once the last ``patience`` loss deltas are all below ``min_delta``."""
    if patience < 1 or min_delta < 0:
        raise ValueError("patience must be >= 1 and min_delta >= 0")
    losses = list(val_losses)
    if len(losses) < patience + 1:
        return False
    tail = losses[-(patience + 1):]
    return all(abs(b - a) < min_delta for a, b in zip(tail, tail[1:]))


def breakeven(optimization_energy_joules: float, savings_per_unit_joules: float) -> int:
    """Units of work after which per-unit savings repay the tuning energy."""
    if savings_per_unit_joules <= 0:
        raise NeverBreaksEven("never breaks even: savings per unit must be positive")
    return math.floor(optimization_energy_joules / savings_per_unit_joules)


@dataclass
class TrialOptions:
    skip_train: bool = False
    timeout_seconds: float = DEFAULT_TIMEOUT
    early_stopping: bool = True
    patience: int = 3
    min_delta: float = 0.001
    dataset: str = ""
    meter: MeterConfig = field(default_factory=MeterConfig)


@dataclass
class TrialResult:
    status: str
    performance: float
    samples: int = 0
    energy: EnergyReport | None = None
    efficiency: float = 0.0
    epochs_run: int | None = None
    metadata: dict = field(default_factory=dict)
    wall_seconds: float = 0.0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OK


class _Adapter:
    """Child process plus a reader thread feeding parsed stdout lines."""

    def __init__(self, command):
        args = shlex.split(command) if isinstance(command, str) else list(command)
        if not args:
            raise AdapterLaunchError("empty adapter command")
        try:
            self.proc = subprocess.Popen(
                args, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1,
            )
        except OSError as exc:
            raise AdapterLaunchError(f"cannot launch adapter {args[0]!r}: {exc}") from exc
        self.lines: queue.Queue = queue.Queue()
        self.sent: list[dict] = []
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(None)

    def send(self, message: dict):
        self.sent.append(message)
        try:
            self.proc.stdin.write(json.dumps(message) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"adapter closed its input: {exc}") from exc

    def next_event(self, deadline: float) -> dict:
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError("adapter timed out")
            try:
                line = self.lines.get(timeout=remaining)
            except queue.Empty:
                raise TimeoutError("adapter timed out") from None
            if line is None:
                raise ProtocolError(f"adapter exited (code {self.proc.poll()}) mid-protocol")
            if not line.strip():
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"malformed adapter message {line.strip()!r}") from exc
            if not isinstance(msg, dict) or msg.get("event") not in EVENTS:
                raise ProtocolError(f"unknown adapter event {line.strip()!r}")
            return msg

    def close(self, grace: float = 5.0):
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=grace)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()
        self._reader.join(timeout=grace)

    def kill(self):
        if self.proc.poll() is None:
            self.proc.kill()
        self.close(grace=1.0)


def _penalty(status, penalty_performance, message, start, **extra):
    return TrialResult(status, float(penalty_performance), efficiency=0.0, message=message,
                       wall_seconds=time.monotonic() - start, **extra)


def run_trial(adapter_cmd, config: dict, options: TrialOptions | None = None, *,
              trial_id: int = 0, penalty_performance: float = 0.0, meter_factory=None,
              transcript: list | None = None) -> TrialResult:
    """Train (unless skipped) and evaluate one configuration.

    Only the evaluate phase is metered into ``efficiency``; training energy
    goes to ``metadata["train_energy"]``. Out-of-memory, crash, timeout and
    protocol violations all return a penalty result (efficiency 0 and
    ``penalty_performance``). Raises :class:`AdapterLaunchError` when the
    command cannot be started.
    """
    options = options or TrialOptions()
    if meter_factory is None:
        def meter_factory():
            return MeterSession(options.meter)
    start = time.monotonic()
    deadline = start + options.timeout_seconds
    adapter = _Adapter(adapter_cmd)
    losses: list[float] = []
    train_energy = None
    session = None
    try:
        if not options.skip_train:
            session = meter_factory().start()
            adapter.send({"cmd": "train", "trial_id": trial_id, "config": config,
                          "dataset": options.dataset})
            stop_sent = False
            while True:
                msg = adapter.next_event(deadline)
                event = msg["event"]
                if event == "epoch":
                    losses.append(float(msg["val_loss"]))
                    if (options.early_stopping and not stop_sent
                            and early_stop_check(losses, options.patience, options.min_delta)):
                        adapter.send({"cmd": "stop"})
                        stop_sent = True
                elif event == "trained":
                    break
                elif event == "oom":
                    return _penalty(OOM, penalty_performance, "out of memory during training",
                                    start, epochs_run=len(losses))
                elif event == "error":
                    return _penalty(FAILED, penalty_performance, str(msg.get("message", "")),
                                    start, epochs_run=len(losses))
                else:
                    raise ProtocolError(f"unexpected {event!r} during training")
            train_energy = session.stop()
            session = None

        session = meter_factory().start()
        adapter.send({"cmd": "evaluate", "trial_id": trial_id, "config": config})
        msg = adapter.next_event(deadline)
        energy = session.stop()
        session = None
        event = msg["event"]
        epochs = len(losses) if not options.skip_train else None
        if event == "oom":
            return _penalty(OOM, penalty_performance, "out of memory during evaluation",
                            start, epochs_run=epochs, energy=energy)
        if event == "error":
            return _penalty(FAILED, penalty_performance, str(msg.get("message", "")),
                            start, epochs_run=epochs, energy=energy)
        if event != "evaluated":
            raise ProtocolError(f"expected 'evaluated', got {event!r}")
        performance = float(msg["performance"])
        samples = int(msg["samples"])
        metadata = dict(msg.get("metadata") or {})
        if not math.isfinite(performance):
            raise ProtocolError("performance must be finite")
        if samples <= 0:
            raise ProtocolError("evaluated event must report samples > 0")
        if energy.pue_adjusted_joules <= 0:
            return _penalty(FAILED, penalty_performance, "meter recorded no energy",
                            start, epochs_run=epochs, energy=energy)
        if train_energy is not None:
            metadata["train_energy"] = train_energy.to_dict()
        return TrialResult(OK, performance, samples, energy,
                           samples / energy.pue_adjusted_joules, epochs, metadata,
                           time.monotonic() - start)
    except (ProtocolError, TimeoutError, KeyError, TypeError, ValueError) as exc:
        adapter.kill()
        message = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
        return _penalty(FAILED, penalty_performance, message, start, epochs_run=len(losses) or None)
    finally:
        if session is not None:
            session.stop()
        adapter.close()
        if transcript is not None:
            transcript.extend(adapter.sent)
