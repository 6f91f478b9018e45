"""Adapter side of the stdio protocol.

An adapter module supplies ``train(config, dataset, report_epoch, should_stop)``
and ``evaluate(config) -> (performance, samples, metadata)`` and calls
:func:`serve`. Raising :class:`MemoryError` from either reports ``oom``.
"""

from __future__ import annotations

import json
import sys
import threading
import queue


def _emit(out, obj):
    out.write(json.dumps(obj) + "\n")
    out.flush()


def serve(train=None, evaluate=None, stdin=None, stdout=None):
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    commands: queue.Queue = queue.Queue()
    stop_requested = threading.Event()

    def read():
        for line in stdin:
            if not line.strip():
                continue
            msg = json.loads(line)
            if msg.get("cmd") == "stop":
                stop_requested.set()
            else:
                commands.put(msg)
        commands.put(None)

    threading.Thread(target=read, daemon=True).start()
    while True:
        msg = commands.get()
        if msg is None:
            return
        try:
            if msg["cmd"] == "train":
                stop_requested.clear()
                if train is not None:
                    train(msg["config"], msg.get("dataset", ""),
                          lambda loss: _emit(stdout, {"event": "epoch", "val_loss": float(loss)}),
                          stop_requested.is_set)
                _emit(stdout, {"event": "trained"})
            elif msg["cmd"] == "evaluate":
                performance, samples, metadata = evaluate(msg["config"])
                _emit(stdout, {"event": "evaluated", "performance": performance,
                               "samples": samples, "metadata": metadata or {}})
            else:
                _emit(stdout, {"event": "error", "message": f"unknown command {msg['cmd']!r}"})
        except MemoryError:
            _emit(stdout, {"event": "oom"})
        except Exception as exc:  # reported to the engine, which records a failed trial
            _emit(stdout, {"event": "error", "message": f"{type(exc).__name__}: {exc}"})
