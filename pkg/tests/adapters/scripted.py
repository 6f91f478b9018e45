"""Test adapter whose behaviour is selected by argv.

usage: scripted.py MODE [LOG_PATH]

Every command received is appended to LOG_PATH as a JSON line.
"""

import json
import select
import sys
import time

mode = sys.argv[1]
log_path = sys.argv[2] if len(sys.argv) > 2 else None


def emit(obj):
    sys.stdout.write((obj if isinstance(obj, str) else json.dumps(obj)) + "\n")
    sys.stdout.flush()


def record(msg):
    if log_path:
        with open(log_path, "a") as fh:
            fh.write(json.dumps(msg) + "\n")


def stop_pending(timeout=0.2):
    ready, _, _ = select.select([sys.stdin], [], [], timeout)
    if ready:
        line = sys.stdin.readline()
        if line:
            msg = json.loads(line)
            record(msg)
            return msg.get("cmd") == "stop"
    return False


if mode == "crash":
    sys.exit(3)

for line in sys.stdin:
    if not line.strip():
        continue
    msg = json.loads(line)
    record(msg)
    cmd = msg["cmd"]
    if cmd == "train":
        if mode == "oom-train":
            emit({"event": "oom"})
            continue
        losses = msg["config"].get("losses", [])
        for loss in losses:
            emit({"event": "epoch", "val_loss": loss, "extra_field": 1})
            if stop_pending():
                break
        emit({"event": "trained"})
    elif cmd == "evaluate":
        if mode == "oom" or (mode == "oom-high" and msg["config"].get("x", 0.0) > 0.5):
            emit({"event": "oom"})
        elif mode == "error":
            emit({"event": "error", "message": "boom"})
        elif mode == "malformed":
            emit("this is not json")
        elif mode == "unknown":
            emit({"event": "celebrate"})
        elif mode == "hang":
            time.sleep(60)
        elif mode == "die":
            sys.exit(1)
        else:
            perf = float(msg["config"].get("perf", msg["config"].get("x", 0.9)))
            emit({"event": "evaluated", "performance": perf, "samples": 10000,
                  "metadata": {"params": 123, "ignored": None}, "unknown_field": "x"})
