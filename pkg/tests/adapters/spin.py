"""Adapter that burns a fixed amount of CPU work during evaluate."""

import json
import sys

for line in sys.stdin:
    msg = json.loads(line)
    if msg["cmd"] == "train":
        print(json.dumps({"event": "trained"}), flush=True)
    elif msg["cmd"] == "evaluate":
        n = int(msg["config"].get("n", 2_000_000))
        acc = 0
        for i in range(n):
            acc += i * i % 7
        print(json.dumps({"event": "evaluated", "performance": 1.0, "samples": n,
                          "metadata": {"acc": acc}}), flush=True)
