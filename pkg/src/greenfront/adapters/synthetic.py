"""Synthetic adapter with a known convex front.

Reads hyperparameter ``x`` in [0, 1] and reports ``performance = x`` and
metadata ``f_e = 1 - x**2``. Run it as
``python -m greenfront.adapters.synthetic``.
"""

from greenfront.adapters.protocol import serve


def evaluate(config):
    x = float(config["x"])
    return x, 1000, {"f_e": 1.0 - x * x}


if __name__ == "__main__":
    serve(evaluate=evaluate)
