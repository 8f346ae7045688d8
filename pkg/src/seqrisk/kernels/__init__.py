"""LSTM kernel backend selection.

The compiled Cython kernel is used when it was built; otherwise the
pure-numpy fallback is selected. SEQRISK_KERNEL=numpy|cython|auto overrides.
"""
from __future__ import annotations

import os

from . import _lstm_np

try:
    from . import _lstm_cy
except ImportError:
    _lstm_cy = None

_requested = os.environ.get("SEQRISK_KERNEL", "auto").lower()
if _requested not in ("auto", "numpy", "cython"):
    raise ValueError(f"SEQRISK_KERNEL must be auto|numpy|cython, got {_requested!r}")
if _requested == "cython" and _lstm_cy is None:
    raise ImportError("SEQRISK_KERNEL=cython but the compiled kernel is not built")

if _requested == "numpy" or _lstm_cy is None:
    BACKEND = "numpy"
    lstm_forward = _lstm_np.lstm_forward
    lstm_backward = _lstm_np.lstm_backward
else:
    BACKEND = "cython"
    lstm_forward = _lstm_cy.lstm_forward
    lstm_backward = _lstm_cy.lstm_backward


def backends():
    """Available (name, forward, backward) triples, for tests and benchmarks."""
    out = [("numpy", _lstm_np.lstm_forward, _lstm_np.lstm_backward)]
    if _lstm_cy is not None:
        out.append(("cython", _lstm_cy.lstm_forward, _lstm_cy.lstm_backward))
    return out
