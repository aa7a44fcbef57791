"""Selects the LSTM recurrence backend at import time.

The compiled extension is used when it was built; set
``AVHIGHLIGHT_PURE_PYTHON=1`` to force the numpy fallback.
"""

from __future__ import annotations

import os

from . import _lstm_py

BACKEND = "python"
lstm_forward = _lstm_py.lstm_forward
lstm_backward = _lstm_py.lstm_backward

if os.environ.get("AVHIGHLIGHT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _lstm_kernels
    except ImportError:
        pass
    else:
        BACKEND = "compiled"
        lstm_forward = _lstm_kernels.lstm_forward
        lstm_backward = _lstm_kernels.lstm_backward
