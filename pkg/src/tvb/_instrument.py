"""Process-wide counter of model fits, used to check phase separation."""

import threading

_lock = threading.Lock()
_count = 0


def record_fits(n):
    global _count
    with _lock:
        _count += int(n)


def fit_count():
    """Total number of single-model fits started in this process."""
    return _count
