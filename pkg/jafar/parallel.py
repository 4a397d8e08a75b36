"""
Thread-parallel map used by per-view and per-sample work
"""

import os

from joblib import Parallel, delayed

THREADS_ENV = "JAFAR_THREADS"


def default_threads():
    value = os.environ.get(THREADS_ENV)
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


def run_parallel(fn, items, n_jobs=1):
    """Apply fn to each argument tuple; results keep input order"""
    items = list(items)
    if n_jobs == 1 or len(items) < 2:
        return [fn(*args) for args in items]
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fn)(*args) for args in items)
