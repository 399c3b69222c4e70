"""Backend selection for the hot top-k kernel.

The compiled Cython extension is used when available; otherwise (or when
``DPPARSE_NO_NATIVE`` is set to a non-empty value other than "0") a numpy
implementation takes over.  Both honour the same strict (distance, index)
ordering, so swapping backends never changes results.
"""

import os

import numpy as np

_force_fallback = os.environ.get("DPPARSE_NO_NATIVE", "0") not in ("", "0")

if not _force_fallback:
    try:
        from dpparse._kernels._topk import select_topk as _select_topk

        BACKEND = "native"
    except ImportError:
        _force_fallback = True

if _force_fallback:
    from dpparse._kernels.topk_fallback import select_topk as _select_topk

    BACKEND = "numpy"


def topk_select(dists: np.ndarray, k: int, workers: int | None = None):
    """Return the ``k`` smallest entries of each row of ``dists``.

    Results are sorted ascending by (value, column index) per row.  ``dists``
    is destroyed-safe (read-only); output arrays are freshly allocated.
    """
    dists = np.ascontiguousarray(dists, dtype=np.float64)
    m, n = dists.shape
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    out_idx = np.empty((m, k), dtype=np.int64)
    out_dist = np.empty((m, k), dtype=np.float64)
    threads = workers if workers is not None else (os.cpu_count() or 1)
    _select_topk(dists, out_idx, out_dist, k, max(1, int(threads)))
    return out_idx, out_dist
