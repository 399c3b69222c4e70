"""Pure-numpy top-k selection, exact under the (distance, index) order.

``argpartition`` alone is not enough: when several entries tie with the
k-th smallest distance it picks an arbitrary subset, so ties at the cut
are repaired explicitly before the final sort.
"""

import numpy as np


def select_topk(dists, out_idx, out_dist, k, num_threads=1):
    m, n = dists.shape
    if not 1 <= k <= n:
        raise ValueError("k must be in [1, n_columns]")
    for r in range(m):
        row = dists[r]
        if k == n:
            sel = np.arange(n)
        else:
            part = np.argpartition(row, k - 1)[:k]
            kth = row[part].max()
            below = np.flatnonzero(row < kth)
            ties = np.flatnonzero(row == kth)
            sel = np.concatenate([below, ties[: k - below.size]])
        order = np.lexsort((sel, row[sel]))
        sel = sel[order]
        out_idx[r] = sel
        out_dist[r] = row[sel]
