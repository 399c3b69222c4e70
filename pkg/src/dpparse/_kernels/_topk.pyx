# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Parallel exact top-k selection over dense squared-distance blocks.

Each row is scanned once while a bounded max-heap keeps the k smallest
entries under the total order (distance, column index).  Rows are
independent, so the result is bit-identical for any thread count.
"""

from cython.parallel cimport prange


cdef inline bint _after(double d1, long long i1, double d2, long long i2) noexcept nogil:
    # True when (d1, i1) sorts after (d2, i2); index breaks distance ties.
    if d1 != d2:
        return d1 > d2
    return i1 > i2


cdef inline void _sift_up(double* hd, long long* hi, int pos) noexcept nogil:
    cdef int parent
    cdef double d = hd[pos]
    cdef long long ix = hi[pos]
    while pos > 0:
        parent = (pos - 1) >> 1
        if _after(d, ix, hd[parent], hi[parent]):
            hd[pos] = hd[parent]
            hi[pos] = hi[parent]
            pos = parent
        else:
            break
    hd[pos] = d
    hi[pos] = ix


cdef inline void _sift_down(double* hd, long long* hi, int size, int pos) noexcept nogil:
    cdef int child
    cdef double d = hd[pos]
    cdef long long ix = hi[pos]
    while True:
        child = 2 * pos + 1
        if child >= size:
            break
        if child + 1 < size and _after(hd[child + 1], hi[child + 1], hd[child], hi[child]):
            child += 1
        if _after(d, ix, hd[child], hi[child]):
            break
        hd[pos] = hd[child]
        hi[pos] = hi[child]
        pos = child
    hd[pos] = d
    hi[pos] = ix


cdef void _select_row(const double* row, Py_ssize_t n, int k,
                      long long* oi, double* od) noexcept nogil:
    # The output slices double as heap storage; root holds the worst kept entry.
    cdef int size = 0
    cdef int s
    cdef Py_ssize_t j
    cdef double tmp_d
    cdef long long tmp_i
    for j in range(n):
        if size < k:
            od[size] = row[j]
            oi[size] = j
            size += 1
            _sift_up(od, oi, size - 1)
        elif _after(od[0], oi[0], row[j], j):
            od[0] = row[j]
            oi[0] = j
            _sift_down(od, oi, k, 0)
    # Heap-sort in place: repeatedly move the current maximum to the tail,
    # leaving the row sorted ascending by (distance, index).
    s = size
    while s > 1:
        s -= 1
        tmp_d = od[0]; od[0] = od[s]; od[s] = tmp_d
        tmp_i = oi[0]; oi[0] = oi[s]; oi[s] = tmp_i
        _sift_down(od, oi, s, 0)


def select_topk(const double[:, ::1] dists, long long[:, ::1] out_idx,
                double[:, ::1] out_dist, int k, int num_threads):
    """Fill ``out_idx``/``out_dist`` with the k smallest entries of each row.

    ``k`` must not exceed the row length and the output arrays must be of
    shape ``(n_rows, k)``.  Rows are processed in parallel.
    """
    cdef Py_ssize_t m = dists.shape[0]
    cdef Py_ssize_t n = dists.shape[1]
    cdef Py_ssize_t row
    if k <= 0 or k > n:
        raise ValueError("k must be in [1, n_columns]")
    if out_idx.shape[0] != m or out_idx.shape[1] != k:
        raise ValueError("out_idx shape mismatch")
    if out_dist.shape[0] != m or out_dist.shape[1] != k:
        raise ValueError("out_dist shape mismatch")
    if num_threads < 1:
        num_threads = 1
    for row in prange(m, nogil=True, schedule="static", num_threads=num_threads):
        _select_row(&dists[row, 0], n, k, &out_idx[row, 0], &out_dist[row, 0])
