# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled BM25 accumulation kernel."""

def accumulate(const long long[::1] term_ids,
               const double[::1] idf,
               const long long[::1] offsets,
               const int[::1] post_docs,
               const int[::1] post_tf,
               const double[::1] norm,
               double k1,
               double[::1] scores):
    """Add the BM25 contribution of each query term to ``scores`` in place.

    ``norm[d]`` is k1 * (1 - b + b * len(d) / avgdl). Terms are processed in
    the order given so the per-document summation order is fixed.
    """
    cdef Py_ssize_t i, j, t, d
    cdef double w, tf
    for i in range(term_ids.shape[0]):
        t = term_ids[i]
        w = idf[t]
        for j in range(offsets[t], offsets[t + 1]):
            d = post_docs[j]
            tf = post_tf[j]
            scores[d] += w * (tf * (k1 + 1.0)) / (tf + norm[d])
