# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled edit-distance kernel."""
from libc.stdlib cimport malloc, free


def levenshtein(str a, str b):
    """Unit-cost insert/delete/substitute distance between two strings."""
    cdef Py_ssize_t n = len(a), m = len(b)
    cdef Py_ssize_t i, j
    cdef Py_ssize_t *prev
    cdef Py_ssize_t *cur
    cdef Py_ssize_t *tmp
    cdef Py_ssize_t cost, best
    cdef Py_UCS4 ca
    if n < m:
        a, b = b, a
        n, m = m, n
    if m == 0:
        return n
    cdef Py_UCS4 *bb = <Py_UCS4 *> malloc(m * sizeof(Py_UCS4))
    prev = <Py_ssize_t *> malloc((m + 1) * sizeof(Py_ssize_t))
    cur = <Py_ssize_t *> malloc((m + 1) * sizeof(Py_ssize_t))
    if bb == NULL or prev == NULL or cur == NULL:
        free(bb)
        free(prev)
        free(cur)
        raise MemoryError()
    try:
        for j in range(m):
            bb[j] = b[j]
        for j in range(m + 1):
            prev[j] = j
        for i in range(1, n + 1):
            ca = a[i - 1]
            cur[0] = i
            for j in range(1, m + 1):
                cost = prev[j - 1] + (0 if ca == bb[j - 1] else 1)
                best = prev[j] + 1
                if cur[j - 1] + 1 < best:
                    best = cur[j - 1] + 1
                if cost < best:
                    best = cost
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
        return prev[m]
    finally:
        free(bb)
        free(prev)
        free(cur)
