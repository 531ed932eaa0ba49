# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the loops in ``_pykernels``.

Operation order mirrors the Python versions so results match bit for bit.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def propagate_potential(ceff, cluster, double vs, double decay, double v0):
    cdef double[:, ::1] cap = np.ascontiguousarray(ceff, dtype=np.float64)
    cdef long long[:, ::1] cl = np.ascontiguousarray(cluster, dtype=np.int64)
    cdef Py_ssize_t n_agents = cap.shape[0]
    cdef Py_ssize_t n = cap.shape[1]
    out_arr = np.empty((n_agents, n), dtype=np.float64)
    if n == 0:
        return out_arr
    cdef double[:, ::1] out = out_arr
    cdef double[::1] v = np.full(n_agents, v0, dtype=np.float64)
    cdef double[::1] prev = np.empty(n_agents, dtype=np.float64)
    cdef double[::1] q = np.zeros(n_agents, dtype=np.float64)
    cdef double[::1] c = np.zeros(n_agents, dtype=np.float64)
    cdef Py_ssize_t a, k
    cdef long long g
    for a in range(n_agents):
        prev[a] = cap[a, 0]
    for k in range(n):
        for a in range(n_agents):
            v[a] = vs + (v[a] - vs) * decay
            q[a] = 0.0
            c[a] = 0.0
        for a in range(n_agents):
            g = cl[a, k]
            q[g] += prev[a] * v[a]
            c[g] += cap[a, k]
        for a in range(n_agents):
            g = cl[a, k]
            v[a] = q[g] / c[g]
            out[a, k] = v[a]
            prev[a] = cap[a, k]
    return out_arr


def window_majority(codes, valid, starts, Py_ssize_t length):
    cdef long long[::1] cd = np.ascontiguousarray(codes, dtype=np.int64)
    cdef unsigned char[::1] ok = np.ascontiguousarray(valid, dtype=np.uint8)
    cdef long long[::1] st = np.ascontiguousarray(starts, dtype=np.int64)
    cdef Py_ssize_t m = st.shape[0]
    cdef long long n_codes = 1
    cdef Py_ssize_t i, w, s
    for i in range(cd.shape[0]):
        if cd[i] + 1 > n_codes:
            n_codes = cd[i] + 1
    maj_arr = np.empty(m, dtype=np.int64)
    cnt_arr = np.empty(m, dtype=np.int64)
    tie_arr = np.zeros(m, dtype=np.uint8)
    bad_arr = np.zeros(m, dtype=np.uint8)
    cdef long long[::1] maj = maj_arr
    cdef long long[::1] cnt = cnt_arr
    cdef unsigned char[::1] tie = tie_arr
    cdef unsigned char[::1] bad = bad_arr
    cdef long long[::1] counts = np.zeros(n_codes, dtype=np.int64)
    cdef long long[::1] first = np.zeros(n_codes, dtype=np.int64)
    cdef long long code, best, best_first, n_best
    for w in range(m):
        s = st[w]
        for i in range(s, s + length):
            code = cd[i]
            if counts[code] == 0:
                first[code] = i
            counts[code] += 1
            if ok[i] == 0:
                bad[w] = 1
        best = -1
        best_first = 0
        n_best = 0
        for i in range(s, s + length):
            code = cd[i]
            if counts[code] > 0 and first[code] == i:
                if counts[code] > best:
                    best = counts[code]
                    best_first = code
                    n_best = 1
                elif counts[code] == best:
                    n_best += 1
        maj[w] = best_first
        cnt[w] = best
        tie[w] = 1 if n_best > 1 else 0
        for i in range(s, s + length):
            counts[cd[i]] = 0
    return maj_arr, cnt_arr, tie_arr.astype(bool), bad_arr.astype(bool)


def soft_vote(probas, Py_ssize_t radius):
    cdef double[:, ::1] p = np.ascontiguousarray(probas, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t k = p.shape[1] if p.ndim == 2 else 0
    out_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef double[::1] acc = np.zeros(k, dtype=np.float64)
    cdef Py_ssize_t t, j, col, lo, hi, arg
    cdef double best, val, size
    for t in range(n):
        lo = t - radius if t > radius else 0
        hi = t + radius + 1 if t + radius + 1 < n else n
        for col in range(k):
            acc[col] = p[lo, col]
        for j in range(lo + 1, hi):
            for col in range(k):
                acc[col] += p[j, col]
        size = <double>(hi - lo)
        arg = 0
        best = acc[0] / size
        for col in range(1, k):
            val = acc[col] / size
            if val > best:
                best = val
                arg = col
        out[t] = arg
    return out_arr
