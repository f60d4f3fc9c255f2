# distutils: language = c++
# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

scan_attempts
    Walk a batch of rejection-sampling attempts over pre-drawn uniforms and
    stop at the first geometric matrix that lands in Sigma(R, C).
dp_layers
    Column-by-column table-count DP over sorted residual row vectors, with
    counts held as fixed-width little-endian arrays of 64-bit limbs (the DP
    only ever adds counts, so carries are the whole arithmetic).

Both have pure-Python twins in ``_fallback`` that return identical results.
"""

import numpy as np

from libc.math cimport floor, log
from libc.stdint cimport int64_t, uint64_t
from libcpp.algorithm cimport sort as cpp_sort
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector

from .errors import BudgetExceeded
from ._fallback import check_work


def scan_attempts(const double[:, ::1] q, const double[:, ::1] log_q,
                  const int64_t[::1] rows, const int64_t[::1] cols,
                  const double[::1] u, int64_t[:, ::1] out):
    """Index of the first accepted attempt in ``u`` (or -1).

    Attempt ``a`` uses ``u[a*m*n:(a+1)*m*n]`` in row-major order; an entry is
    0 when ``u > q`` and ``floor(ln u / ln q)`` otherwise. The accepted matrix
    is written to ``out``.
    """
    cdef Py_ssize_t m = q.shape[0], n = q.shape[1]
    cdef Py_ssize_t mn = m * n
    cdef Py_ssize_t n_att = u.shape[0] // mn
    cdef Py_ssize_t a, i, j, base
    cdef int64_t k, rs
    cdef double uu, kd
    cdef bint ok
    cdef Py_ssize_t found = -1
    cdef vector[int64_t] colsum
    colsum.resize(n)
    with nogil:
        for a in range(n_att):
            base = a * mn
            for j in range(n):
                colsum[j] = 0
            ok = True
            for i in range(m):
                rs = 0
                for j in range(n):
                    uu = u[base + i * n + j]
                    if uu > q[i, j]:
                        k = 0
                    else:
                        kd = floor(log(uu) / log_q[i, j])
                        if kd > rows[i]:
                            ok = False
                            break
                        k = <int64_t>kd
                    rs += k
                    colsum[j] += k
                    if rs > rows[i] or colsum[j] > cols[j]:
                        ok = False
                        break
                    out[i, j] = k
                if not ok or rs != rows[i]:
                    ok = False
                    break
            # rows exact and columns bounded above with equal totals => columns exact
            if ok:
                found = a
                break
    return found


cdef inline uint64_t _pack_sorted(const int64_t* v, int64_t* tmp, int m, uint64_t base) noexcept nogil:
    cdef int a, b
    cdef int64_t x
    cdef uint64_t key = 0
    for a in range(m):
        x = v[a]
        b = a - 1
        while b >= 0 and tmp[b] > x:
            tmp[b + 1] = tmp[b]
            b -= 1
        tmp[b + 1] = x
    for a in range(m - 1, -1, -1):
        key = key * base + <uint64_t>tmp[a]
    return key


cdef inline void _unpack(uint64_t key, int64_t* rho, int m, uint64_t base) noexcept nogil:
    cdef int a
    for a in range(m):
        rho[a] = <int64_t>(key % base)
        key = key // base


cdef void _successors(int i, int m, int64_t rem, const int64_t* rho, const int64_t* suffix,
                      int64_t* v, int64_t* tmp, uint64_t base, vector[uint64_t]& out) noexcept nogil:
    cdef int64_t x, lo, hi
    if i == m - 1:
        if rem <= rho[i]:
            v[i] = rho[i] - rem
            out.push_back(_pack_sorted(v, tmp, m, base))
        return
    lo = rem - suffix[i + 1]
    if lo < 0:
        lo = 0
    hi = rho[i] if rho[i] < rem else rem
    x = lo
    while x <= hi:
        v[i] = rho[i] - x
        _successors(i + 1, m, rem - x, rho, suffix, v, tmp, base, out)
        x += 1


cdef void _expand(uint64_t key, int64_t c, int m, uint64_t base, int64_t* rho, int64_t* suffix,
                  int64_t* v, int64_t* tmp, vector[uint64_t]& out) noexcept nogil:
    cdef int a
    _unpack(key, rho, m, base)
    suffix[m] = 0
    for a in range(m - 1, -1, -1):
        suffix[a] = suffix[a + 1] + rho[a]
    out.clear()
    _successors(0, m, c, rho, suffix, v, tmp, base, out)


def dp_layers(rows_sorted, cols, uint64_t base, int limbs, int64_t budget):
    """Reachable sorted states and their exact counts, layer by layer.

    Returns ``(keys, counts)`` where ``keys[j]`` is the sorted ``uint64``
    array of packed states before column ``j`` (``j = 0..n``) and
    ``counts[j]`` the matching ``(len, limbs)`` ``uint64`` array. A state
    packs its ascending residual vector ``v`` as ``sum_k v[k] * base**k``.
    """
    cdef int64_t[::1] r = np.ascontiguousarray(rows_sorted, dtype=np.int64)
    cdef int64_t[::1] c = np.ascontiguousarray(cols, dtype=np.int64)
    cdef int m = r.shape[0]
    cdef int n = c.shape[0]
    cdef int L = limbs
    cdef vector[vector[uint64_t]] layers
    cdef vector[uint64_t] buf, nxt
    cdef unordered_map[uint64_t, int64_t] index
    cdef vector[int64_t] rho, suffix, v, tmp
    rho.resize(m)
    suffix.resize(m + 1)
    v.resize(m)
    tmp.resize(m)
    cdef int j, a, l
    cdef Py_ssize_t s, e, idx
    cdef int64_t total_states = 1
    cdef uint64_t key, sa, sb, carry
    cdef uint64_t* dst
    cdef uint64_t* src

    layers.resize(n + 1)
    layers[0].push_back(_pack_sorted(&r[0], tmp.data(), m, base))

    for j in range(n):
        check_work(layers[j].size(), m, c[j], budget)
        index.clear()
        nxt.clear()
        with nogil:
            for s in range(<Py_ssize_t>layers[j].size()):
                _expand(layers[j][s], c[j], m, base, rho.data(), suffix.data(), v.data(), tmp.data(), buf)
                for e in range(<Py_ssize_t>buf.size()):
                    key = buf[e]
                    if index.count(key) == 0:
                        index[key] = 0
                        nxt.push_back(key)
            cpp_sort(nxt.begin(), nxt.end())
        total_states += nxt.size()
        if total_states > budget:
            raise BudgetExceeded(total_states, budget)
        layers[j + 1] = nxt

    counts = [None] * (n + 1)
    last = np.zeros((layers[n].size(), L), dtype=np.uint64)
    last[:, 0] = 1
    counts[n] = last
    cdef uint64_t[:, ::1] below, here
    for j in range(n - 1, -1, -1):
        below = counts[j + 1]
        arr = np.zeros((layers[j].size(), L), dtype=np.uint64)
        here = arr
        index.clear()
        for s in range(<Py_ssize_t>layers[j + 1].size()):
            index[layers[j + 1][s]] = s
        with nogil:
            for s in range(<Py_ssize_t>layers[j].size()):
                _expand(layers[j][s], c[j], m, base, rho.data(), suffix.data(), v.data(), tmp.data(), buf)
                dst = &here[s, 0]
                for e in range(<Py_ssize_t>buf.size()):
                    idx = index[buf[e]]
                    src = &below[idx, 0]
                    carry = 0
                    for l in range(L):
                        sa = dst[l] + src[l]
                        sb = sa + carry
                        carry = (sa < dst[l]) | (sb < sa)
                        dst[l] = sb
        counts[j] = arr

    cdef uint64_t[::1] kv
    keys = []
    for j in range(n + 1):
        k_arr = np.empty(layers[j].size(), dtype=np.uint64)
        kv = k_arr
        for s in range(<Py_ssize_t>layers[j].size()):
            kv[s] = layers[j][s]
        keys.append(k_arr)
    return keys, counts
