# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: farthest point sampling, radius grouping, and
edge-conditioned message passing.  Selection semantics (tie-breaking,
ordering) match ``_numpy_impl`` exactly; float accumulations agree to
round-off."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline bint _lex_less(double ax, double ay, double az,
                           double bx, double by, double bz) noexcept:
    if ax != bx:
        return ax < bx
    if ay != by:
        return ay < by
    return az < bz


def farthest_point_sample(cnp.ndarray[cnp.float64_t, ndim=2] xyz_arr, Py_ssize_t k):
    cdef double[:, ::1] xyz = np.ascontiguousarray(xyz_arr, dtype=np.float64)
    cdef Py_ssize_t n = xyz.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"cannot sample {k} centroids from {n} points")

    cdef cnp.ndarray[cnp.int64_t, ndim=1] selected = np.empty(k, dtype=np.int64)
    cdef double[::1] min_d2 = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, j, start, nxt
    cdef double dx, dy, dz, d2, best

    start = 0
    for i in range(1, n):
        if _lex_less(xyz[i, 0], xyz[i, 1], xyz[i, 2],
                     xyz[start, 0], xyz[start, 1], xyz[start, 2]):
            start = i
    selected[0] = start
    for i in range(n):
        dx = xyz[i, 0] - xyz[start, 0]
        dy = xyz[i, 1] - xyz[start, 1]
        dz = xyz[i, 2] - xyz[start, 2]
        min_d2[i] = (dx * dx + dy * dy) + dz * dz

    for j in range(1, k):
        best = min_d2[0]
        for i in range(1, n):
            if min_d2[i] > best:
                best = min_d2[i]
        nxt = -1
        for i in range(n):
            if min_d2[i] == best:
                if nxt < 0 or _lex_less(xyz[i, 0], xyz[i, 1], xyz[i, 2],
                                        xyz[nxt, 0], xyz[nxt, 1], xyz[nxt, 2]):
                    nxt = i
        selected[j] = nxt
        for i in range(n):
            dx = xyz[i, 0] - xyz[nxt, 0]
            dy = xyz[i, 1] - xyz[nxt, 1]
            dz = xyz[i, 2] - xyz[nxt, 2]
            d2 = (dx * dx + dy * dy) + dz * dz
            if d2 < min_d2[i]:
                min_d2[i] = d2
    return selected


def ball_group(cnp.ndarray[cnp.float64_t, ndim=2] xyz_arr,
               cnp.ndarray[cnp.float64_t, ndim=2] centroids_arr,
               double radius, Py_ssize_t cap):
    cdef double[:, ::1] xyz = np.ascontiguousarray(xyz_arr, dtype=np.float64)
    cdef double[:, ::1] cen = np.ascontiguousarray(centroids_arr, dtype=np.float64)
    cdef Py_ssize_t n = xyz.shape[0]
    cdef Py_ssize_t m = cen.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] idx = np.full((m, cap), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(m, dtype=np.int64)
    cdef double r2 = radius * radius
    cdef cnp.ndarray[cnp.int64_t, ndim=1] members = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mem_d2 = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t ci, i, j, p, nm, take
    cdef double dx, dy, dz, d2
    cdef cnp.int64_t tmp_i
    cdef double tmp_d
    cdef bint swap

    for ci in range(m):
        nm = 0
        for i in range(n):
            dx = xyz[i, 0] - cen[ci, 0]
            dy = xyz[i, 1] - cen[ci, 1]
            dz = xyz[i, 2] - cen[ci, 2]
            d2 = (dx * dx + dy * dy) + dz * dz
            if d2 <= r2:
                members[nm] = i
                mem_d2[nm] = d2
                nm += 1
        # insertion sort by (d2, x, y, z); member lists are short
        for i in range(1, nm):
            j = i
            while j > 0:
                swap = False
                if mem_d2[j] < mem_d2[j - 1]:
                    swap = True
                elif mem_d2[j] == mem_d2[j - 1]:
                    p = members[j]
                    if _lex_less(xyz[p, 0], xyz[p, 1], xyz[p, 2],
                                 xyz[members[j - 1], 0],
                                 xyz[members[j - 1], 1],
                                 xyz[members[j - 1], 2]):
                        swap = True
                if not swap:
                    break
                tmp_i = members[j]; members[j] = members[j - 1]; members[j - 1] = tmp_i
                tmp_d = mem_d2[j]; mem_d2[j] = mem_d2[j - 1]; mem_d2[j - 1] = tmp_d
                j -= 1
        take = nm if nm < cap else cap
        for i in range(take):
            idx[ci, i] = members[i]
        counts[ci] = take
    return idx, counts


def ecc_forward(cnp.ndarray[cnp.float64_t, ndim=2] h_arr,
                cnp.ndarray[cnp.float64_t, ndim=3] w_arr,
                cnp.ndarray[cnp.int64_t, ndim=1] src_arr,
                cnp.ndarray[cnp.int64_t, ndim=1] dst_arr,
                Py_ssize_t n_nodes):
    cdef double[:, ::1] h = np.ascontiguousarray(h_arr, dtype=np.float64)
    cdef double[:, :, ::1] w = np.ascontiguousarray(w_arr, dtype=np.float64)
    cdef cnp.int64_t[::1] src = np.ascontiguousarray(src_arr, dtype=np.int64)
    cdef cnp.int64_t[::1] dst = np.ascontiguousarray(dst_arr, dtype=np.int64)
    cdef Py_ssize_t n_edges = src.shape[0]
    cdef Py_ssize_t f_in = h.shape[1]
    cdef Py_ssize_t f_out = w.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.zeros((n_nodes, f_out), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] counts_arr = np.zeros(n_nodes, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] counts = counts_arr
    cdef Py_ssize_t e, o, i, s, d
    cdef double acc

    for e in range(n_edges):
        counts[dst[e]] += 1.0
    for e in range(n_edges):
        s = src[e]
        d = dst[e]
        for o in range(f_out):
            acc = 0.0
            for i in range(f_in):
                acc += w[e, o, i] * h[s, i]
            out[d, o] += acc
    for d in range(n_nodes):
        if counts[d] > 0:
            for o in range(f_out):
                out[d, o] /= counts[d]
    return out_arr, counts_arr


def ecc_backward(cnp.ndarray[cnp.float64_t, ndim=2] grad_arr,
                 cnp.ndarray[cnp.float64_t, ndim=2] h_arr,
                 cnp.ndarray[cnp.float64_t, ndim=3] w_arr,
                 cnp.ndarray[cnp.int64_t, ndim=1] src_arr,
                 cnp.ndarray[cnp.int64_t, ndim=1] dst_arr,
                 cnp.ndarray[cnp.float64_t, ndim=1] counts_arr):
    cdef double[:, ::1] grad = np.ascontiguousarray(grad_arr, dtype=np.float64)
    cdef double[:, ::1] h = np.ascontiguousarray(h_arr, dtype=np.float64)
    cdef double[:, :, ::1] w = np.ascontiguousarray(w_arr, dtype=np.float64)
    cdef cnp.int64_t[::1] src = np.ascontiguousarray(src_arr, dtype=np.int64)
    cdef cnp.int64_t[::1] dst = np.ascontiguousarray(dst_arr, dtype=np.int64)
    cdef double[::1] counts = np.ascontiguousarray(counts_arr, dtype=np.float64)
    cdef Py_ssize_t n_edges = src.shape[0]
    cdef Py_ssize_t f_in = h.shape[1]
    cdef Py_ssize_t f_out = w.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gh_arr = np.zeros_like(h_arr)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] gw_arr = np.zeros_like(w_arr)
    cdef double[:, ::1] gh = gh_arr
    cdef double[:, :, ::1] gw = gw_arr
    cdef Py_ssize_t e, o, i, s, d
    cdef double g, scale, acc

    for e in range(n_edges):
        s = src[e]
        d = dst[e]
        scale = counts[d] if counts[d] > 0 else 1.0
        for o in range(f_out):
            g = grad[d, o] / scale
            for i in range(f_in):
                gw[e, o, i] = g * h[s, i]
        for i in range(f_in):
            acc = 0.0
            for o in range(f_out):
                acc += w[e, o, i] * (grad[d, o] / scale)
            gh[s, i] += acc
    return gh_arr, gw_arr
