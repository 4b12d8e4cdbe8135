# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled growth and urn kernels; see ``_pykernels`` for the algorithm."""

import numpy as np
from libc.stdint cimport int64_t, uint64_t

cdef extern from *:
    """
    typedef unsigned __int128 urn_u128;
    static inline int64_t urn_mulhi(uint64_t r, uint64_t k) {
        return (int64_t)(((urn_u128)r * (urn_u128)k) >> 64);
    }
    """
    int64_t urn_mulhi(uint64_t r, uint64_t k) nogil

ctypedef int64_t i64

cdef enum:
    MAXAFF = 96


cdef inline int _nbrs(i64[::1] P, i64[::1] L, i64[::1] R, i64 v, i64* out) noexcept nogil:
    cdef int k = 0
    if P[v] >= 0:
        out[k] = P[v]
        k += 1
    if L[v] >= 0:
        out[k] = L[v]
        k += 1
    if R[v] >= 0:
        out[k] = R[v]
        k += 1
    return k


cdef inline bint _is_cherry_vertex(i64[::1] P, i64[::1] L, i64[::1] R, i64[::1] Lab,
                                   i64 z, i64 excl) noexcept nogil:
    cdef i64 nb[3]
    cdef int k, i, cnt = 0
    if Lab[z] > 0:
        return False
    k = _nbrs(P, L, R, z, nb)
    for i in range(k):
        if nb[i] == excl:
            continue
        if Lab[nb[i]] <= 0:
            return False
        cnt += 1
    return cnt == 2


cdef inline bint _has_leaf_nbr(i64[::1] P, i64[::1] L, i64[::1] R, i64[::1] Lab,
                               i64 o, i64 excl) noexcept nogil:
    cdef i64 nb[3]
    cdef int k, i
    k = _nbrs(P, L, R, o, nb)
    for i in range(k):
        if nb[i] != excl and Lab[nb[i]] > 0:
            return True
    return False


cdef int _edge_type(i64[::1] P, i64[::1] L, i64[::1] R, i64[::1] Lab, i64 y) noexcept nogil:
    cdef i64 p = P[y]
    cdef i64 x, v, partner, w
    cdef i64 nb[3]
    cdef i64 others[3]
    cdef int k, i, no = 0
    if Lab[y] > 0:
        x = y
        v = p
    elif Lab[p] > 0:
        x = p
        v = y
    else:
        if _is_cherry_vertex(P, L, R, Lab, y, p) and not _has_leaf_nbr(P, L, R, Lab, p, y):
            return 5
        if _is_cherry_vertex(P, L, R, Lab, p, y) and not _has_leaf_nbr(P, L, R, Lab, y, p):
            return 5
        return 6
    k = _nbrs(P, L, R, v, nb)
    for i in range(k):
        if nb[i] != x:
            others[no] = nb[i]
            no += 1
    partner = -1
    for i in range(no):
        if Lab[others[i]] > 0:
            partner = others[i]
            break
    if partner >= 0:
        for i in range(no):
            w = others[i]
            if w != partner:
                if Lab[w] <= 0 and _has_leaf_nbr(P, L, R, Lab, w, v):
                    return 1
        return 2
    for i in range(no):
        if _is_cherry_vertex(P, L, R, Lab, others[i], v):
            return 3
    return 4


cdef int _affected(i64[::1] P, i64[::1] L, i64[::1] R, i64 u, i64 c, i64* edges) noexcept nogil:
    cdef i64 ball[MAXAFF]
    cdef i64 nb[3]
    cdef int nball = 2, lo = 0, hi = 2, rnd, i, j, k, m, ne = 0
    cdef i64 v, q, e
    cdef bint found
    ball[0] = u
    ball[1] = c
    for rnd in range(2):
        for i in range(lo, hi):
            k = _nbrs(P, L, R, ball[i], nb)
            for j in range(k):
                q = nb[j]
                found = False
                for m in range(nball):
                    if ball[m] == q:
                        found = True
                        break
                if not found:
                    ball[nball] = q
                    nball += 1
        lo = hi
        hi = nball
    # sort the ball so the visiting order matches the Python kernel
    for i in range(1, nball):
        v = ball[i]
        j = i - 1
        while j >= 0 and ball[j] > v:
            ball[j + 1] = ball[j]
            j -= 1
        ball[j + 1] = v
    for i in range(nball):
        v = ball[i]
        nb[0] = v
        nb[1] = L[v]
        nb[2] = R[v]
        for j in range(3):
            e = nb[j]
            if e <= 0:
                continue
            found = False
            for m in range(ne):
                if edges[m] == e:
                    found = True
                    break
            if not found:
                edges[ne] = e
                ne += 1
    return ne


cdef i64 _grow(i64[::1] P, i64[::1] L, i64[::1] R, i64[::1] Lab, i64 n_nodes,
               i64[::1] pend, i64[::1] ppos, i64* n_pend_io, i64[::1] cnt, bint pda,
               i64 next_label, const uint64_t[::1] randoms, i64[::1] te, i64[::1] tt,
               bint record) noexcept nogil:
    cdef i64 aff[MAXAFF]
    cdef i64 n_pend = n_pend_io[0]
    cdef Py_ssize_t step, nsteps = randoms.shape[0]
    cdef i64 y, u, w, x, kpos
    cdef int t, na, i
    for step in range(nsteps):
        if pda:
            y = 1 + urn_mulhi(randoms[step], <uint64_t>(n_nodes - 1))
        else:
            y = pend[urn_mulhi(randoms[step], <uint64_t>n_pend)]
        t = _edge_type(P, L, R, Lab, y)
        if record:
            te[step] = y
            tt[step] = t
        u = P[y]
        na = _affected(P, L, R, u, y, aff)
        for i in range(na):
            cnt[_edge_type(P, L, R, Lab, aff[i]) - 1] -= 1
        w = n_nodes
        x = w + 1
        if L[u] == y:
            L[u] = w
        else:
            R[u] = w
        P[y] = w
        P[w] = u
        L[w] = y
        R[w] = x
        Lab[w] = 0
        P[x] = w
        L[x] = -1
        R[x] = -1
        Lab[x] = next_label
        next_label += 1
        n_nodes += 2
        if Lab[u] > 0:
            kpos = ppos[y]
            pend[kpos] = w
            ppos[w] = kpos
            ppos[y] = -1
        pend[n_pend] = x
        ppos[x] = n_pend
        n_pend += 1
        for i in range(na):
            cnt[_edge_type(P, L, R, Lab, aff[i]) - 1] += 1
        cnt[_edge_type(P, L, R, Lab, w) - 1] += 1
        cnt[_edge_type(P, L, R, Lab, x) - 1] += 1
    n_pend_io[0] = n_pend
    return n_nodes


def edge_type(i64[::1] parent, i64[::1] left, i64[::1] right, i64[::1] label, i64 y):
    return _edge_type(parent, left, right, label, y)


def full_local_counts(i64[::1] parent, i64[::1] left, i64[::1] right, i64[::1] label,
                      i64 n_nodes, i64[::1] counts):
    cdef i64 e
    for e in range(6):
        counts[e] = 0
    for e in range(1, n_nodes):
        counts[_edge_type(parent, left, right, label, e) - 1] += 1


def grow(i64[::1] parent, i64[::1] left, i64[::1] right, i64[::1] label, i64 n_nodes,
         i64[::1] pend, i64[::1] ppos, i64 n_pend, i64[::1] counts, bint pda,
         i64 next_label, const uint64_t[::1] randoms, i64[::1] trace_edge,
         i64[::1] trace_type):
    cdef bint record = trace_edge.shape[0] > 0
    cdef i64 np_io = n_pend
    cdef i64 nn
    with nogil:
        nn = _grow(parent, left, right, label, n_nodes, pend, ppos, &np_io, counts, pda,
                   next_label, randoms, trace_edge, trace_type, record)
    return nn, np_io


def simulate_batch(i64[::1] parent0, i64[::1] left0, i64[::1] right0, i64[::1] label0,
                   i64 n_nodes0, i64[::1] pend0, i64 n_pend0, i64[::1] counts0,
                   bint pda, i64 next_label, i64 capacity,
                   const uint64_t[:, ::1] randoms, i64[:, ::1] out):
    cdef i64[::1] P = np.full(capacity, -1, dtype=np.int64)
    cdef i64[::1] L = np.full(capacity, -1, dtype=np.int64)
    cdef i64[::1] R = np.full(capacity, -1, dtype=np.int64)
    cdef i64[::1] Lab = np.zeros(capacity, dtype=np.int64)
    cdef i64[::1] pend = np.zeros(capacity, dtype=np.int64)
    cdef i64[::1] ppos = np.full(capacity, -1, dtype=np.int64)
    cdef i64[::1] ppos0 = np.full(capacity, -1, dtype=np.int64)
    cdef i64[::1] cnt = np.zeros(6, dtype=np.int64)
    cdef i64[::1] empty = np.zeros(0, dtype=np.int64)
    cdef Py_ssize_t rep, i, nrep = randoms.shape[0]
    cdef i64 np_io
    for i in range(n_pend0):
        ppos0[pend0[i]] = i
    with nogil:
        for rep in range(nrep):
            for i in range(capacity):
                P[i] = -1
                L[i] = -1
                R[i] = -1
                Lab[i] = 0
                ppos[i] = ppos0[i]
            for i in range(n_nodes0):
                P[i] = parent0[i]
                L[i] = left0[i]
                R[i] = right0[i]
                Lab[i] = label0[i]
            for i in range(n_pend0):
                pend[i] = pend0[i]
            for i in range(6):
                cnt[i] = counts0[i]
            np_io = n_pend0
            _grow(P, L, R, Lab, n_nodes0, pend, ppos, &np_io, cnt, pda, next_label,
                  randoms[rep], empty, empty, False)
            for i in range(6):
                out[rep, i] = cnt[i]


def urn_run(i64[::1] counts, i64[:, ::1] Rm, const uint64_t[::1] randoms,
            i64[:, ::1] traj, i64[::1] drawn):
    cdef Py_ssize_t d = counts.shape[0], step, nsteps = randoms.shape[0], j
    cdef i64 t, idx, acc
    cdef Py_ssize_t i
    cdef bint bad
    cdef i64 status = -1
    for j in range(d):
        traj[0, j] = counts[j]
    with nogil:
        for step in range(nsteps):
            t = 0
            for j in range(d):
                t += traj[step, j]
            idx = urn_mulhi(randoms[step], <uint64_t>t)
            i = 0
            acc = traj[step, 0]
            while acc <= idx:
                i += 1
                acc += traj[step, i]
            bad = False
            for j in range(d):
                traj[step + 1, j] = traj[step, j] + Rm[i, j]
                if traj[step + 1, j] < 0:
                    bad = True
            drawn[step] = i
            if bad:
                status = step + 1
                break
    return status
