"""Pure-Python growth and urn kernels.

Signature-compatible with the compiled ``_ckernels`` module and bit-identical
to it given the same raw random words.  Arena arrays follow the layout of
:class:`urnphylo.tree.PhyloTree` (node 0 is the arena root, edges are named
by their child end).

Edge types are computed from the local neighbourhood of an edge:

* pendant edge with leaf ``x`` and inner end ``v``: ``x`` is in a cherry iff
  another neighbour of ``v`` is a leaf; that cherry is dependent iff the
  remaining neighbour of ``v`` has a leaf neighbour of its own.  Otherwise
  ``x`` is in a pitchfork iff a neighbour of ``v`` is a cherry vertex.
* internal edge: type 5 iff one end is a cherry vertex and the other end has
  no leaf neighbour.

An edge type only reads adjacency lists within distance two of the edge, so
after attaching at edge ``(u, c)`` only edges incident to the radius-2 ball
around ``{u, c}`` (plus the two new edges) can change type.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1


def _nbrs(parent, left, right, v):
    out = []
    p = parent[v]
    if p >= 0:
        out.append(p)
    c = left[v]
    if c >= 0:
        out.append(c)
    c = right[v]
    if c >= 0:
        out.append(c)
    return out


def _is_cherry_vertex(parent, left, right, label, z, excl):
    if label[z] > 0:
        return False
    k = 0
    for q in _nbrs(parent, left, right, z):
        if q == excl:
            continue
        if label[q] <= 0:
            return False
        k += 1
    return k == 2


def _has_leaf_nbr(parent, left, right, label, o, excl):
    for q in _nbrs(parent, left, right, o):
        if q != excl and label[q] > 0:
            return True
    return False


def edge_type(parent, left, right, label, y):
    p = parent[y]
    if label[y] > 0:
        x, v = y, p
    elif label[p] > 0:
        x, v = p, y
    else:
        if _is_cherry_vertex(parent, left, right, label, y, p) and not _has_leaf_nbr(
            parent, left, right, label, p, y
        ):
            return 5
        if _is_cherry_vertex(parent, left, right, label, p, y) and not _has_leaf_nbr(
            parent, left, right, label, y, p
        ):
            return 5
        return 6
    others = [o for o in _nbrs(parent, left, right, v) if o != x]
    partner = -1
    for o in others:
        if label[o] > 0:
            partner = o
            break
    if partner >= 0:
        for w in others:
            if w != partner:
                if label[w] <= 0 and _has_leaf_nbr(parent, left, right, label, w, v):
                    return 1
        return 2
    for o in others:
        if _is_cherry_vertex(parent, left, right, label, o, v):
            return 3
    return 4


def _affected(parent, left, right, u, c):
    """Edge ids incident to the radius-2 ball around the adjacent pair u, c."""
    ball = {u, c}
    frontier = [u, c]
    for _ in range(2):
        nxt = []
        for v in frontier:
            for q in _nbrs(parent, left, right, v):
                if q not in ball:
                    ball.add(q)
                    nxt.append(q)
        frontier = nxt
    edges = []
    seen = set()
    for v in sorted(ball):
        for e in (v, left[v], right[v]):
            if e > 0 and e not in seen:
                seen.add(e)
                edges.append(e)
    return edges


def full_local_counts(parent, left, right, label, n_nodes, counts):
    """Fill ``counts[0:6]`` with the edge-type totals of the whole arena."""
    for i in range(6):
        counts[i] = 0
    for e in range(1, n_nodes):
        counts[edge_type(parent, left, right, label, e) - 1] += 1


def _grow_lists(P, L, Rt, Lab, n_nodes, pend, ppos, n_pend, cnt, pda, next_label,
                randoms, trace_edge, trace_type):
    record = len(trace_edge) > 0
    for step in range(len(randoms)):
        r = int(randoms[step])
        if pda:
            y = 1 + ((r * (n_nodes - 1)) >> 64)
        else:
            y = pend[(r * n_pend) >> 64]
        t = edge_type(P, L, Rt, Lab, y)
        if record:
            trace_edge[step] = y
            trace_type[step] = t
        u = P[y]
        aff = _affected(P, L, Rt, u, y)
        for e in aff:
            cnt[edge_type(P, L, Rt, Lab, e) - 1] -= 1
        w = n_nodes
        x = w + 1
        if L[u] == y:
            L[u] = w
        else:
            Rt[u] = w
        P[y] = w
        P[w] = u
        L[w] = y
        Rt[w] = x
        Lab[w] = 0
        P[x] = w
        L[x] = -1
        Rt[x] = -1
        Lab[x] = next_label
        next_label += 1
        n_nodes += 2
        if Lab[u] > 0:
            # edge y was the root leaf's pendant edge; w takes its place
            k = ppos[y]
            pend[k] = w
            ppos[w] = k
            ppos[y] = -1
        pend[n_pend] = x
        ppos[x] = n_pend
        n_pend += 1
        for e in aff:
            cnt[edge_type(P, L, Rt, Lab, e) - 1] += 1
        cnt[edge_type(P, L, Rt, Lab, w) - 1] += 1
        cnt[edge_type(P, L, Rt, Lab, x) - 1] += 1
    return n_nodes, n_pend


def grow(parent, left, right, label, n_nodes, pend, ppos, n_pend, counts, pda,
         next_label, randoms, trace_edge, trace_type):
    """Grow the arena in place, one leaf per raw 64-bit word in ``randoms``.

    All array arguments are int64 numpy arrays with room for the final tree
    (``randoms`` is uint64).  Returns the new ``(n_nodes, n_pend)``.  When
    ``trace_edge`` is non-empty the chosen edge and its type are recorded.
    """
    P, L, Rt, Lab = parent.tolist(), left.tolist(), right.tolist(), label.tolist()
    pl, pp, cnt = pend.tolist(), ppos.tolist(), counts.tolist()
    te = [0] * len(trace_edge)
    tt = [0] * len(trace_type)
    n_nodes, n_pend = _grow_lists(P, L, Rt, Lab, n_nodes, pl, pp, n_pend, cnt,
                                  pda, next_label, randoms.tolist(), te, tt)
    parent[:] = P
    left[:] = L
    right[:] = Rt
    label[:] = Lab
    pend[:] = pl
    ppos[:] = pp
    counts[:] = cnt
    if len(te):
        trace_edge[:] = te
        trace_type[:] = tt
    return n_nodes, n_pend


def simulate_batch(parent0, left0, right0, label0, n_nodes0, pend0, n_pend0,
                   counts0, pda, next_label, capacity, randoms, out):
    """Grow one replicate per row of ``randoms``; write final counts to ``out``."""
    m = n_nodes0
    base = (parent0[:m].tolist(), left0[:m].tolist(), right0[:m].tolist(),
            label0[:m].tolist())
    pad = [-1] * (capacity - m)
    pbase = pend0[:n_pend0].tolist()
    ppos_base = [-1] * capacity
    for k, e in enumerate(pbase):
        ppos_base[e] = k
    c0 = counts0.tolist()
    for rep in range(randoms.shape[0]):
        P = base[0] + pad
        L = base[1] + pad
        Rt = base[2] + pad
        Lab = base[3] + [0] * (capacity - m)
        pend = pbase + [0] * (capacity - n_pend0)
        cnt = list(c0)
        _grow_lists(P, L, Rt, Lab, m, pend, list(ppos_base), n_pend0, cnt, pda,
                    next_label, randoms[rep].tolist(), [], [])
        out[rep, :] = cnt


def urn_run(counts, R, randoms, traj, drawn):
    """Run a balanced urn; ``traj`` has ``len(randoms) + 1`` rows.

    Returns -1 on success, otherwise the 1-based step at which some count
    went negative (``traj`` is filled up to the offending state).
    """
    d = counts.shape[0]
    C = counts.tolist()
    rows = R.tolist()
    traj[0, :] = C
    for step in range(len(randoms)):
        t = 0
        for v in C:
            t += v
        idx = (int(randoms[step]) * t) >> 64
        i = 0
        acc = C[0]
        while acc <= idx:
            i += 1
            acc += C[i]
        row = rows[i]
        bad = False
        for j in range(d):
            C[j] += row[j]
            if C[j] < 0:
                bad = True
        drawn[step] = i
        traj[step + 1, :] = C
        if bad:
            return step + 1
    return -1
