"""Binary phylogenetic trees stored as an index-addressed node arena.

Layout
------
Node 0 is always the arena root.  For a rooted tree it is the degree-one
root vertex (label 0, one child in ``left``).  An unrooted tree is stored
rooted at one of its leaves: node 0 then carries a positive taxon label and
its single child hangs off ``left``.  In both cases every edge is identified
by the index of its child end, so the edge ids are exactly ``1..n_nodes-1``
and they stay stable under leaf attachment.

Edge types
----------
Pendant edges are typed 1-4 (dependent cherry, independent cherry,
pitchfork-but-not-cherry, independent pendant); internal edges are typed 5
(stem of an independent cherry) or 6 (everything else).  The classifiers in
this module work from the leaf sets of small clusters, directly from the
definitions.  The growth kernels use a separate local-neighbourhood rule set;
the two are cross-checked in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

__all__ = [
    "PhyloTree",
    "EdgeRef",
    "TreeError",
    "InvalidEdgeError",
    "DuplicateTaxonError",
    "ClassificationUndefinedError",
    "TreeTooSmallError",
    "NewickParseError",
    "attach_leaf",
    "detach_leaf",
    "count_cherries",
    "count_pitchforks",
    "classify_pendant_edges",
    "classify_all_edges",
    "unroot",
    "to_newick",
    "from_newick",
    "caterpillar",
    "balanced_tree",
    "builtin_tree",
    "BUILTIN_TREES",
]


class TreeError(ValueError):
    """Base class for tree construction and manipulation errors."""


class InvalidEdgeError(TreeError):
    pass


class DuplicateTaxonError(TreeError):
    pass


class ClassificationUndefinedError(TreeError):
    """Edge-type classification requested on an unrooted tree with < 6 leaves."""


class TreeTooSmallError(TreeError):
    pass


class NewickParseError(TreeError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


@dataclass(frozen=True)
class EdgeRef:
    """An edge named by its child-end node index."""

    node: int
    pendant: bool

    @property
    def kind(self) -> str:
        return "pendant" if self.pendant else "internal"


class PhyloTree:
    """Rooted or unrooted binary phylogenetic tree with integer taxon labels.

    The four parallel lists ``parent``, ``left``, ``right`` and ``label`` hold
    the arena; ``-1`` marks a missing link and label ``0`` marks a non-leaf.
    Construct trees with :func:`from_newick`, :func:`caterpillar`,
    :func:`balanced_tree` or :meth:`two_leaf`, not by filling the lists by hand.
    """

    __slots__ = ("parent", "left", "right", "label", "rooted")

    def __init__(self, parent, left, right, label, rooted: bool = True):
        self.parent = list(parent)
        self.left = list(left)
        self.right = list(right)
        self.label = list(label)
        self.rooted = bool(rooted)

    # -- construction ------------------------------------------------------

    @classmethod
    def two_leaf(cls) -> "PhyloTree":
        """The unique rooted tree on taxa {1, 2}."""
        return cls([-1, 0, 1, 1], [1, 2, -1, -1], [-1, 3, -1, -1], [0, 0, 1, 2])

    def copy(self) -> "PhyloTree":
        return PhyloTree(self.parent, self.left, self.right, self.label, self.rooted)

    # -- basic queries -----------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def leaf_count(self) -> int:
        return sum(1 for x in self.label if x > 0)

    @property
    def n_edges(self) -> int:
        return len(self.parent) - 1

    def is_leaf(self, node: int) -> bool:
        return self.label[node] > 0

    def children(self, node: int) -> list[int]:
        return [c for c in (self.left[node], self.right[node]) if c >= 0]

    def neighbors(self, node: int) -> list[int]:
        nb = [] if self.parent[node] < 0 else [self.parent[node]]
        nb.extend(self.children(node))
        return nb

    def edges(self) -> range:
        return range(1, len(self.parent))

    def is_pendant(self, edge: int) -> bool:
        return self.label[edge] > 0 or self.label[self.parent[edge]] > 0

    def edge_ref(self, edge: int) -> EdgeRef:
        self._check_edge(edge)
        return EdgeRef(edge, self.is_pendant(edge))

    def pendant_edges(self) -> list[int]:
        return [e for e in self.edges() if self.is_pendant(e)]

    def leaves(self) -> list[int]:
        return [i for i, x in enumerate(self.label) if x > 0]

    def labels(self) -> list[int]:
        return sorted(x for x in self.label if x > 0)

    def leaf_node(self, label: int) -> int:
        try:
            return self.label.index(label)
        except ValueError:
            raise TreeError(f"taxon {label} not in tree") from None

    def pendant_edge_of(self, label: int) -> int:
        """Edge id of the pendant edge incident to taxon ``label``."""
        node = self.leaf_node(label)
        return self.left[node] if node == 0 else node

    def max_label(self) -> int:
        return max(self.label)

    def preorder(self) -> list[int]:
        order, stack = [], [0]
        while stack:
            v = stack.pop()
            order.append(v)
            if self.right[v] >= 0:
                stack.append(self.right[v])
            if self.left[v] >= 0:
                stack.append(self.left[v])
        return order

    def _check_edge(self, edge: int) -> None:
        if not isinstance(edge, int) or not 1 <= edge < len(self.parent):
            raise InvalidEdgeError(f"edge {edge!r} does not belong to this tree")

    # -- mutation ----------------------------------------------------------

    def attach(self, edge, label: int) -> tuple[int, int]:
        """Subdivide ``edge`` with a new vertex and hang a new leaf off it.

        Works in place and returns the indices ``(w, leaf)`` of the two new
        nodes.  The edge id ``edge`` now names the lower half of the old edge.
        """
        if isinstance(edge, EdgeRef):
            edge = edge.node
        self._check_edge(edge)
        if label <= 0:
            raise TreeError("taxon labels must be positive integers")
        if label in self.label:
            raise DuplicateTaxonError(f"taxon {label} already present")
        u = self.parent[edge]
        w = len(self.parent)
        x = w + 1
        if self.left[u] == edge:
            self.left[u] = w
        else:
            self.right[u] = w
        self.parent[edge] = w
        self.parent += [u, w]
        self.left += [edge, -1]
        self.right += [x, -1]
        self.label += [0, label]
        return w, x

    # -- comparison --------------------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, PhyloTree):
            return NotImplemented
        return to_newick(self) == to_newick(other)

    def __hash__(self) -> int:
        return hash(to_newick(self))

    def __repr__(self) -> str:
        kind = "rooted" if self.rooted else "unrooted"
        return f"PhyloTree({to_newick(self)!r}, {kind})"

    # -- graph helpers -----------------------------------------------------

    def adjacency(self) -> dict[int, list[int]]:
        """Undirected adjacency of all arena nodes (the rooted root included)."""
        return {v: self.neighbors(v) for v in range(len(self.parent))}


# ---------------------------------------------------------------------------
# Building arenas from undirected graphs
# ---------------------------------------------------------------------------


def _directed_min_labels(adj, labels, start):
    """Smallest leaf label below each node when ``adj`` is hung from ``start``."""
    parent = {start: -1}
    order = [start]
    i = 0
    while i < len(order):
        v = order[i]
        i += 1
        for u in adj[v]:
            if u not in parent:
                parent[u] = v
                order.append(u)
    big = float("inf")
    low = {v: (labels[v] if labels[v] > 0 else big) for v in order}
    for v in reversed(order):
        p = parent[v]
        if p >= 0 and low[v] < low[p]:
            low[p] = low[v]
    return parent, low


def _build_arena(adj, labels, start, rooted: bool) -> PhyloTree:
    """Lay out the graph ``adj`` as an arena hung from node ``start``.

    Children are ordered by smallest descendant label so equal trees get
    identical arenas.
    """
    par, low = _directed_min_labels(adj, labels, start)
    parent, left, right, label = [-1], [-1], [-1], [labels[start]]
    index = {start: 0}
    stack = [start]
    while stack:
        v = stack.pop()
        kids = sorted((u for u in adj[v] if par.get(u) == v), key=low.__getitem__)
        if len(kids) > 2:
            raise TreeError("tree is not binary")
        iv = index[v]
        for slot, u in enumerate(kids):
            iu = len(parent)
            index[u] = iu
            parent.append(iv)
            left.append(-1)
            right.append(-1)
            label.append(labels[u])
            if slot == 0:
                left[iv] = iu
            else:
                right[iv] = iu
        stack.extend(reversed(kids))
    return PhyloTree(parent, left, right, label, rooted)


def _unrooted_from_graph(adj, labels) -> PhyloTree:
    leaves = [v for v in adj if labels[v] > 0]
    start = min(leaves, key=labels.__getitem__)
    return _build_arena(adj, labels, start, rooted=False)


def _canonical(tree: PhyloTree) -> PhyloTree:
    adj = tree.adjacency()
    labels = dict(enumerate(tree.label))
    if tree.rooted:
        return _build_arena(adj, labels, 0, rooted=True)
    return _unrooted_from_graph(adj, labels)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def attach_leaf(tree: PhyloTree, edge, label: int) -> PhyloTree:
    """Return ``T[e; label]`` as a new tree, leaving ``tree`` untouched."""
    out = tree.copy()
    out.attach(edge, label)
    return out


def detach_leaf(tree: PhyloTree, label: int) -> PhyloTree:
    """Delete taxon ``label`` and suppress the resulting degree-two vertex."""
    x = tree.leaf_node(label)
    adj = tree.adjacency()
    labels = dict(enumerate(tree.label))
    (w,) = adj.pop(x)
    adj[w].remove(x)
    if tree.rooted and w == 0:
        raise TreeTooSmallError("cannot detach the only leaf")
    if len(adj[w]) == 2 and not (tree.rooted and w == 0):
        a, b = adj.pop(w)
        adj[a][adj[a].index(w)] = b
        adj[b][adj[b].index(w)] = a
    if tree.rooted:
        return _build_arena(adj, labels, 0, rooted=True)
    return _unrooted_from_graph(adj, labels)


def unroot(tree: PhyloTree) -> PhyloTree:
    """Delete the root vertex and suppress its child (needs >= 3 leaves)."""
    if not tree.rooted:
        raise TreeError("tree is already unrooted")
    if tree.leaf_count < 3:
        raise TreeTooSmallError("unrooting needs at least 3 leaves")
    adj = tree.adjacency()
    labels = dict(enumerate(tree.label))
    c0 = tree.left[0]
    del adj[0]
    a, b = tree.children(c0)
    del adj[c0]
    adj[a][adj[a].index(c0)] = b
    adj[b][adj[b].index(c0)] = a
    return _unrooted_from_graph(adj, labels)


def _below_counts(tree: PhyloTree) -> list[int]:
    lab = tree.label
    below = [1 if x > 0 else 0 for x in lab]
    below[0] = 0
    for v in reversed(tree.preorder()):
        if v:
            below[tree.parent[v]] += below[v]
    return below


def _leaves_under(tree: PhyloTree, node: int) -> frozenset[int]:
    out, stack = [], [node]
    while stack:
        v = stack.pop()
        if tree.label[v] > 0 and v != 0:
            out.append(tree.label[v])
        stack.extend(tree.children(v))
    return frozenset(out)


def _small_sides(tree: PhyloTree):
    """Yield ``(edge, side)`` for every edge side with at most three leaves.

    Rooted trees only contribute the side away from the root.
    """
    n = tree.leaf_count
    below = _below_counts(tree)
    all_leaves = None
    for e in tree.edges():
        b = below[e]
        if b <= 3:
            yield e, _leaves_under(tree, e)
        if not tree.rooted and n - b <= 3:
            if all_leaves is None:
                all_leaves = frozenset(tree.labels())
            yield e, all_leaves - _leaves_under(tree, e)


def _clusters(tree: PhyloTree):
    cherries, pitchforks = set(), set()
    sides = []
    for e, side in _small_sides(tree):
        sides.append((e, side))
        if len(side) == 2:
            cherries.add(side)
        elif len(side) == 3:
            pitchforks.add(side)
    return cherries, pitchforks, sides


def count_cherries(tree: PhyloTree) -> int:
    return len(_clusters(tree)[0])


def count_pitchforks(tree: PhyloTree) -> int:
    return len(_clusters(tree)[1])


def _require_classifiable(tree: PhyloTree) -> None:
    n = tree.leaf_count
    if tree.rooted and n < 2:
        raise ClassificationUndefinedError("rooted classification needs >= 2 leaves")
    if not tree.rooted and n < 6:
        raise ClassificationUndefinedError(
            f"edge types are undefined for unrooted trees with {n} < 6 leaves"
        )


def _edge_types(tree: PhyloTree) -> dict[int, int]:
    cherries, pitchforks, sides = _clusters(tree)
    in_cherry = set().union(*cherries) if cherries else set()
    in_pitchfork = set().union(*pitchforks) if pitchforks else set()
    independent = {c for c in cherries if not any(c < p for p in pitchforks)}
    stems = {e for e, side in sides if side in independent}
    types = {}
    for e in tree.edges():
        if tree.is_pendant(e):
            x = tree.label[e] if tree.label[e] > 0 else tree.label[tree.parent[e]]
            c, p = x in in_cherry, x in in_pitchfork
            types[e] = 1 if (c and p) else 2 if c else 3 if p else 4
        else:
            types[e] = 5 if e in stems else 6
    return types


def edge_types(tree: PhyloTree) -> dict[int, int]:
    """Map every edge id to its type in 1..6."""
    _require_classifiable(tree)
    return _edge_types(tree)


def classify_all_edges(tree: PhyloTree) -> tuple[int, ...]:
    """Counts ``(|E1|, ..., |E6|)`` over all edges of ``tree``."""
    counts = [0] * 6
    for t in edge_types(tree).values():
        counts[t - 1] += 1
    return tuple(counts)


def classify_pendant_edges(tree: PhyloTree) -> tuple[int, ...]:
    """Counts ``(|E1|, ..., |E4|)`` over the pendant edges of ``tree``."""
    return classify_all_edges(tree)[:4]


# ---------------------------------------------------------------------------
# Newick
# ---------------------------------------------------------------------------


def to_newick(tree: PhyloTree) -> str:
    """Canonical Newick: children ordered by their smallest leaf label.

    Unrooted trees are written as a trifurcation at the neighbour of the
    smallest taxon.
    """
    adj = tree.adjacency()
    labels = tree.label
    if tree.rooted:
        if tree.left[0] < 0:
            return ";"
        top, banned = tree.left[0], 0
        if labels[top] > 0:
            return f"{labels[top]};"
        start = top
    else:
        leaf = min(tree.leaves(), key=labels.__getitem__)
        start = adj[leaf][0]
        banned = -1
    par, low = _directed_min_labels(
        {k: [u for u in v if u != banned] for k, v in adj.items() if k != banned},
        dict(enumerate(labels)),
        start,
    )
    text: dict[int, str] = {}
    stack = [(start, False)]
    while stack:
        v, done = stack.pop()
        kids = [u for u in adj[v] if par.get(u) == v]
        if not kids:
            text[v] = str(labels[v])
            continue
        if done:
            kids.sort(key=low.__getitem__)
            text[v] = "(" + ",".join(text.pop(u) for u in kids) + ")"
        else:
            stack.append((v, True))
            stack.extend((u, False) for u in kids)
    return text[start] + ";"


def _parse(text: str):
    """Parse Newick into a nested list structure of ints."""
    pos = 0
    n = len(text)

    def skip():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    stack: list[list] = []
    result = None
    skip()
    if pos >= n:
        raise NewickParseError("empty input", pos)
    expect_item = True
    while pos < n:
        skip()
        if pos >= n:
            break
        ch = text[pos]
        if ch == "(":
            if not expect_item:
                raise NewickParseError("unexpected '('", pos)
            stack.append([])
            pos += 1
        elif ch.isdigit():
            if not expect_item:
                raise NewickParseError("unexpected label", pos)
            start = pos
            while pos < n and text[pos].isdigit():
                pos += 1
            value = int(text[start:pos])
            if value <= 0:
                raise NewickParseError("taxon labels must be positive", start)
            if not stack:
                result = value
            else:
                stack[-1].append(value)
            expect_item = False
        elif ch == ",":
            if expect_item or not stack:
                raise NewickParseError("unexpected ','", pos)
            expect_item = True
            pos += 1
        elif ch == ")":
            if expect_item or not stack:
                raise NewickParseError("unexpected ')'", pos)
            node = stack.pop()
            if len(node) < 2:
                raise NewickParseError("internal node needs at least two children", pos)
            if stack:
                stack[-1].append(node)
            else:
                result = node
            expect_item = False
            pos += 1
        elif ch == ";":
            if stack or result is None:
                raise NewickParseError("unexpected ';'", pos)
            pos += 1
            skip()
            if pos != n:
                raise NewickParseError("trailing characters after ';'", pos)
            return result
        else:
            raise NewickParseError(f"unexpected character {ch!r}", pos)
    raise NewickParseError("missing terminating ';'", pos)


def from_newick(text: str) -> PhyloTree:
    """Parse strict Newick (integer labels, no branch lengths, final ``;``).

    A top-level bifurcation gives a rooted tree, a top-level trifurcation an
    unrooted one.
    """
    nested = _parse(text)
    if isinstance(nested, int):
        raise NewickParseError("a tree needs at least two leaves", 0)
    if len(nested) > 3:
        raise NewickParseError("top-level node has more than three children", 0)
    rooted = len(nested) == 2
    adj: dict[int, list[int]] = {}
    labels: dict[int, int] = {}
    seen: set[int] = set()

    def new(lab: int) -> int:
        k = len(labels)
        labels[k] = lab
        adj[k] = []
        return k

    top = new(0)
    stack = [(nested, top)]
    while stack:
        item, node = stack.pop()
        for child in item:
            if isinstance(child, int):
                if child in seen:
                    raise DuplicateTaxonError(f"taxon {child} appears twice")
                seen.add(child)
                c = new(child)
            else:
                if len(child) != 2:
                    raise NewickParseError("only binary internal nodes are supported", 0)
                c = new(0)
                stack.append((child, c))
            adj[node].append(c)
            adj[c].append(node)
    if rooted:
        root = new(0)
        adj[root].append(top)
        adj[top].append(root)
        return _build_arena(adj, labels, root, rooted=True)
    return _unrooted_from_graph(adj, labels)


# ---------------------------------------------------------------------------
# Named trees
# ---------------------------------------------------------------------------


def caterpillar(n: int, rooted: bool = True) -> PhyloTree:
    """Caterpillar on taxa 1..n."""
    if n < 2:
        raise TreeTooSmallError("need at least 2 leaves")
    text = "(1,2)"
    for k in range(3, n + 1):
        text = f"({text},{k})"
    tree = from_newick(text + ";")
    return unroot(tree) if not rooted else tree


def balanced_tree(depth: int) -> PhyloTree:
    """Fully balanced rooted tree with ``2**depth`` leaves."""
    labels = iter(range(1, 2**depth + 1))

    def build(d):
        if d == 0:
            return str(next(labels))
        return f"({build(d - 1)},{build(d - 1)})"

    return from_newick(build(depth) + ";")


BUILTIN_TREES = {
    "t2": "(1,2);",
    "t3": "((1,2),3);",
    # 7 leaves; attaching taxon 8 to the pendant edge of taxon 1 yields one
    # pitchfork and three cherries.
    "t1": "((((1,2),3),(4,5)),(6,7));",
    "caterpillar6": "(((((1,2),3),4),5),6);",
    "balanced6": "(((1,2),3),((4,5),6));",
    "star3": "(1,2,3);",
    "double_pitchfork6": "(((1,2),3),(4,5),6);",
    "three_cherries6": "((1,2),(3,4),(5,6));",
}


def builtin_tree(source: str) -> PhyloTree:
    """Resolve a built-in name or a Newick string to a tree."""
    source = source.strip()
    if source in BUILTIN_TREES:
        return from_newick(BUILTIN_TREES[source])
    return from_newick(source)


def iter_edges(tree: PhyloTree) -> Iterator[EdgeRef]:
    for e in tree.edges():
        yield EdgeRef(e, tree.is_pendant(e))
