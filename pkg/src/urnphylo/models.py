"""YHK and PDA tree-growth processes.

Both processes start from a seed tree and add taxa ``max_label+1, ...`` in
insertion order.  YHK attaches each new leaf to a uniformly chosen pendant
edge, PDA to a uniformly chosen edge.  The statistics studied here do not
depend on taxon labels, so the random relabelling step of the YHK
definition is omitted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import rng as _rng
from ._backend import get_kernels
from .tree import PhyloTree, TreeError, classify_all_edges
from .urn import PDA_MATRIX, YHK_MATRIX

__all__ = [
    "ProcessKind",
    "GrowthTrace",
    "yhk_step",
    "pda_step",
    "generate",
    "edge_type_delta",
    "arena_arrays",
    "InvalidRangeError",
    "read_traces",
    "terminal_counts",
]

MODELS = ("yhk", "pda")


class InvalidRangeError(TreeError):
    pass


@dataclass(frozen=True)
class ProcessKind:
    model: str
    rooted: bool = True

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")

    @property
    def pda(self) -> bool:
        return self.model == "pda"

    @property
    def name(self) -> str:
        return f"{self.model}-{'rooted' if self.rooted else 'unrooted'}"

    @classmethod
    def parse(cls, text: str) -> "ProcessKind":
        model, _, root = text.partition("-")
        return cls(model, root != "unrooted")


def edge_type_delta(edge_type: int, model: str = "full") -> tuple[int, ...]:
    """Change in the type vector caused by attaching to an edge of ``edge_type``.

    ``model="pendant"`` gives the 4-vector change under YHK growth and
    ``model="full"`` the 6-vector change under PDA growth.
    """
    if model == "pendant":
        matrix, d = YHK_MATRIX, 4
    elif model == "full":
        matrix, d = PDA_MATRIX, 6
    else:
        raise ValueError("model must be 'pendant' or 'full'")
    if not 1 <= edge_type <= d:
        raise IndexError(f"edge type {edge_type} out of range 1..{d}")
    return tuple(int(x) for x in matrix[edge_type - 1])


def _step(tree: PhyloTree, stream: np.random.Generator, pendant_only: bool):
    word = _rng.raw_words(stream, 1)[0]
    edges = tree.pendant_edges() if pendant_only else list(tree.edges())
    edge = edges[_rng.choose(word, len(edges))]
    out = tree.copy()
    out.attach(edge, out.max_label() + 1)
    return out, tree.edge_ref(edge)


def yhk_step(tree: PhyloTree, stream: np.random.Generator):
    """One YHK step: returns the grown tree and the edge (of ``tree``) chosen."""
    return _step(tree, stream, pendant_only=True)


def pda_step(tree: PhyloTree, stream: np.random.Generator):
    """One PDA step: returns the grown tree and the edge (of ``tree``) chosen."""
    return _step(tree, stream, pendant_only=False)


@dataclass
class Arena:
    parent: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray
    n_nodes: int
    pend: np.ndarray
    ppos: np.ndarray
    n_pend: int
    counts: np.ndarray
    next_label: int
    rooted: bool

    def tree(self) -> PhyloTree:
        k = self.n_nodes
        return PhyloTree(
            self.parent[:k].tolist(),
            self.left[:k].tolist(),
            self.right[:k].tolist(),
            self.label[:k].tolist(),
            self.rooted,
        )


def arena_arrays(tree: PhyloTree, capacity: int | None = None, backend=None) -> Arena:
    """Copy ``tree`` into int64 work arrays with room for ``capacity`` nodes."""
    m = tree.n_nodes
    cap = max(capacity or m, m)
    parent = np.full(cap, -1, dtype=np.int64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    label = np.zeros(cap, dtype=np.int64)
    parent[:m] = tree.parent
    left[:m] = tree.left
    right[:m] = tree.right
    label[:m] = tree.label
    pend = np.zeros(cap, dtype=np.int64)
    ppos = np.full(cap, -1, dtype=np.int64)
    pl = tree.pendant_edges()
    pend[: len(pl)] = pl
    ppos[pl] = np.arange(len(pl))
    counts = np.zeros(6, dtype=np.int64)
    get_kernels(backend).full_local_counts(parent, left, right, label, m, counts)
    return Arena(parent, left, right, label, m, pend, ppos, len(pl), counts,
                 tree.max_label() + 1, tree.rooted)


def _check_seed(kind: ProcessKind, seed_tree: PhyloTree, n: int) -> int:
    m = seed_tree.leaf_count
    if seed_tree.rooted != kind.rooted:
        raise InvalidRangeError(
            f"{kind.name} process needs a {'rooted' if kind.rooted else 'unrooted'} seed tree"
        )
    if kind.rooted and m < 2:
        raise InvalidRangeError("rooted seed tree needs at least 2 leaves")
    if not kind.rooted and m < 3:
        raise InvalidRangeError("unrooted seed tree needs at least 3 leaves")
    if m > n:
        raise InvalidRangeError(f"seed tree has {m} leaves, more than the target n={n}")
    return m


@dataclass
class GrowthTrace:
    """Seed tree plus the edge chosen (and its type) at every step.

    ``types[k]`` is 0 for steps taken while an unrooted tree had fewer than
    six leaves, where edge types are undefined.
    """

    kind: ProcessKind
    seed_tree: PhyloTree
    edges: list[int]
    types: list[int]
    n: int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.edges)

    def trees(self) -> Iterator[PhyloTree]:
        """Yield the seed tree and every intermediate tree, in order."""
        tree = self.seed_tree.copy()
        yield tree.copy()
        label = tree.max_label() + 1
        for e in self.edges:
            tree.attach(int(e), label)
            label += 1
            yield tree.copy()

    def replay(self) -> PhyloTree:
        tree = self.seed_tree.copy()
        label = tree.max_label() + 1
        for e in self.edges:
            tree.attach(int(e), label)
            label += 1
        return tree

    def to_jsonl(self) -> str:
        t = self.seed_tree
        header = {
            "kind": self.kind.name,
            "n": self.n,
            "seed_tree": {
                "parent": t.parent,
                "left": t.left,
                "right": t.right,
                "label": t.label,
                "rooted": t.rooted,
            },
            "meta": self.meta,
        }
        lines = [json.dumps(header)]
        lines += [
            json.dumps({"step": k, "edge": int(e), "type": int(ty)})
            for k, (e, ty) in enumerate(zip(self.edges, self.types))
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "GrowthTrace":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        head = rows[0]
        st = head["seed_tree"]
        seed = PhyloTree(st["parent"], st["left"], st["right"], st["label"], st["rooted"])
        steps = sorted(rows[1:], key=lambda r: r["step"])
        return cls(
            ProcessKind.parse(head["kind"]),
            seed,
            [r["edge"] for r in steps],
            [r["type"] for r in steps],
            head["n"],
            head.get("meta", {}),
        )


def read_traces(text: str) -> list[GrowthTrace]:
    """Parse several concatenated :meth:`GrowthTrace.to_jsonl` blocks."""
    blocks: list[list[str]] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if "step" not in json.loads(line):
            blocks.append([])
        if not blocks:
            raise ValueError("trace data must start with a header line")
        blocks[-1].append(line)
    return [GrowthTrace.from_jsonl("\n".join(b)) for b in blocks]


def generate(kind: ProcessKind, seed_tree: PhyloTree, n: int, rng_seed: int,
             replicate_id: int = 0, record: bool = True, backend: str | None = None,
             check: bool = False):
    """Grow ``seed_tree`` to ``n`` leaves under ``kind``.

    Returns ``(tree, trace)`` where ``trace`` is ``None`` when ``record`` is
    false.  With ``check=True`` the incrementally maintained type counts are
    compared against a full reclassification of the final tree.
    """
    if isinstance(kind, str):
        kind = ProcessKind.parse(kind)
    m = _check_seed(kind, seed_tree, n)
    steps = n - m
    k = get_kernels(backend)
    arena = arena_arrays(seed_tree, seed_tree.n_nodes + 2 * steps, backend)
    words = _rng.raw_words(_rng.make_stream(rng_seed, replicate_id), steps)
    te = np.zeros(steps if record else 0, dtype=np.int64)
    tt = np.zeros(steps if record else 0, dtype=np.int64)
    arena.n_nodes, arena.n_pend = k.grow(
        arena.parent, arena.left, arena.right, arena.label, arena.n_nodes,
        arena.pend, arena.ppos, arena.n_pend, arena.counts, kind.pda,
        arena.next_label, words, te, tt,
    )
    tree = arena.tree()
    if check and (kind.rooted or n >= 6):
        full = classify_all_edges(tree)
        if tuple(int(c) for c in arena.counts) != full:
            raise AssertionError(
                f"incremental counts {arena.counts.tolist()} != recount {full}"
            )
    trace = None
    if record:
        types = tt.tolist()
        if not kind.rooted:
            for s in range(steps):
                if m + s < 6:
                    types[s] = 0
        trace = GrowthTrace(kind, seed_tree.copy(), te.tolist(), types, n,
                            {**_rng.metadata(rng_seed), "replicate_id": replicate_id,
                             "final_counts": arena.counts.tolist()})
    return tree, trace


def terminal_counts(kind: ProcessKind, seed_tree: PhyloTree, n: int, rng_seed: int,
                    replicate_id: int = 0, backend: str | None = None) -> tuple[int, ...]:
    """Six-type edge counts of one terminal tree, without building a trace."""
    if isinstance(kind, str):
        kind = ProcessKind.parse(kind)
    m = _check_seed(kind, seed_tree, n)
    k = get_kernels(backend)
    arena = arena_arrays(seed_tree, seed_tree.n_nodes + 2 * (n - m), backend)
    words = _rng.raw_words(_rng.make_stream(rng_seed, replicate_id), n - m)
    empty = np.zeros(0, dtype=np.int64)
    k.grow(arena.parent, arena.left, arena.right, arena.label, arena.n_nodes,
           arena.pend, arena.ppos, arena.n_pend, arena.counts, kind.pda,
           arena.next_label, words, empty, empty)
    return tuple(int(c) for c in arena.counts)
