"""Exact finite-n moments of the pitchfork and cherry counts.

Two independent sources:

* closed-form expressions for ``n >= 7`` (:func:`yhk_moments`,
  :func:`pda_moments`);
* exhaustive enumeration of the growth process over tree shapes
  (:func:`enumerate_exact`), in exact rational arithmetic.

``A`` counts pitchforks and ``B`` counts cherries.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

from .tree import (
    ClassificationUndefinedError,
    PhyloTree,
    TreeError,
    builtin_tree,
    classify_all_edges,
    count_cherries,
    count_pitchforks,
)

__all__ = [
    "MomentSet",
    "ExactLaw",
    "OutOfRangeError",
    "EnumerationTooLargeError",
    "yhk_moments",
    "pda_moments",
    "closed_form_moments",
    "enumerate_exact",
    "shape_key",
    "unrooted_initial_split",
]


class OutOfRangeError(ValueError):
    pass


class EnumerationTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class MomentSet:
    n: int
    model: str
    mean_a: Fraction
    mean_b: Fraction
    var_a: Fraction
    var_b: Fraction
    cov_ab: Fraction

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "model": self.model,
            "mean_a": self.mean_a,
            "mean_b": self.mean_b,
            "var_a": self.var_a,
            "var_b": self.var_b,
            "cov_ab": self.cov_ab,
        }

    def same_values(self, other: "MomentSet") -> bool:
        return all(
            getattr(self, f) == getattr(other, f)
            for f in ("mean_a", "mean_b", "var_a", "var_b", "cov_ab")
        )


def _range_guard(n: int) -> None:
    if n < 7:
        raise OutOfRangeError(
            f"closed-form moments hold for n >= 7 (got n={n}); use enumerate_exact for small n"
        )


def yhk_moments(n: int) -> MomentSet:
    """Closed-form YHK moments (rooted), valid for ``n >= 7``."""
    _range_guard(n)
    n = Fraction(n)
    return MomentSet(int(n), "yhk", n / 6, n / 3, 23 * n / 420, 2 * n / 45, -n / 45)


def pda_moments(n: int) -> MomentSet:
    """Closed-form PDA moments (rooted), valid for ``n >= 7``.

    The cherry mean and variance use the ``2n-3`` and ``2n-5`` denominators
    that the exhaustive enumeration confirms; ``Var(A)`` and the covariance
    are expressed through ``Var(B)``.
    """
    _range_guard(n)
    m = Fraction(n)
    mean_a = m * (m - 1) * (m - 2) / (2 * (2 * m - 3) * (2 * m - 5))
    mean_b = m * (m - 1) / (2 * (2 * m - 3))
    var_b = m * (m - 1) * (m - 2) * (m - 3) / (2 * (2 * m - 3) ** 2 * (2 * m - 5))
    var_a = (
        3 * (4 * m**3 - 40 * m**2 + 123 * m - 110)
        / (2 * (2 * m - 5) * (2 * m - 7) * (2 * m - 9))
        * var_b
    )
    cov = -var_b / (2 * m - 7)
    return MomentSet(n, "pda", mean_a, mean_b, var_a, var_b, cov)


def closed_form_moments(model: str, n: int) -> MomentSet:
    if model == "yhk":
        return yhk_moments(n)
    if model == "pda":
        return pda_moments(n)
    raise ValueError(f"unknown model {model!r}")


# ---------------------------------------------------------------------------
# Shape canonicalisation (adjacency based, independent of the arena layout)
# ---------------------------------------------------------------------------


def _adjacency(tree: PhyloTree) -> dict[int, list[int]]:
    adj: dict[int, list[int]] = defaultdict(list)
    for v in range(1, tree.n_nodes):
        p = tree.parent[v]
        adj[v].append(p)
        adj[p].append(v)
    return adj


def _ahu(adj, v, came_from) -> str:
    kids = sorted(_ahu(adj, w, v) for w in adj[v] if w != came_from)
    return "(" + "".join(kids) + ")" if kids else "x"


def shape_key(tree: PhyloTree) -> str:
    """Label-free canonical string of the tree shape.

    Rooted trees are encoded from the root vertex; unrooted trees take the
    smallest encoding over all rootings at a leaf.
    """
    adj = _adjacency(tree)
    if tree.rooted:
        return "R" + _ahu(adj, 0, -1)
    leaves = [v for v in adj if len(adj[v]) == 1]
    return "U" + min(_ahu(adj, v, -1) for v in leaves)


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


@dataclass
class ExactLaw:
    """Exact distribution of the terminal tree's statistics.

    ``ab`` maps ``(a, b)`` to its probability, ``edges`` maps the six-type
    edge vector to its probability (``None`` where types are undefined) and
    ``shapes`` maps canonical shape keys to probabilities.
    """

    model: str
    rooted: bool
    n: int
    ab: dict
    edges: dict | None
    shapes: dict

    def total(self) -> Fraction:
        return sum(self.ab.values(), Fraction(0))

    def moments(self) -> MomentSet:
        ea = sum((p * a for (a, _), p in self.ab.items()), Fraction(0))
        eb = sum((p * b for (_, b), p in self.ab.items()), Fraction(0))
        va = sum((p * (a - ea) ** 2 for (a, _), p in self.ab.items()), Fraction(0))
        vb = sum((p * (b - eb) ** 2 for (_, b), p in self.ab.items()), Fraction(0))
        cab = sum((p * (a - ea) * (b - eb) for (a, b), p in self.ab.items()), Fraction(0))
        return MomentSet(self.n, self.model, ea, eb, va, vb, cab)

    def ab_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["a", "b", "p_num", "p_den", "p"])
        for (a, b), p in sorted(self.ab.items()):
            w.writerow([a, b, p.numerator, p.denominator, f"{p.numerator}/{p.denominator}"])
        return buf.getvalue()

    def edges_csv(self) -> str:
        if self.edges is None:
            raise ClassificationUndefinedError("edge types undefined for this law")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"E{i}" for i in range(1, 7)] + ["p_num", "p_den", "p"])
        for vec, p in sorted(self.edges.items()):
            w.writerow(list(vec) + [p.numerator, p.denominator, f"{p.numerator}/{p.denominator}"])
        return buf.getvalue()


def _choices(tree: PhyloTree, model: str) -> list[int]:
    return tree.pendant_edges() if model == "yhk" else list(tree.edges())


def enumerate_exact(model: str, rooted: bool = True, seed_tree: PhyloTree | str | None = None,
                    n: int = 4, cap: int = 12) -> ExactLaw:
    """Exact law of the tree grown from ``seed_tree`` to ``n`` leaves.

    Every step is a Markov transition on tree shapes: each eligible edge
    (pendant for YHK, any for PDA) is chosen with equal probability.  Shapes
    reached by several histories are merged, so the work grows with the
    number of shapes rather than the number of histories.

    Parameters
    ----------
    model : {"yhk", "pda"}
    rooted : bool
        Ignored when ``seed_tree`` is given.
    seed_tree : PhyloTree or str, optional
        Defaults to the two-leaf tree (rooted) or the three-leaf star.
    n : int
        Terminal number of leaves.
    cap : int
        Largest ``n`` accepted.
    """
    if model not in ("yhk", "pda"):
        raise ValueError(f"unknown model {model!r}")
    if seed_tree is None:
        seed_tree = builtin_tree("t2" if rooted else "star3")
    elif isinstance(seed_tree, str):
        seed_tree = builtin_tree(seed_tree)
    rooted = seed_tree.rooted
    m = seed_tree.leaf_count
    if m > n:
        raise TreeError(f"seed tree has {m} leaves, more than n={n}")
    if n > cap:
        raise EnumerationTooLargeError(f"n={n} exceeds the enumeration cap {cap}")

    layer: dict[str, tuple[PhyloTree, Fraction]] = {
        shape_key(seed_tree): (seed_tree.copy(), Fraction(1))
    }
    for _ in range(n - m):
        nxt: dict[str, list] = {}
        for tree, p in layer.values():
            edges = _choices(tree, model)
            q = p / len(edges)
            label = tree.max_label() + 1
            for e in edges:
                child = tree.copy()
                child.attach(e, label)
                key = shape_key(child)
                if key in nxt:
                    nxt[key][1] += q
                else:
                    nxt[key] = [child, q]
        layer = {k: (t, p) for k, (t, p) in nxt.items()}

    ab: dict = defaultdict(Fraction)
    edges_law: dict | None = defaultdict(Fraction)
    shapes = {}
    typed = rooted or n >= 6
    for key, (tree, p) in layer.items():
        shapes[key] = p
        if typed:
            ab[(count_pitchforks(tree), count_cherries(tree))] += p
            edges_law[classify_all_edges(tree)] += p
    if not typed:
        ab, edges_law = {}, None
    return ExactLaw(model, rooted, n, dict(ab), None if edges_law is None else dict(edges_law),
                    shapes)


def unrooted_initial_split():
    """Law of the unrooted six-leaf pendant-type vector under YHK growth.

    Growing an unrooted tree from two leaves passes through the unique
    three-leaf star, so the enumeration starts there.  Returns
    ``(p1, p2, alpha1, alpha2)`` where ``alpha1 = (4,0,2,0)`` (two
    pitchforks) and ``alpha2 = (0,6,0,0)`` (three cherries).
    """
    law = enumerate_exact("yhk", seed_tree=builtin_tree("star3"), n=6)
    alpha1, alpha2 = (4, 0, 2, 0), (0, 6, 0, 0)
    pend = defaultdict(Fraction)
    for vec, p in law.edges.items():
        pend[vec[:4]] += p
    if set(pend) != {alpha1, alpha2}:
        raise AssertionError(f"unexpected six-leaf pendant vectors {sorted(pend)}")
    return pend[alpha1], pend[alpha2], alpha1, alpha2
