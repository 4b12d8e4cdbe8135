"""Monte-Carlo campaigns for the limit laws of the edge-type counts.

A campaign grows ``N`` independent trees (replicate ``r`` uses the stream
keyed by ``(base_seed, r)``), standardises the terminal counts as
``z = (X_n - n s v1) / sqrt(n)`` and compares the sample against the
theoretical normal limit ``N(0, Sigma)``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import rng as _rng
from ._backend import get_kernels
from .models import ProcessKind, arena_arrays
from .spectral import builtin_spectral, project_ab, sigma
from .tree import BUILTIN_TREES, PhyloTree, builtin_tree, from_newick

__all__ = [
    "CampaignConfig",
    "CampaignResult",
    "ConfigError",
    "RankError",
    "StreamingMoments",
    "run_campaign",
    "normality_test",
    "initial_tree_independence",
    "unrooted_split_frequency",
    "theory",
    "KS_COEFF",
]

KS_COEFF = 1.63  # asymptotic one-sample KS critical value at alpha = 0.01
AB_MAP = np.array([[0.5, 0, 0, 0, 0, 0], [0.5, 0.5, 0, 0, 0, 0]])


class ConfigError(ValueError):
    pass


class RankError(np.linalg.LinAlgError):
    pass


def _threads() -> int:
    env = os.environ.get("URNPHYLO_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Streaming moments
# ---------------------------------------------------------------------------


class StreamingMoments:
    """Count, mean and centred cross-product matrix, mergeable pairwise."""

    def __init__(self, d: int):
        self.n = 0
        self.mean = np.zeros(d)
        self.m2 = np.zeros((d, d))

    @classmethod
    def from_batch(cls, x: np.ndarray) -> "StreamingMoments":
        x = np.asarray(x, dtype=float)
        out = cls(x.shape[1])
        if x.shape[0]:
            out.n = x.shape[0]
            out.mean = x.mean(axis=0)
            c = x - out.mean
            out.m2 = c.T @ c
        return out

    def update(self, x: np.ndarray) -> "StreamingMoments":
        return self.merge(StreamingMoments.from_batch(x))

    def merge(self, other: "StreamingMoments") -> "StreamingMoments":
        """Combine in place with ``other`` and return ``self``."""
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean.copy(), other.m2.copy()
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.n / n)
        self.m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.n * other.n / n)
        self.n = n
        return self

    @property
    def cov(self) -> np.ndarray:
        if self.n < 2:
            return np.full_like(self.m2, np.nan)
        return self.m2 / (self.n - 1)


def merge_tree(parts: list[StreamingMoments]) -> StreamingMoments:
    """Merge along a fixed balanced binary tree (deterministic order)."""
    if not parts:
        raise ValueError("nothing to merge")
    parts = list(parts)
    while len(parts) > 1:
        nxt = []
        for i in range(0, len(parts) - 1, 2):
            a = StreamingMoments(parts[i].mean.size).merge(parts[i])
            nxt.append(a.merge(parts[i + 1]))
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


# ---------------------------------------------------------------------------
# Configuration and theory
# ---------------------------------------------------------------------------


@dataclass
class CampaignConfig:
    model: str = "yhk"
    rooted: bool = True
    seed_tree: str = "t2"
    n: int = 2000
    replicates: int = 10_000
    base_seed: int = 0
    statistics: list = field(default_factory=lambda: ["edges", "ab"])
    tests: list = field(default_factory=lambda: ["mean", "cov", "normality"])
    mean_se: float = 3.0
    cov_rel_tol: float = 0.10
    chunk: int = 500
    keep_samples: bool = False
    backend: str | None = None

    def kind(self) -> ProcessKind:
        return ProcessKind(self.model, self.rooted)

    def tree(self) -> PhyloTree:
        return resolve_tree(self.seed_tree, self.rooted)

    def validate(self) -> PhyloTree:
        if self.model not in ("yhk", "pda"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.replicates < 2:
            raise ConfigError("need at least 2 replicates")
        try:
            tree = self.tree()
        except ValueError as exc:
            raise ConfigError(f"bad seed tree {self.seed_tree!r}: {exc}") from exc
        if tree.rooted != self.rooted:
            raise ConfigError("seed tree rootedness does not match the process")
        m = tree.leaf_count
        if not self.rooted and m < 6:
            raise ConfigError("unrooted campaigns need a seed tree with at least 6 leaves")
        if self.n <= m:
            raise ConfigError(f"n={self.n} must exceed the seed tree's {m} leaves")
        unknown = set(self.tests) - {"mean", "cov", "normality"}
        if unknown:
            raise ConfigError(f"unknown tests {sorted(unknown)}")
        return tree

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["backend"] is None:
            del d["backend"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def resolve_tree(source: str | PhyloTree, rooted: bool = True) -> PhyloTree:
    """Built-in name, Newick string or path to a Newick file."""
    if isinstance(source, PhyloTree):
        return source
    if source.strip() in BUILTIN_TREES:
        return builtin_tree(source)
    if not source.strip().endswith(";") and os.path.exists(source):
        with open(source) as fh:
            return from_newick(fh.read().strip())
    return from_newick(source)


@dataclass(frozen=True)
class Theory:
    d: int
    centre: np.ndarray  # s * v1, per-leaf growth of the counts
    sigma_edges: np.ndarray
    sigma_ab: np.ndarray


def theory(model: str) -> Theory:
    sp = builtin_spectral(model)
    S = sigma(sp)
    centre = (sp.v1 * sp.s).astype(float)
    return Theory(sp.d, centre, S.astype(float), project_ab(S).astype(float))


# ---------------------------------------------------------------------------
# Normality test
# ---------------------------------------------------------------------------


@dataclass
class NormalityReport:
    rank: int
    ks_marginal: list
    ks_mahalanobis: float
    threshold: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def normality_test(samples: np.ndarray, sigma_theory: np.ndarray, rank_tol: float = 1e-10,
                   coeff: float = KS_COEFF) -> NormalityReport:
    """KS checks of ``samples`` (rows) against ``N(0, sigma_theory)``.

    The decisive statistic is the KS distance between the squared
    Mahalanobis lengths, computed on an orthonormal basis of the range of
    ``sigma_theory``, and the chi-square law with ``rank`` degrees of
    freedom.  Per-coordinate KS distances against ``N(0, sigma_ii)`` are
    reported alongside.
    """
    x = np.asarray(samples, dtype=float)
    S = np.asarray(sigma_theory, dtype=float)
    if x.ndim != 2 or x.shape[1] != S.shape[0]:
        raise ValueError("sample dimension does not match sigma")
    N = x.shape[0]
    w, Q = np.linalg.eigh((S + S.T) / 2)
    if w.size == 0 or w.max() <= 0:
        raise RankError("sigma has no positive eigenvalue")
    keep = w > rank_tol * w.max()
    rank = int(keep.sum())
    if rank == 0:
        raise RankError("rank detection failed")
    y = x @ Q[:, keep] / np.sqrt(w[keep])
    d2 = np.einsum("ij,ij->i", y, y)
    ks_m = float(stats.kstest(d2, stats.chi2(rank).cdf).statistic)
    marg = []
    for i in range(S.shape[0]):
        sd = math.sqrt(max(S[i, i], 0.0))
        marg.append(float(stats.kstest(x[:, i], stats.norm(0, sd).cdf).statistic) if sd > 0 else None)
    thr = coeff / math.sqrt(N)
    return NormalityReport(rank, marg, ks_m, thr, bool(ks_m < thr))


# ---------------------------------------------------------------------------
# Campaigns
# ---------------------------------------------------------------------------


@dataclass
class CampaignResult:
    config: dict
    n: int
    replicates: int
    mean_counts: list  # mean of X_n / n
    centre: list  # s * v1
    mean_z_edges: list
    cov_z_edges: list
    mean_z_ab: list
    se_ab: list
    cov_z_ab: list
    sigma_ab: list
    cov_rel_error: float
    tests: dict
    passed: bool
    metadata: dict
    normality_edges: dict | None = None
    samples: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("samples")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def samples_csv(self) -> str:
        if self.samples is None:
            raise ValueError("campaign did not keep raw samples")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate"] + [f"E{i}" for i in range(1, 7)] + ["A", "B"])
        for r, row in enumerate(self.samples):
            a, b = row[0] // 2, (row[0] + row[1]) // 2
            w.writerow([r] + row.tolist() + [int(a), int(b)])
        return buf.getvalue()


def _chunk_counts(kern, arena, kind, capacity, steps, seed, lo, hi):
    words = np.empty((hi - lo, steps), dtype=np.uint64)
    for i, r in enumerate(range(lo, hi)):
        words[i] = _rng.raw_words(_rng.make_stream(seed, r), steps)
    out = np.zeros((hi - lo, 6), dtype=np.int64)
    kern.simulate_batch(
        arena.parent, arena.left, arena.right, arena.label, arena.n_nodes,
        arena.pend, arena.n_pend, arena.counts, kind.pda, arena.next_label,
        capacity, words, out,
    )
    return out


def _check_totals(counts: np.ndarray, kind: ProcessKind, n: int) -> None:
    if kind.model == "yhk":
        tot, want = counts[:, :4].sum(axis=1), n
    else:
        tot, want = counts.sum(axis=1), 2 * n - 1 if kind.rooted else 2 * n - 3
    bad = np.flatnonzero(tot != want)
    if bad.size:
        raise AssertionError(f"replicate {int(bad[0])}: count total {int(tot[bad[0]])} != {want}")


def simulate_counts(config: CampaignConfig) -> np.ndarray:
    """Terminal six-type counts, one row per replicate."""
    tree = config.validate()
    kind = config.kind()
    m = tree.leaf_count
    steps = config.n - m
    capacity = tree.n_nodes + 2 * steps
    arena = arena_arrays(tree, capacity, config.backend)
    kern = get_kernels(config.backend)
    bounds = [(lo, min(lo + config.chunk, config.replicates))
              for lo in range(0, config.replicates, config.chunk)]
    with ThreadPoolExecutor(max_workers=min(_threads(), len(bounds))) as pool:
        parts = list(pool.map(
            lambda b: _chunk_counts(kern, arena, kind, capacity, steps, config.base_seed, *b),
            bounds,
        ))
    counts = np.vstack(parts)
    _check_totals(counts, kind, config.n)
    return counts


def run_campaign(config: CampaignConfig) -> CampaignResult:
    """Run a campaign and evaluate the tests named in ``config.tests``."""
    counts = simulate_counts(config)
    kind = config.kind()
    n = config.n
    th = theory(config.model)
    d = th.d
    X = counts[:, :d].astype(float)
    z = (X - n * th.centre) / math.sqrt(n)
    ab = counts[:, :2] @ np.array([[1, 1], [0, 1]])
    if np.any(ab % 2):
        raise AssertionError("odd type-1/type-2 pendant count")
    z_ab = z @ AB_MAP[:, :d].T

    chunks = range(0, len(z), config.chunk)
    mom_e = merge_tree([StreamingMoments.from_batch(z[i:i + config.chunk]) for i in chunks])
    mom_ab = merge_tree([StreamingMoments.from_batch(z_ab[i:i + config.chunk]) for i in chunks])
    N = config.replicates
    se_ab = np.sqrt(np.diag(th.sigma_ab) / N)
    cov_ab = mom_ab.cov
    rel = float(np.linalg.norm(cov_ab - th.sigma_ab) / np.linalg.norm(th.sigma_ab))

    tests = {}
    if "mean" in config.tests:
        dev = np.abs(mom_ab.mean) / se_ab
        tests["mean"] = {"z_scores": (mom_ab.mean / se_ab).tolist(),
                         "limit": config.mean_se,
                         "passed": bool(np.all(dev <= config.mean_se))}
    if "cov" in config.tests:
        tests["cov"] = {"relative_frobenius": rel, "limit": config.cov_rel_tol,
                        "passed": bool(rel <= config.cov_rel_tol)}
    norm_edges = None
    if "normality" in config.tests:
        rep = normality_test(z_ab, th.sigma_ab)
        tests["normality"] = {**rep.to_dict()}
        norm_edges = normality_test(z, th.sigma_edges).to_dict()
        # diagnostic only: spread each integer (A, B) value uniformly over its
        # unit cell to separate lattice effects from shape departures
        u = _rng.make_stream(config.base_seed, N).random(z_ab.shape) - 0.5
        tests["normality"]["ks_mahalanobis_dequantized"] = normality_test(
            z_ab + u / math.sqrt(n), th.sigma_ab).ks_mahalanobis

    meta = {**_rng.metadata(config.base_seed), "config_hash": config.digest(),
            "process": kind.name}
    return CampaignResult(
        config=config.to_dict(),
        n=n,
        replicates=N,
        mean_counts=(X.mean(axis=0) / n).tolist(),
        centre=th.centre.tolist(),
        mean_z_edges=mom_e.mean.tolist(),
        cov_z_edges=mom_e.cov.tolist(),
        mean_z_ab=mom_ab.mean.tolist(),
        se_ab=se_ab.tolist(),
        cov_z_ab=cov_ab.tolist(),
        sigma_ab=th.sigma_ab.tolist(),
        cov_rel_error=rel,
        tests=tests,
        passed=all(t["passed"] for t in tests.values()),
        metadata=meta,
        normality_edges=norm_edges,
        samples=counts if config.keep_samples else None,
    )


def unrooted_split_frequency(N: int, base_seed: int = 0, backend: str | None = None):
    """Fraction of unrooted YHK trees grown from the three-leaf star to six
    leaves whose pendant-type vector is ``(4, 0, 2, 0)``.

    Returns ``(frequency, standard_error, counts)`` where ``counts`` holds
    the six-type vectors of every replicate.
    """
    tree = builtin_tree("star3")
    steps = 3
    capacity = tree.n_nodes + 2 * steps
    arena = arena_arrays(tree, capacity, backend)
    kern = get_kernels(backend)
    counts = _chunk_counts(kern, arena, ProcessKind("yhk", False), capacity, steps,
                           base_seed, 0, N)
    _check_totals(counts, ProcessKind("yhk", False), 6)
    hit = np.all(counts[:, :4] == (4, 0, 2, 0), axis=1)
    other = np.all(counts[:, :4] == (0, 6, 0, 0), axis=1)
    if not np.all(hit | other):
        raise AssertionError("six-leaf unrooted tree with an unexpected pendant vector")
    p = float(hit.mean())
    return p, math.sqrt(p * (1 - p) / N), counts


# ---------------------------------------------------------------------------
# Initial-tree independence
# ---------------------------------------------------------------------------


@dataclass
class IndependenceReport:
    model: str
    seeds: list
    results: list
    pairwise: list
    passed: bool

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "seeds": self.seeds,
            "results": [r.to_dict() for r in self.results],
            "pairwise": self.pairwise,
            "passed": self.passed,
        }


def initial_tree_independence(model: str, seeds: list, n: int, N: int, base_seed: int = 0,
                              rooted: bool = True, results: list | None = None,
                              **overrides) -> IndependenceReport:
    """Compare campaigns started from different seed trees.

    Each seed's standardised ``(A, B)`` covariance must be within the
    configured relative tolerance of the theoretical matrix.  Pairs are
    compared through the two-sample mean difference in standard-error units
    (limit ``mean_se``) and the relative Frobenius distance between their
    covariances (limit twice ``cov_rel_tol``); these are reported and flagged.
    Pre-computed results may be passed in ``results`` to avoid re-running.
    """
    if len(seeds) < 2:
        raise ConfigError("need at least two seed trees")
    if results is None:
        overrides.setdefault("tests", ["cov"])
        results = [
            run_campaign(CampaignConfig(model=model, rooted=rooted, seed_tree=s, n=n,
                                        replicates=N, base_seed=base_seed, **overrides))
            for s in seeds
        ]
    th = theory(model)
    tol = results[0].config["cov_rel_tol"]
    kmean = results[0].config["mean_se"]
    pairs = []
    ok = all(r.cov_rel_error <= tol for r in results)
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            a, b = results[i], results[j]
            se = np.sqrt(np.diag(th.sigma_ab) * (1 / a.replicates + 1 / b.replicates))
            zdiff = (np.array(a.mean_z_ab) - np.array(b.mean_z_ab)) / se
            cdist = float(np.linalg.norm(np.array(a.cov_z_ab) - np.array(b.cov_z_ab))
                          / np.linalg.norm(th.sigma_ab))
            flagged = bool(np.any(np.abs(zdiff) > kmean) or cdist > 2 * tol)
            pairs.append({"seeds": [seeds[i], seeds[j]], "mean_diff_z": zdiff.tolist(),
                          "cov_distance": cdist, "flagged": flagged})
    return IndependenceReport(model, list(seeds), results, pairs, ok)
