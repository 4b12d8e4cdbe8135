"""Self-check suites behind ``urnphylo verify``.

Each check returns a :class:`Check`; a suite is a list of checks.  The
``scale`` argument trades run time for statistical power: ``"quick"`` runs
in seconds, ``"full"`` uses the desk-scale sizes (minutes).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from . import harness, models, moments, spectral, urn
from . import rng as _rng
from .tree import builtin_tree, classify_all_edges

SUITES = ("spectral", "urn", "yhk", "pda")

SIGMA_TARGET = {
    "yhk": (
        Fraction(1, 1260),
        [[276, -388, 138, -26], [-388, 724, -194, -142], [138, -194, 69, -13],
         [-26, -142, -13, 181]],
    ),
    "pda": (
        Fraction(1, 64),
        [[12, -12, 6, -6, -6, 6], [-12, 28, -6, -10, 14, -14], [6, -6, 3, -3, -3, 3],
         [-6, -10, -3, 19, -5, 5], [-6, 14, -3, -5, 7, -7], [6, -14, 3, 5, -7, 7]],
    ),
}
AB_TARGET = {
    "yhk": (Fraction(1, 1260), [[69, -28], [-28, 56]]),
    "pda": (Fraction(1, 64), [[3, 0], [0, 4]]),
}
EIGENVALUES = {"yhk": (1, 0, -2, -3), "pda": (2, 0, 0, 0, -2, -4)}
SCALES = {
    "quick": {"slln_n": 100_000, "clt_n": 2_000, "clt_N": 2_000, "coupling": 100, "b_n": 100_000},
    "full": {"slln_n": 100_000, "clt_n": 2_000, "clt_N": 10_000, "coupling": 1_000, "b_n": 100_000},
}


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _exact_equal(M, scale, rows) -> bool:
    return M.shape == (len(rows), len(rows)) and all(
        M[i, j] == scale * rows[i][j] for i in range(len(rows)) for j in range(len(rows))
    )


def spectral_suite(scale="quick") -> list[Check]:
    out = []
    for model in ("yhk", "pda"):
        sp = spectral.builtin_spectral(model)
        S = spectral.sigma(sp)
        out.append(Check("spectral", f"{model} eigendata exact", sp.is_exact_diagonalization()))
        out.append(Check("spectral", f"{model} sigma exact", _exact_equal(S, *SIGMA_TARGET[model])))
        out.append(Check("spectral", f"{model} (A,B) covariance exact",
                         _exact_equal(spectral.project_ab(S, model), *AB_TARGET[model])))
        num = spectral.diagonalize(sp.R)
        err = float(np.max(np.abs(np.array(num.eigenvalues) - EIGENVALUES[model])))
        out.append(Check("spectral", f"{model} numeric eigenvalues", err < 1e-8, f"max error {err:.2e}"))
    return out


def urn_suite(scale="quick") -> list[Check]:
    cfg = SCALES[scale]
    out = []
    pairs = {"yhk": ((3, 3), (3, 4), (4, 4)), "pda": ((5, 5), (5, 6), (6, 6))}
    t0 = {"yhk": 2, "pda": 3}
    for model, ij in pairs.items():
        sp = spectral.builtin_spectral(model)
        for i, j in ij:
            val = urn.b_second_moment_sum(cfg["b_n"], i, j, sp, t0[model])
            lim = float(urn.b_second_moment_limit(i, j, sp))
            out.append(Check("urn", f"{model} b-sum ({i},{j})", abs(val - lim) < 1e-2,
                             f"{val:.6f} vs {lim:.6f}"))
    for model in ("yhk", "pda"):
        ok, bad = coupling_check(model, cfg["coupling"], base_seed=11)
        out.append(Check("urn", f"{model} urn/tree coupling", ok, f"{bad} mismatching traces"))
    return out


def coupling_check(model: str, traces: int, base_seed: int = 0, n_max: int = 60):
    """Replay random growth traces through the urn and compare trajectories.

    The urn starts from the seed tree's type vector and, at each step, draws
    the colour equal to the type of the edge the trace chose.  Returns
    ``(all_equal, number_of_mismatching_traces)``.
    """
    R = urn.replacement_matrix(model)
    d = R.shape[0]
    kind = models.ProcessKind(model, True)
    seed = builtin_tree("t2")
    bad = 0
    for r in range(traces):
        n = 3 + r % (n_max - 2)
        _, trace = models.generate(kind, seed, n, base_seed, replicate_id=r)
        state = urn.UrnState(classify_all_edges(seed)[:d])
        for tree, ty in zip(list(trace.trees())[1:], trace.types):
            try:
                state = urn.apply_draw(state, R, ty - 1)
            except (ValueError, urn.TenabilityError):
                bad += 1
                break
            if state.counts != classify_all_edges(tree)[:d]:
                bad += 1
                break
    return bad == 0, bad


def model_suite(model: str, scale="quick", seed: int = 0) -> list[Check]:
    cfg = SCALES[scale]
    out = []
    for n in (7, 8, 9, 10):
        law = moments.enumerate_exact(model, n=n)
        ok = law.moments().same_values(moments.closed_form_moments(model, n))
        out.append(Check(model, f"enumeration = closed form, n={n}", ok and law.total() == 1))
    d = 4 if model == "yhk" else 6
    th = harness.theory(model)
    counts = models.terminal_counts(models.ProcessKind(model), builtin_tree("t2"),
                                    cfg["slln_n"], seed)
    err = float(np.max(np.abs(np.array(counts[:d]) / cfg["slln_n"] - th.centre)))
    out.append(Check(model, f"SLLN n={cfg['slln_n']}", err < 0.01, f"sup error {err:.4f}"))
    res = harness.run_campaign(harness.CampaignConfig(
        model=model, n=cfg["clt_n"], replicates=cfg["clt_N"], base_seed=seed, keep_samples=False))
    for name, t in res.tests.items():
        out.append(Check(model, f"CLT {name} (n={cfg['clt_n']}, N={cfg['clt_N']})", t["passed"],
                         {k: v for k, v in t.items() if k != "passed"}.__repr__()))
    return out


def run_suite(suite: str, scale: str = "quick", seed: int = 0) -> list[Check]:
    if suite == "all":
        return [c for s in SUITES for c in run_suite(s, scale, seed)]
    if suite == "spectral":
        return spectral_suite(scale)
    if suite == "urn":
        return urn_suite(scale)
    if suite in ("yhk", "pda"):
        return model_suite(suite, scale, seed)
    raise ValueError(f"unknown suite {suite!r}")


def report(checks: list[Check], scale: str, seed: int = 0) -> dict:
    return {
        "scale": scale,
        "base_seed": seed,
        "passed": all(c.passed for c in checks),
        "checks": [c.to_dict() for c in checks],
        "rng": _rng.RNG_ALGORITHM,
    }
