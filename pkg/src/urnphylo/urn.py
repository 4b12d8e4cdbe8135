"""Generalised Polya urns with integer replacement matrices.

A draw of colour ``i`` (probability ``C_i / t``) adds row ``i`` of the
replacement matrix to the ball counts.  Entries may be negative, so a draw
can drive a count below zero; that raises :class:`TenabilityError`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from ._backend import get_kernels

__all__ = [
    "YHK_MATRIX",
    "PDA_MATRIX",
    "UrnState",
    "Trajectory",
    "AssumptionReport",
    "TenabilityError",
    "UndefinedProductError",
    "urn_step",
    "apply_draw",
    "run",
    "check_assumptions",
    "b_coeff",
    "b_second_moment_sum",
    "b_second_moment_limit",
    "f_ratio",
    "replacement_matrix",
]

YHK_MATRIX = np.array(
    [
        [0, 0, 0, 1],
        [2, -2, 1, 0],
        [-2, 4, -1, 0],
        [0, 2, 0, -1],
    ],
    dtype=np.int64,
)

PDA_MATRIX = np.array(
    [
        [0, 0, 0, 1, 0, 1],
        [2, -2, 1, 0, -1, 2],
        [-2, 4, -1, 0, 2, -1],
        [0, 2, 0, -1, 1, 0],
        [2, -2, 1, 0, -1, 2],
        [0, 0, 0, 1, 0, 1],
    ],
    dtype=np.int64,
)


def replacement_matrix(model: str) -> np.ndarray:
    model = model.lower()
    if model == "yhk":
        return YHK_MATRIX.copy()
    if model == "pda":
        return PDA_MATRIX.copy()
    raise ValueError(f"unknown model {model!r}")


class TenabilityError(RuntimeError):
    """A draw would make some ball count negative."""

    def __init__(self, state, row, step=None):
        where = "" if step is None else f" at step {step}"
        super().__init__(f"negative ball count{where}: state {list(state)} + row {list(row)}")
        self.state = tuple(int(x) for x in state)
        self.row = tuple(int(x) for x in row)
        self.step = step


class UndefinedProductError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class UrnState:
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 0 for c in self.counts):
            raise ValueError("ball counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def d(self) -> int:
        return len(self.counts)


def _as_matrix(R) -> np.ndarray:
    R = np.ascontiguousarray(np.asarray(R, dtype=np.int64))
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError("replacement matrix must be square")
    return R


def urn_step(state: UrnState, R, stream: np.random.Generator) -> tuple[UrnState, int]:
    """Draw one ball and apply the matching row of ``R``; returns ``(state, colour)``.

    Colours are 0-based.
    """
    R = _as_matrix(R)
    t = state.total
    if t <= 0:
        raise ValueError("urn is empty")
    idx = _rng.choose(_rng.raw_words(stream, 1)[0], t)
    acc = 0
    for i, c in enumerate(state.counts):
        acc += c
        if acc > idx:
            break
    return apply_draw(state, R, i), i


def apply_draw(state: UrnState, R, colour: int) -> UrnState:
    """Add row ``colour`` (0-based) of ``R`` after a draw of that colour.

    Raises ``ValueError`` if the urn holds no ball of ``colour`` and
    :class:`TenabilityError` if a count would go negative.
    """
    R = _as_matrix(R)
    if not 0 <= colour < state.d or state.counts[colour] <= 0:
        raise ValueError(f"colour {colour} cannot be drawn from {state.counts}")
    new = [c + int(r) for c, r in zip(state.counts, R[colour])]
    if any(c < 0 for c in new):
        raise TenabilityError(state.counts, R[colour])
    return UrnState(tuple(new))


@dataclass
class Trajectory:
    counts: np.ndarray  # (steps + 1, d)
    drawn: np.ndarray  # (steps,), 0-based colours

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def final(self) -> UrnState:
        return UrnState(tuple(self.counts[-1]))

    def to_csv(self) -> str:
        d = self.counts.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step"] + [f"C{j + 1}" for j in range(d)] + ["t", "drawn"])
        tot = self.totals
        for k in range(self.counts.shape[0]):
            drawn = "" if k == 0 else int(self.drawn[k - 1]) + 1
            w.writerow([k] + self.counts[k].tolist() + [int(tot[k]), drawn])
        return buf.getvalue()


def run(state0: UrnState, R, steps: int, stream: np.random.Generator,
        require_balanced: bool = True, backend: str | None = None) -> Trajectory:
    """Run ``steps`` draws; the trajectory includes the starting state.

    Raises :class:`TenabilityError` carrying the 1-based step index if a count
    goes negative.
    """
    R = _as_matrix(R)
    if R.shape[0] != state0.d:
        raise ValueError("state and matrix dimensions differ")
    if require_balanced:
        sums = R.sum(axis=1)
        if not (np.all(sums == sums[0]) and sums[0] > 0):
            raise ValueError("replacement matrix is not strictly balanced; "
                             "pass require_balanced=False to override")
    if state0.total <= 0:
        raise ValueError("urn is empty")
    words = _rng.raw_words(stream, steps)
    traj = np.zeros((steps + 1, state0.d), dtype=np.int64)
    drawn = np.zeros(steps, dtype=np.int64)
    status = get_kernels(backend).urn_run(
        np.asarray(state0.counts, dtype=np.int64), R, words, traj, drawn
    )
    if status >= 0:
        k = int(status)
        raise TenabilityError(traj[k - 1], R[drawn[k - 1]], step=k)
    return Trajectory(traj, drawn)


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------


@dataclass
class AssumptionReport:
    tenable: bool | None  # None: not exercised (no initial state supplied)
    small: bool
    balanced: bool
    diagonalizable: bool
    eigenvalues: tuple[float, ...] = ()
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.small and self.balanced and self.diagonalizable and self.tenable is not False


def _stochastic_left_eigenvector(R: np.ndarray, s: float) -> bool:
    from scipy.optimize import linprog

    d = R.shape[0]
    A_eq = np.vstack([(R - s * np.eye(d)).T, np.ones((1, d))])
    b_eq = np.zeros(d + 1)
    b_eq[-1] = 1.0
    res = linprog(np.zeros(d), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * d, method="highs")
    return bool(res.status == 0)


def check_assumptions(R, initial=None, trials: int = 20, steps: int = 500,
                      seed: int = 0, tol: float = 1e-9) -> AssumptionReport:
    """Check tenability (empirically), smallness, strict balance, diagonalisability.

    Tenability is only *witnessed*: ``trials`` random trajectories of
    ``steps`` draws from ``initial`` must stay non-negative.
    """
    from .spectral import SpectralError, diagonalize

    R = _as_matrix(R)
    Rf = R.astype(float)
    msgs: list[str] = []
    ev = np.linalg.eigvals(Rf)
    scale = max(1.0, float(np.abs(Rf).max()))
    real = bool(np.all(np.abs(ev.imag) <= tol * scale * 10))
    lam = np.sort(ev.real)[::-1]
    s = float(lam[0])
    small = real and s > 0 and all(s > 2 * x + tol * scale for x in lam[1:])
    if not real:
        msgs.append("smallness: complex eigenvalues")
    elif not small:
        msgs.append(f"smallness: principal eigenvalue {s:g} is not > 2x every other eigenvalue")

    sums = R.sum(axis=1)
    balanced = bool(np.all(sums == sums[0]) and sums[0] > 0)
    if not balanced:
        msgs.append(f"balance: row sums {sums.tolist()} are not equal and positive")
    elif abs(float(sums[0]) - s) > tol * scale:
        balanced = False
        msgs.append("balance: common row sum is not the principal eigenvalue")
    elif not _stochastic_left_eigenvector(Rf, s):
        balanced = False
        msgs.append("balance: no stochastic left eigenvector for the principal eigenvalue")

    try:
        diagonalize(R, tol=tol)
        diag = True
    except SpectralError as exc:
        diag = False
        msgs.append(f"diagonalisability: {exc}")

    tenable = None
    if initial is not None:
        state = UrnState(tuple(initial))
        tenable = True
        for k in range(trials):
            try:
                run(state, R, steps, _rng.make_stream(seed, k), require_balanced=False)
            except TenabilityError as exc:
                tenable = False
                msgs.append(f"tenability: violated in trial {k}: {exc}")
                break
        if tenable:
            msgs.append(f"tenability: witnessed-tenable over {trials} trajectories of {steps} draws")
    return AssumptionReport(tenable, small, balanced, diag, tuple(float(x) for x in lam), msgs)


# ---------------------------------------------------------------------------
# b-coefficients
# ---------------------------------------------------------------------------


def _eig(spectral, j):
    lam = spectral.eigenvalues
    if not 1 <= j <= len(lam):
        raise IndexError(f"eigenvalue index {j} out of range 1..{len(lam)}")
    return float(lam[j - 1]), float(spectral.s)


def _log_product(factors: np.ndarray):
    """Sign, log-magnitude and zero flag of a product of real factors."""
    if np.any(factors == 0):
        return 0.0, -math.inf, True
    sign = -1.0 if np.count_nonzero(factors < 0) % 2 else 1.0
    return sign, math.fsum(np.log(np.abs(factors))), False


def b_coeff(n: int, k: int, j: int, spectral, t0) -> float:
    """``prod_{l=k}^{n-1} (1 + lambda_j / t_l)`` with ``t_l = t0 + l*s`` (1 when k == n)."""
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    lam, s = _eig(spectral, j)
    if k == n:
        return 1.0
    t = float(t0) + s * np.arange(k, n, dtype=float)
    if np.any(t == 0):
        raise UndefinedProductError("t_l = 0 inside the product")
    sign, logmag, zero = _log_product(1.0 + lam / t)
    return 0.0 if zero else sign * math.exp(logmag)


def _suffix_products(lam: float, s: float, t0: float, n: int) -> np.ndarray:
    """``b_{n,k}`` for k = 1..n."""
    ell = np.arange(1, n, dtype=float)  # l = 1..n-1
    t = float(t0) + s * ell
    if np.any(t == 0):
        raise UndefinedProductError("t_l = 0 inside the product")
    f = 1.0 + lam / t
    out = np.empty(n)
    out[-1] = 1.0  # k = n
    if n == 1:
        return out
    zero = f == 0
    logs = np.log(np.where(zero, 1.0, np.abs(f)))
    neg = (f < 0).astype(np.int64)
    # suffix sums over l = k..n-1 for k = 1..n-1
    slog = np.cumsum(logs[::-1])[::-1]
    sneg = np.cumsum(neg[::-1])[::-1]
    szero = np.cumsum(zero[::-1])[::-1] > 0
    vals = np.where(sneg % 2 == 1, -1.0, 1.0) * np.exp(slog)
    vals[szero] = 0.0
    out[:-1] = vals
    return out


def b_second_moment_sum(n: int, i: int, j: int, spectral, t0) -> float:
    """``(1/n) sum_{k=1}^n b_{n,k}(i) b_{n,k}(j)``."""
    if not 2 <= i <= j:
        raise ValueError("need 2 <= i <= j")
    li, s = _eig(spectral, i)
    lj, _ = _eig(spectral, j)
    bi = _suffix_products(li, s, t0, n)
    bj = bi if lj == li else _suffix_products(lj, s, t0, n)
    return float(math.fsum(bi * bj) / n)


def b_second_moment_limit(i: int, j: int, spectral):
    """Limit ``s / (s - lambda_i - lambda_j)`` (exact when the spectrum is)."""
    lam = spectral.eigenvalues
    s = spectral.s
    den = s - lam[i - 1] - lam[j - 1]
    if den == 0:
        raise UndefinedProductError("s - lambda_i - lambda_j = 0")
    return s / den


def f_ratio(m: int, n: int, ell: float, lam: float) -> float:
    """``prod_{i=m}^{n-1} (1 + lam / (ell + i))`` (1 when n == m)."""
    if not 0 <= m <= n:
        raise ValueError("need 0 <= m <= n")
    if ell <= 0:
        raise ValueError("ell must be positive")
    if n == m or lam == 0:
        return 1.0
    den = float(ell) + np.arange(m, n, dtype=float)
    sign, logmag, zero = _log_product(1.0 + lam / den)
    return 0.0 if zero else sign * math.exp(logmag)
