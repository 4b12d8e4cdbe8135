"""Eigendata of replacement matrices and the urn limit laws built from it.

Exact data is held in numpy ``object`` arrays of :class:`fractions.Fraction`
so that every matrix product below is carried out in rational arithmetic.
Numeric data uses ``float64`` arrays.  The same formulas serve both.

Conventions: eigenvalues are sorted in decreasing order, the columns of
``U`` are right eigenvectors, the rows of ``V = U^{-1}`` are left
eigenvectors, ``u_1 = (1, ..., 1)`` for a balanced matrix and ``v_1`` sums
to one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "SpectralData",
    "LimitLaw",
    "SpectralError",
    "ComplexSpectrumError",
    "DefectiveMatrixError",
    "builtin_spectral",
    "diagonalize",
    "limit_vector",
    "limit_law",
    "sigma",
    "project_ab",
    "spectral_report",
    "fraction_str",
]


class SpectralError(ValueError):
    pass


class ComplexSpectrumError(SpectralError):
    """The matrix has eigenvalues with a non-zero imaginary part."""


class DefectiveMatrixError(SpectralError):
    """Some eigenspace is smaller than the algebraic multiplicity."""


def _frac_array(rows, scale=1) -> np.ndarray:
    out = np.empty((len(rows), len(rows[0])), dtype=object)
    for i, row in enumerate(rows):
        for j, x in enumerate(row):
            out[i, j] = Fraction(x) * Fraction(scale)
    return out


def fraction_str(x) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class SpectralData:
    """Diagonalisation ``V R U = diag(eigenvalues)`` with ``V = U^{-1}``."""

    R: np.ndarray
    eigenvalues: tuple
    U: np.ndarray
    V: np.ndarray
    exact: bool
    residual: float = 0.0

    @property
    def d(self) -> int:
        return len(self.eigenvalues)

    @property
    def s(self):
        return self.eigenvalues[0]

    @property
    def v1(self) -> np.ndarray:
        return self.V[0]

    def Lambda(self) -> np.ndarray:
        if self.exact:
            L = np.full((self.d, self.d), Fraction(0), dtype=object)
        else:
            L = np.zeros((self.d, self.d))
        for i, lam in enumerate(self.eigenvalues):
            L[i, i] = lam
        return L

    def _R(self) -> np.ndarray:
        if self.exact:
            return _frac_array(self.R.tolist())
        return self.R.astype(float)

    def check(self) -> dict:
        """Residuals of ``V R U = Lambda``, ``V U = I`` and the normalisation.

        Exact data gives exact zeros (as Fractions); numeric data gives norms.
        """
        VRU = self.V.dot(self._R()).dot(self.U) - self.Lambda()
        VU = self.V.dot(self.U)
        VU = VU - (np.eye(self.d, dtype=object) * Fraction(1) if self.exact else np.eye(self.d))
        v1sum = sum(self.V[0]) - 1
        if self.exact:
            return {
                "diagonalization": max(abs(x) for x in VRU.ravel()),
                "biorthogonality": max(abs(x) for x in VU.ravel()),
                "v1_sum": abs(v1sum),
            }
        return {
            "diagonalization": float(np.linalg.norm(VRU)),
            "biorthogonality": float(np.linalg.norm(VU)),
            "v1_sum": float(abs(v1sum)),
        }

    def is_exact_diagonalization(self) -> bool:
        if not self.exact:
            return False
        return all(v == 0 for v in self.check().values())

    def to_float(self) -> "SpectralData":
        if not self.exact:
            return self
        return SpectralData(
            self.R,
            tuple(float(x) for x in self.eigenvalues),
            self.U.astype(float),
            self.V.astype(float),
            False,
            0.0,
        )


# ---------------------------------------------------------------------------
# Built-in urns
# ---------------------------------------------------------------------------


def builtin_spectral(model: str) -> SpectralData:
    """Exact rational eigendata of the YHK (``"yhk"``) or PDA (``"pda"``) urn."""
    from .urn import PDA_MATRIX, YHK_MATRIX

    if model == "yhk":
        R = YHK_MATRIX
        lam = (1, 0, -2, -3)
        U = _frac_array([[1, 1, -1, -1], [1, 0, -1, -3], [1, -2, 2, 5], [1, 0, 2, 3]])
        V = _frac_array(
            [[2, 2, 1, 1], [2, -2, -2, 2], [-4, 2, -2, 4], [2, -2, 1, -1]], Fraction(1, 6)
        )
    elif model == "pda":
        R = PDA_MATRIX
        lam = (2, 0, 0, 0, -2, -4)
        U = _frac_array(
            [
                [1, Fraction(5, 2), 2, 1, 1, 1],
                [1, -2, 1, 0, 1, 5],
                [1, -8, -1, 1, -3, -9],
                [1, -1, 1, 1, -3, -5],
                [1, 3, -1, 1, 1, 5],
                [1, 1, -1, -1, 1, 1],
            ]
        )
        V = _frac_array(
            [
                [22, 22, 11, 33, 11, 77],
                [4, -20, -14, 14, 6, 10],
                [30, 26, -17, 17, -43, -13],
                [40, -24, 36, -36, 60, -76],
                [66, -22, 33, -77, -11, 11],
                [-22, 22, -11, 11, 11, -11],
            ],
            Fraction(1, 176),
        )
    else:
        raise ValueError(f"unknown model {model!r}")
    data = SpectralData(R.copy(), tuple(Fraction(x) for x in lam), U, V, True)
    if not data.is_exact_diagonalization():
        raise SpectralError(f"built-in eigendata for {model} failed verification")
    return data


# ---------------------------------------------------------------------------
# Numeric diagonalisation
# ---------------------------------------------------------------------------


def _null_space(M: np.ndarray, k: int, tol: float) -> np.ndarray:
    _, sv, vh = np.linalg.svd(M)
    if sv.size and sv[-k] > tol:
        raise DefectiveMatrixError(
            f"eigenspace has dimension < {k} (singular value {sv[-k]:.3g} > {tol:.3g})"
        )
    return vh[-k:].T


def diagonalize(R, tol: float = 1e-9) -> SpectralData:
    """Numeric real diagonalisation of a small dense matrix.

    Eigenvalues closer than ``sqrt(tol)`` times the matrix scale are treated
    as one repeated eigenvalue, whose eigenspace is taken from the SVD null
    space of ``R - lambda I``.

    Raises
    ------
    ComplexSpectrumError
        If an eigenvalue has a significant imaginary part.
    DefectiveMatrixError
        If an eigenspace is too small for its multiplicity.
    """
    R = np.asarray(R)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise SpectralError("matrix must be square")
    Rf = R.astype(float)
    d = Rf.shape[0]
    scale = max(1.0, float(np.abs(Rf).max()))
    ev = np.linalg.eigvals(Rf)
    if np.any(np.abs(ev.imag) > np.sqrt(tol) * scale):
        raise ComplexSpectrumError(f"complex eigenvalues {ev[np.abs(ev.imag) > 0]}")
    lam = np.sort(ev.real)[::-1]

    clusters: list[list[float]] = []
    for x in lam:
        if clusters and abs(clusters[-1][-1] - x) <= np.sqrt(tol) * scale:
            clusters[-1].append(x)
        else:
            clusters.append([x])

    cols, vals = [], []
    for cl in clusters:
        k = len(cl)
        mu = float(np.mean(cl))
        basis = _null_space(Rf - mu * np.eye(d), k, np.sqrt(tol) * scale * d)
        # polish the eigenvalue as a Rayleigh-type average over the eigenspace
        mu = float(np.trace(np.linalg.pinv(basis) @ Rf @ basis) / k)
        cols.append(basis)
        vals += [mu] * k
    U = np.hstack(cols)
    if abs(np.linalg.det(U)) < tol:
        raise DefectiveMatrixError("eigenvectors are linearly dependent")
    # principal eigenvector: all-ones when R is balanced
    u1 = U[:, 0]
    if np.allclose(u1, u1[0], atol=np.sqrt(tol)):
        U[:, 0] = 1.0
    V = np.linalg.inv(U)
    c = V[0].sum()
    if abs(c) > tol:
        U[:, 0] *= c
        V[0] /= c
    lam_t = tuple(float(x) for x in vals)
    resid = float(np.linalg.norm(V @ Rf @ U - np.diag(lam_t)))
    if resid > 1e-8 * max(1.0, float(np.linalg.norm(Rf))):
        raise DefectiveMatrixError(f"diagonalisation residual {resid:.3g} too large")
    return SpectralData(R.copy(), lam_t, U, V, False, resid)


# ---------------------------------------------------------------------------
# Limit laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitLaw:
    s: object
    v1: np.ndarray
    sigma: np.ndarray

    @property
    def centre(self) -> np.ndarray:
        """Per-step growth ``s * v1`` of the counts."""
        return self.v1 * self.s


def limit_vector(spectral: SpectralData):
    """``(s, v1)``; the counts grow like ``n * s * v1``."""
    return spectral.s, spectral.v1.copy()


def sigma(spectral: SpectralData) -> np.ndarray:
    """Asymptotic covariance of ``(C_n - n s v1) / sqrt(n)``.

    ``sum_{i,j>=2} s l_i l_j (u_i' diag(v1) u_j) / (s - l_i - l_j) * v_i' v_j``.
    """
    d = spectral.d
    s = spectral.s
    lam = spectral.eigenvalues
    U, V = spectral.U, spectral.V
    v1 = V[0]
    if spectral.exact:
        out = np.full((d, d), Fraction(0), dtype=object)
    else:
        out = np.zeros((d, d))
    for i in range(1, d):
        if lam[i] == 0:
            continue
        for j in range(1, d):
            if lam[j] == 0:
                continue
            den = s - lam[i] - lam[j]
            if den == 0:
                raise ZeroDivisionError("s - lambda_i - lambda_j = 0")
            w = (U[:, i] * v1).dot(U[:, j])
            coef = s * lam[i] * lam[j] * w / den
            out = out + coef * np.outer(V[i], V[j])
    return (out + out.T) / 2 if not spectral.exact else out


def limit_law(spectral: SpectralData) -> LimitLaw:
    return LimitLaw(spectral.s, spectral.v1.copy(), sigma(spectral))


_AB_DIMS = {"yhk": 4, "pda": 6}


def project_ab(sigma_edge: np.ndarray, model: str | None = None) -> np.ndarray:
    """Covariance of ``(A, B) = (x_1/2, (x_1+x_2)/2)`` from an edge covariance."""
    S = np.asarray(sigma_edge)
    d = S.shape[0]
    if S.ndim != 2 or S.shape[1] != d or d < 2:
        raise ValueError("edge covariance must be a square matrix of size >= 2")
    if model is not None and _AB_DIMS[model] != d:
        raise ValueError(f"{model} edge covariance must be {_AB_DIMS[model]}x{_AB_DIMS[model]}, got {d}x{d}")
    exact = S.dtype == object
    half = Fraction(1, 2) if exact else 0.5
    zero = Fraction(0) if exact else 0.0
    L = np.full((2, d), zero, dtype=object if exact else float)
    L[0, 0] = half
    L[1, 0] = half
    L[1, 1] = half
    return L.dot(S).dot(L.T)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _ser(x, exact):
    if isinstance(x, np.ndarray):
        return [_ser(y, exact) for y in x]
    return fraction_str(x) if exact else float(x)


def spectral_report(spectral: SpectralData, model: str | None = None) -> dict:
    """JSON-ready summary: eigenvalues, ``v1``, ``s v1``, Sigma, the (A, B)
    covariance and verification residuals.  Rationals are "num/den" strings."""
    ex = spectral.exact
    S = sigma(spectral)
    out = {
        "model": model,
        "exact": ex,
        "d": spectral.d,
        "eigenvalues": [_ser(x, ex) for x in spectral.eigenvalues],
        "s": _ser(spectral.s, ex),
        "v1": _ser(spectral.v1, ex),
        "s_v1": _ser(spectral.v1 * spectral.s, ex),
        "U": _ser(spectral.U, ex),
        "V": _ser(spectral.V, ex),
        "sigma": _ser(S, ex),
        "residuals": {k: _ser(v, ex) for k, v in spectral.check().items()},
    }
    if spectral.d >= 2:
        out["sigma_ab"] = _ser(project_ab(S), ex)
    return out


def report_json(spectral: SpectralData, model: str | None = None) -> str:
    return json.dumps(spectral_report(spectral, model), indent=2)
