"""The average channel ``phi(rho) = sum w v rho v*``: superoperator, spectrum,
period, spectral gap, invariant state and the unique-invariant-subspace check."""

import json
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .exceptions import InvalidInputError, MultipleFixedPointsError, NumericalFailureError
from .kraus import KrausMeasure
from .numerics import phase_fix, trace_norm

PERIPHERAL_TOL = 1e-9
NULL_TOL = 1e-8
RANK_TOL = 1e-8
RESIDUAL_TOL = 1e-8
CESARO_TOL = 1e-7
CESARO_RANK_TOL = 1e-4


def vec(rho):
    """Column-stacking vectorization."""
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def unvec(x, k):
    return np.asarray(x).reshape((k, k), order="F")


@dataclass(frozen=True, eq=False)
class SuperOperator:
    """k^2 x k^2 matrix acting on column-vectorized k x k matrices."""

    matrix: np.ndarray
    dim: int

    def apply(self, rho):
        return unvec(self.matrix @ vec(rho), self.dim)

    def power(self, n):
        return SuperOperator(np.linalg.matrix_power(self.matrix, n), self.dim)


def check_density_matrix(rho, tol=1e-10, name="rho"):
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvalidInputError(f"{name} has non-finite entries")
    if np.linalg.norm(rho - rho.conj().T) > tol:
        raise InvalidInputError(f"{name} is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise InvalidInputError(f"{name} does not have unit trace")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -tol:
        raise InvalidInputError(f"{name} is not positive semidefinite")
    return rho


def build_superoperator(m: KrausMeasure) -> SuperOperator:
    m.require_valid()
    V = m.matrices
    S = np.einsum("i,iab,icd->acbd", m.weights, V.conj(), V).reshape(m.dim**2, m.dim**2)
    return SuperOperator(S, m.dim)


def apply_channel(m: KrausMeasure, rho) -> np.ndarray:
    m.require_valid()
    rho = check_density_matrix(rho)
    if rho.shape[0] != m.dim:
        raise InvalidInputError(f"state of dimension {rho.shape[0]} for a model on C^{m.dim}")
    out = np.einsum("i,iab,bc,idc->ad", m.weights, m.matrices, rho, m.matrices.conj())
    return 0.5 * (out + out.conj().T)


def _sorted_eigenvalues(S):
    ev = np.linalg.eigvals(S)
    order = np.lexsort((-ev.imag, -ev.real, -np.round(np.abs(ev), 12)))
    return ev[order]


def fixed_point_dimension(S: SuperOperator, tol=NULL_TOL) -> int:
    """Numerical null-space dimension of ``S - Id``."""
    s = np.linalg.svd(S.matrix - np.eye(S.matrix.shape[0]), compute_uv=False)
    return int(np.sum(s <= tol * max(1.0, s[0])))


def _support(rho, tol=RANK_TOL):
    w, U = np.linalg.eigh(rho)
    keep = w > tol * max(w[-1], 1e-300)
    return phase_fix(U[:, keep][:, ::-1].T).T


def _psd_normalize(X):
    X = 0.5 * (X + X.conj().T)
    w, U = np.linalg.eigh(X)
    if w.sum() < 0:
        w = -w
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise NumericalFailureError("fixed vector has no positive part")
    rho = (U * w) @ U.conj().T
    return rho / np.trace(rho).real


def invariant_state(S: SuperOperator) -> np.ndarray:
    """PSD trace-one fixed point from the eigenvector nearest eigenvalue 1."""
    ev, vecs = np.linalg.eig(S.matrix)
    i = int(np.argmin(np.abs(ev - 1)))
    if abs(ev[i] - 1) > 1e-6:
        raise NumericalFailureError(f"no eigenvalue near 1 (closest {ev[i]:.3e})")
    X = unvec(vecs[:, i], S.dim)
    tr = np.trace(X)
    if abs(tr) > 1e-12:
        X = X / tr
    rho = _psd_normalize(X)
    resid = trace_norm(S.apply(rho) - rho)
    if resid > RESIDUAL_TOL:
        raise NumericalFailureError(f"invariant state residual {resid:.3e} exceeds {RESIDUAL_TOL}")
    return rho


@dataclass(frozen=True, eq=False)
class SpectralReport:
    eigenvalues: np.ndarray
    period_m: int
    gap_lambda: float
    rho_inv: np.ndarray
    invariant_subspace_E: np.ndarray
    E_is_full: bool
    fixed_point_dimension: int

    def to_dict(self):
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "m": self.period_m,
            "lambda": self.gap_lambda,
            "rho_inv": _matrix_json(self.rho_inv),
            "E": [[[float(z.real), float(z.imag)] for z in col] for col in self.invariant_subspace_E.T],
            "E_is_full": self.E_is_full,
            "d": self.fixed_point_dimension,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def _matrix_json(A):
    return [[[float(z.real), float(z.imag)] for z in row] for row in A]


def analyze(m: KrausMeasure, peripheral_tol=PERIPHERAL_TOL) -> SpectralReport:
    """Spectrum, period and gap of the channel, plus its invariant state.

    The period is the number of eigenvalues with modulus at least
    ``1 - peripheral_tol``; the gap is the largest modulus among the others.

    Raises:
        MultipleFixedPointsError: the fixed-point space has dimension d > 1.
        NumericalFailureError: no eigenvalue near 1, or the extracted state
            fails the residual check.
    """
    S = build_superoperator(m)
    d = fixed_point_dimension(S)
    if d > 1:
        raise MultipleFixedPointsError(d)
    if d == 0:
        raise NumericalFailureError("superoperator has no eigenvalue 1")
    ev = _sorted_eigenvalues(S.matrix)
    peripheral = np.abs(ev) >= 1 - peripheral_tol
    rest = np.abs(ev[~peripheral])
    rho = invariant_state(S)
    E = _support(rho)
    return SpectralReport(
        eigenvalues=ev,
        period_m=int(peripheral.sum()),
        gap_lambda=float(rest.max()) if rest.size else 0.0,
        rho_inv=rho,
        invariant_subspace_E=E,
        E_is_full=E.shape[1] == m.dim,
        fixed_point_dimension=d,
    )


def cesaro_projector(S: SuperOperator, tol=CESARO_TOL, max_doublings=40):
    """Limit of ``(1/N) sum_{n<N} S^n`` by repeated doubling of N.

    ``A_{2N} = (A_N + S^N A_N) / 2``; stops when consecutive averages differ
    by less than ``tol`` in spectral norm. Rounding in ``S^N`` grows like
    ``N * eps``, so ``tol`` cannot usefully go much below 1e-7.
    """
    n2 = S.matrix.shape[0]
    A = np.eye(n2, dtype=complex)
    P = S.matrix.copy()
    resid = np.inf
    for _ in range(max_doublings):
        A_next = 0.5 * (A + P @ A)
        resid = np.linalg.norm(A_next - A, 2)
        A, P = A_next, P @ P
        if resid < tol:
            return A
    raise NumericalFailureError(f"Cesaro averages did not stabilize (residual {resid:.3e})")


def _state_basis(k):
    """k^2 density matrices spanning the Hermitian matrices."""
    out = []
    for i in range(k):
        for j in range(k):
            v = np.zeros(k, dtype=complex)
            if i == j:
                v[i] = 1
            elif i < j:
                v[i], v[j] = 1, 1
            else:
                v[i], v[j] = 1, 1j
            v /= np.linalg.norm(v)
            out.append(np.outer(v, v.conj()))
    return out


def _psd_sqrt(rho, tol=RANK_TOL):
    w, U = np.linalg.eigh(rho)
    keep = w > tol * w[-1]
    root = (U[:, keep] * np.sqrt(w[keep])) @ U[:, keep].conj().T
    inv_root = (U[:, keep] / np.sqrt(w[keep])) @ U[:, keep].conj().T
    return root, inv_root


@dataclass(frozen=True, eq=False)
class PhiErgReport:
    holds: bool
    E: np.ndarray
    E_is_full: bool
    d: int
    extremal_supports: List[np.ndarray] = field(default_factory=list)
    extremal_states: List[np.ndarray] = field(default_factory=list)


def check_phi_erg(m: KrausMeasure, tol=CESARO_TOL, max_doublings=40) -> PhiErgReport:
    """Decide uniqueness of the invariant state and locate the extremal ones.

    The Cesaro projector is applied to a basis of density matrices; the rank of
    the images is the fixed-point dimension, cross-checked against the null
    space of ``S - Id``. Extremal supports are the eigenspaces of
    ``R^-1/2 X R^-1/2`` for the image ``R`` of ``Id/k`` and a generic fixed
    Hermitian ``X``; they are the orthogonal blocks carrying the extremal
    invariant states when fixed points form a direct sum of lines.
    """
    S = build_superoperator(m)
    k = m.dim
    A = cesaro_projector(S, tol=tol, max_doublings=max_doublings)
    images = np.array([A @ vec(b) for b in _state_basis(k)])
    sv = np.linalg.svd(images, compute_uv=False)
    d_cesaro = int(np.sum(sv > CESARO_RANK_TOL * sv[0]))
    d_null = fixed_point_dimension(S)
    if d_cesaro != d_null:
        raise NumericalFailureError(
            f"fixed-point dimension estimates disagree: Cesaro {d_cesaro}, null space {d_null}"
        )

    R = _psd_normalize(unvec(A @ vec(np.eye(k) / k), k))
    root, inv_root = _psd_sqrt(R, CESARO_RANK_TOL)
    rng = np.random.default_rng(12345)
    coeffs = rng.standard_normal(len(images))
    X = unvec(coeffs @ images, k)
    X = 0.5 * (X + X.conj().T)
    Y = inv_root @ X @ inv_root
    Y = 0.5 * (Y + Y.conj().T)
    supp = _support(R, CESARO_RANK_TOL)
    w, U = np.linalg.eigh(supp.conj().T @ Y @ supp)
    vecs = supp @ U
    groups = []
    scale = max(np.abs(w).max(), 1e-300)
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > 1e-6 * scale:
            groups.append(vecs[:, start:i])
            start = i
    supports = [phase_fix(g.T).T for g in groups]
    states = []
    for F in supports:
        rho_j = root @ (F @ F.conj().T) @ root
        states.append(rho_j / np.trace(rho_j).real)

    holds = d_null == 1
    E = _support(invariant_state(S)) if holds else np.zeros((k, 0), dtype=complex)
    return PhiErgReport(
        holds=holds,
        E=E,
        E_is_full=holds and E.shape[1] == k,
        d=d_null,
        extremal_supports=supports,
        extremal_states=states,
    )
