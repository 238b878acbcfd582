"""Small dense complex linear algebra: SVD, polar decomposition, Hermitian
eigendecomposition, with a deterministic phase convention on all returned
vectors (first non-negligible component real and positive)."""

from typing import NamedTuple, Tuple

import numpy as np

from .exceptions import InvalidInputError

#: floor applied to singular values before taking logarithms
LOG_FLOOR = 1e-300

_PHASE_TOL = 1e-12


class SvdResult(NamedTuple):
    """``A = left_vectors @ diag(singular_values) @ right_vectors.conj().T``."""

    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray


def as_square(A, name="matrix") -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise InvalidInputError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def _phases(x):
    mod = np.abs(x)
    first = np.argmax(mod > _PHASE_TOL * mod.max(axis=-1, keepdims=True), axis=-1)
    pivot = np.take_along_axis(x, first[..., None], axis=-1)
    pmod = np.abs(pivot)
    return np.where(pmod > 0, pivot.conj() / np.where(pmod > 0, pmod, 1.0), 1.0)


def phase_fix(x: np.ndarray) -> np.ndarray:
    """Multiply each vector along the last axis by a unit phase so that its
    first component with modulus above ``1e-12 * max|x|`` is real positive."""
    x = np.asarray(x, dtype=complex)
    return x * _phases(x)


def svd(A) -> SvdResult:
    """Full SVD of a square complex matrix.

    Singular vector pairs are phase-fixed on the right vector; left vectors
    belonging to zero singular values are phase-fixed on their own, which makes
    the completion of the left basis deterministic.
    """
    A = as_square(A)
    U, s, Vh = np.linalg.svd(A)
    ph = _phases(Vh.conj())[:, 0]
    U, V = U * ph, Vh.conj().T * ph
    null = s <= _PHASE_TOL * max(1.0, s[0])
    if np.any(null):
        U[:, null] = phase_fix(U[:, null].T).T
    return SvdResult(U, s, V)


def polar(A) -> Tuple[np.ndarray, np.ndarray]:
    """Polar decomposition ``A = U @ P`` with ``P = (A* A)^(1/2)``.

    For singular ``A`` the unitary is the canonical completion
    ``U = U_svd @ V_svd*`` built from the phase-fixed SVD.
    """
    U_s, s, V = svd(A)
    U = U_s @ V.conj().T
    P = (V * s) @ V.conj().T
    return U, 0.5 * (P + P.conj().T)


def top_two_singular_values(A) -> Tuple[float, float]:
    """``(a1, a2)``; their product is the norm of the second exterior power."""
    A = as_square(A)
    if A.shape[0] < 2:
        raise InvalidInputError("need dimension k >= 2 for the second singular value")
    s = np.linalg.svd(A, compute_uv=False)
    return float(s[0]), float(s[1])


def herm_eig(H, tol=1e-10) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and phase-fixed eigenvectors of a Hermitian matrix."""
    H = as_square(H)
    scale = np.linalg.norm(H)
    if np.linalg.norm(H - H.conj().T) > tol * max(scale, np.finfo(float).tiny):
        raise InvalidInputError("matrix is not Hermitian")
    w, vecs = np.linalg.eigh(0.5 * (H + H.conj().T))
    return w, phase_fix(vecs.T).T


def log_singular_values(s):
    return np.log(np.maximum(s, LOG_FLOOR))


def trace_norm(X) -> float:
    """``tr|X|`` for a square matrix."""
    return float(np.linalg.svd(np.asarray(X, dtype=complex), compute_uv=False).sum())


def random_unitary(k, rng) -> np.ndarray:
    """Haar-distributed unitary from the QR of a complex Ginibre matrix."""
    Z = (rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))
