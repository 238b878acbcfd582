"""Points of complex projective space, the metric ``d = (1 - |<x,y>|^2)^(1/2)``
and the matrix action ``v . x = ray(v x)``."""

from dataclasses import dataclass

import numpy as np

from .exceptions import AnnihilationError, InvalidInputError, ZeroVectorError
from .numerics import phase_fix

ZERO_NORM = 1e-150


@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    """A ray in C^k, stored as a phase-fixed unit representative."""

    vector: np.ndarray

    def __post_init__(self):
        v = np.array(self.vector, dtype=complex)
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def dim(self):
        return self.vector.shape[0]

    def projector(self):
        return np.outer(self.vector, self.vector.conj())

    def isclose(self, other, atol=1e-12):
        return distance(self, other) <= atol

    def __repr__(self):
        return f"ProjectivePoint({np.array2string(self.vector, precision=6)})"


def normalize_rows(X):
    """Unit-normalize and phase-fix each row of a (n, k) array of vectors."""
    X = np.asarray(X, dtype=complex)
    norms = np.linalg.norm(X, axis=-1, keepdims=True)
    if np.any(norms <= ZERO_NORM):
        raise ZeroVectorError("cannot take the ray of a numerically zero vector")
    return phase_fix(X / norms)


def from_vector(x) -> ProjectivePoint:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError(f"expected a non-empty vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("vector has non-finite entries")
    return ProjectivePoint(normalize_rows(x[None, :])[0])


def basis_point(k, i) -> ProjectivePoint:
    e = np.zeros(k, dtype=complex)
    e[i] = 1.0
    return ProjectivePoint(e)


def _as_vector(p):
    return p.vector if isinstance(p, ProjectivePoint) else np.asarray(p, dtype=complex)


def wedge_norm(X, Y):
    """Row-wise ``||x ^ y||`` computed from the 2x2 minors, which stays accurate
    for nearly parallel vectors where ``1 - |<x,y>|^2`` cancels."""
    X = np.asarray(X, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    k = X.shape[-1]
    iu, ju = np.triu_indices(k, 1)
    # separate real products (no fused multiply-add) make the minors exactly
    # antisymmetric in (x, y) and exactly zero for identical inputs
    xr, xi, yr, yi = X.real, X.imag, Y.real, Y.imag
    re = (xr[..., iu] * yr[..., ju] - xi[..., iu] * yi[..., ju]) - (xr[..., ju] * yr[..., iu] - xi[..., ju] * yi[..., iu])
    im = (xr[..., iu] * yi[..., ju] + xi[..., iu] * yr[..., ju]) - (xr[..., ju] * yi[..., iu] + xi[..., ju] * yr[..., iu])
    return np.sqrt(np.sum(re * re + im * im, axis=-1))


def distance(x, y) -> float:
    x, y = _as_vector(x), _as_vector(y)
    if x.shape != y.shape:
        raise InvalidInputError(f"dimension mismatch: {x.shape} vs {y.shape}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    return float(min(1.0, wedge_norm(x, y) / (nx * ny)))


def distances(X, Y):
    """Row-wise distances between two (n, k) arrays of unit vectors."""
    return np.minimum(wedge_norm(X, Y), 1.0)


def pairwise_distances(X, Y, block=1024):
    """(n, m) matrix of distances between rows of unit-vector arrays.

    Uses the Gram matrix, filled in row blocks to bound memory, and recomputes
    nearly coincident pairs through the exterior-product minors.
    """
    X = np.asarray(X, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    D = np.empty((X.shape[0], Y.shape[0]))
    Yh = Y.conj().T
    for i in range(0, X.shape[0], block):
        G = np.abs(X[i : i + block] @ Yh) ** 2
        D[i : i + block] = np.sqrt(np.clip(1.0 - G, 0.0, 1.0))
    close = np.nonzero(D < 1e-6)
    if close[0].size:
        D[close] = distances(X[close[0]], Y[close[1]])
    return D


def apply(A, x) -> ProjectivePoint:
    A = np.asarray(A, dtype=complex)
    x = _as_vector(x)
    if A.ndim != 2 or A.shape != (x.shape[0], x.shape[0]):
        raise InvalidInputError(f"matrix of shape {A.shape} cannot act on C^{x.shape[0]}")
    y = A @ x
    if np.linalg.norm(y) <= ZERO_NORM:
        raise AnnihilationError("matrix annihilates the representative vector")
    return ProjectivePoint(normalize_rows(y[None, :])[0])


def sample_fubini_study(k, rng, size=None):
    """Unitarily invariant random ray(s): normalized standard complex Gaussians.

    Returns a ProjectivePoint, or an (size, k) array of representatives when
    ``size`` is given.
    """
    if k < 1:
        raise InvalidInputError("dimension must be positive")
    n = 1 if size is None else size
    Z = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    X = normalize_rows(Z)
    return ProjectivePoint(X[0]) if size is None else X
