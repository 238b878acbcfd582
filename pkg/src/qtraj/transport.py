"""Finite weighted point sets on projective space and their exact
Wasserstein-1 distance for the cost ``d(x, y) = (1 - |<x,y>|^2)^(1/2)``."""

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog

from .exceptions import BudgetError, InvalidInputError, NumericalFailureError
from .projective import ProjectivePoint, distances, normalize_rows, pairwise_distances

MERGE_TOL = 1e-12
WEIGHT_TOL = 1e-12
MAX_POINTS = 5000
#: largest number of transport-plan variables handed to the LP solver
MAX_LP_CELLS = 10**6


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted rays: ``vectors`` is (n, k) with phase-fixed unit rows."""

    vectors: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.vectors, dtype=complex)
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise InvalidInputError(f"expected a non-empty (n, k) array of vectors, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("support vectors have non-finite entries")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (X.shape[0],):
            raise InvalidInputError(f"{w.shape[0] if w.ndim else 0} weights for {X.shape[0]} points")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise InvalidInputError("weights must be positive and finite")
        if abs(w.sum() - 1) > WEIGHT_TOL * max(1, len(w)):
            raise InvalidInputError(f"weights sum to {w.sum():.15g}, not 1")
        X = normalize_rows(X)
        X.setflags(write=False)
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "vectors", X)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, vectors):
        n = np.asarray(vectors).shape[0]
        return cls(vectors, np.full(n, 1.0 / n))

    @classmethod
    def from_points(cls, points: Sequence, weights=None):
        X = np.array([p.vector if isinstance(p, ProjectivePoint) else p for p in points], dtype=complex)
        if weights is None:
            return cls.uniform(X)
        return cls(X, weights)

    @property
    def dim(self):
        return self.vectors.shape[1]

    @property
    def size(self):
        return self.vectors.shape[0]

    @property
    def points(self):
        return [ProjectivePoint(x) for x in self.vectors]

    def is_uniform(self):
        return bool(np.all(np.abs(self.weights - 1.0 / self.size) <= 1e-15))

    def density_matrix(self):
        """``sum w_i x_i x_i*``, the barycenter of the rank-one projectors."""
        X = self.vectors
        return np.einsum("n,na,nb->ab", self.weights, X, X.conj())

    def merged(self, tol=MERGE_TOL):
        """Combine rays closer than ``tol`` into one atom (first occurrence kept)."""
        X = self.vectors
        keys = np.round(np.concatenate([X.real, X.imag], axis=1) * 1e9).astype(np.int64)
        _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.reshape(-1)
        if len(first) == self.size:
            return self
        rep = first[inverse]
        close = distances(X, X[rep]) < tol
        label = np.where(close, rep, np.arange(self.size))
        uniq, idx, inv = np.unique(label, return_index=True, return_inverse=True)
        w = np.bincount(inv.reshape(-1), weights=self.weights)
        return EmpiricalMeasure(X[uniq], w / w.sum())

    def equals(self, other, tol=1e-12):
        return self.dim == other.dim and w1(self, other) <= tol

    def __repr__(self):
        return f"EmpiricalMeasure(size={self.size}, dim={self.dim})"


def dirac(x) -> EmpiricalMeasure:
    v = x.vector if isinstance(x, ProjectivePoint) else np.asarray(x, dtype=complex)
    return EmpiricalMeasure(v[None, :], np.ones(1))


def cesaro_mix(measures: Sequence[EmpiricalMeasure]) -> EmpiricalMeasure:
    """Equal-weight mixture of the given measures."""
    measures = list(measures)
    if not measures:
        raise InvalidInputError("cannot mix an empty list of measures")
    k = measures[0].dim
    if any(mu.dim != k for mu in measures):
        raise InvalidInputError("measures live on projective spaces of different dimensions")
    X = np.concatenate([mu.vectors for mu in measures])
    w = np.concatenate([mu.weights for mu in measures]) / len(measures)
    return EmpiricalMeasure(X, w / w.sum())


def _unit_counts(w, max_units):
    """Integer counts ``c`` with ``w = c / sum(c)`` if the weights are
    rational with small denominators, else None."""
    units = 1
    for x in np.unique(w):
        fr = Fraction(float(x)).limit_denominator(max_units)
        if abs(float(fr) - x) > 1e-13:
            return None
        units = units * fr.denominator // gcd(units, fr.denominator)
        if units > max_units:
            return None
    c = np.rint(w * units).astype(np.int64)
    if c.sum() != units:
        return None
    return c


def _assignment_cost(X, Y):
    C = pairwise_distances(X, Y)
    r, c = linear_sum_assignment(C)
    return float(C[r, c].mean())


def _lp_cost(a: EmpiricalMeasure, b: EmpiricalMeasure):
    n, m = a.size, b.size
    if n * m > MAX_LP_CELLS:
        raise BudgetError(
            f"general transport instance with {n} x {m} cells exceeds {MAX_LP_CELLS}; subsample the measures"
        )
    C = pairwise_distances(a.vectors, b.vectors)
    rows = sparse.kron(sparse.identity(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.identity(m))
    A = sparse.vstack([rows, cols]).tocsr()
    rhs = np.concatenate([a.weights, b.weights])
    # drop one redundant constraint so the equality system has full row rank
    res = linprog(
        C.reshape(-1),
        A_eq=A[:-1],
        b_eq=rhs[:-1],
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise NumericalFailureError(f"transport LP failed: {res.message}")
    return float(res.fun)


def w1(a: EmpiricalMeasure, b: EmpiricalMeasure, max_points=MAX_POINTS) -> float:
    """Exact optimal transport cost between two finite measures.

    Duplicate rays are merged first. Equal-size uniform measures (also after
    expanding rational weights into equal atoms, when that stays within
    ``max_points``) are matched by an assignment solver; anything else is
    solved as a transportation linear program.

    Raises:
        InvalidInputError: the measures live in different dimensions.
        BudgetError: more than ``max_points`` support points on a side.
    """
    if a.dim != b.dim:
        raise InvalidInputError(f"dimension mismatch: C^{a.dim} vs C^{b.dim}")
    a, b = a.merged(), b.merged()
    if max(a.size, b.size) > max_points:
        raise BudgetError(
            f"support sizes {a.size} and {b.size} exceed the solver budget of {max_points}; subsample"
        )
    if a.size == 1 or b.size == 1:
        C = pairwise_distances(a.vectors, b.vectors)
        return float(np.sum(C * (a.weights[:, None] * b.weights[None, :])))
    if a.size == b.size and a.is_uniform() and b.is_uniform():
        return _assignment_cost(a.vectors, b.vectors)
    ca, cb = _unit_counts(a.weights, max_points), _unit_counts(b.weights, max_points)
    if ca is not None and cb is not None:
        total = ca.sum() * cb.sum() // gcd(int(ca.sum()), int(cb.sum()))
        if total <= max_points:
            X = np.repeat(a.vectors, ca * (total // ca.sum()), axis=0)
            Y = np.repeat(b.vectors, cb * (total // cb.sum()), axis=0)
            return _assignment_cost(X, Y)
    return _lp_cost(a, b)
