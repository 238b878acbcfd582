"""Finite Kraus measures ``mu = sum_i w_i delta_{v_i}`` with the stochasticity
condition ``sum_i w_i v_i* v_i = Id``, the induced transition probabilities and a
set of built-in models."""

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .exceptions import InvalidModelError, InvalidParameterError, ParseError
from .projective import ProjectivePoint

DEFAULT_TOL = 1e-9
REPAIR_LIMIT = 1e-6


@dataclass(frozen=True, eq=False)
class KrausMeasure:
    """Weighted family of k x k matrices.

    Weights need not sum to one; only ``sum w v* v = Id`` is required, and that
    is checked by :func:`validate` rather than at construction so that invalid
    measures can still be inspected.
    """

    weights: np.ndarray
    matrices: np.ndarray
    name: str = ""

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        V = np.array(self.matrices, dtype=complex)
        if V.ndim == 2:
            V = V[None]
        if w.size == 0 or V.shape[0] == 0:
            raise InvalidModelError("a Kraus measure needs at least one element")
        if V.ndim != 3 or V.shape[1] != V.shape[2]:
            raise InvalidModelError(f"matrices must have shape (n, k, k), got {V.shape}")
        if V.shape[0] != w.size:
            raise InvalidModelError(f"{w.size} weights for {V.shape[0]} matrices")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(V))):
            raise InvalidModelError("non-finite weight or matrix entry")
        if np.any(w < 0):
            raise InvalidModelError("weights must be non-negative")
        w.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "matrices", V)

    @classmethod
    def from_elements(cls, elements, name=""):
        """Build from an iterable of ``(weight, matrix)`` pairs."""
        elements = list(elements)
        if not elements:
            raise InvalidModelError("a Kraus measure needs at least one element")
        return cls([w for w, _ in elements], [v for _, v in elements], name)

    @property
    def dim(self):
        return self.matrices.shape[1]

    @property
    def n_elements(self):
        return self.matrices.shape[0]

    @property
    def elements(self):
        return list(zip(self.weights.tolist(), self.matrices))

    @cached_property
    def absorbed(self):
        """Matrices ``sqrt(w_i) v_i`` (weights folded in)."""
        A = np.sqrt(self.weights)[:, None, None] * self.matrices
        A.setflags(write=False)
        return A

    @cached_property
    def stochasticity_defect(self):
        S = np.einsum("i,ikj,ikl->jl", self.weights, self.matrices.conj(), self.matrices)
        return float(np.linalg.norm(S - np.eye(self.dim)))

    def require_valid(self, tol=DEFAULT_TOL):
        if self.stochasticity_defect > tol:
            raise InvalidModelError(
                f"model {self.name or '<unnamed>'} violates sum w v*v = Id: "
                f"defect {self.stochasticity_defect:.3e} > tol {tol:.1e}"
            )
        return self

    def __eq__(self, other):
        if not isinstance(other, KrausMeasure):
            return NotImplemented
        return (
            self.name == other.name
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.matrices, other.matrices)
        )

    __hash__ = None


@dataclass(frozen=True)
class ValidationReport:
    defect: float
    tol: float
    passed: bool
    second_moment: float


def validate(m: KrausMeasure, tol=DEFAULT_TOL) -> ValidationReport:
    """Check the stochasticity condition in Frobenius norm.

    Also reports the second moment ``sum w ||v||_F^2``, which equals ``k`` for a
    valid measure.
    """
    if tol <= 0:
        raise InvalidParameterError("tolerance must be positive")
    second = float(np.sum(m.weights * np.sum(np.abs(m.matrices) ** 2, axis=(1, 2))))
    d = m.stochasticity_defect
    return ValidationReport(defect=d, tol=tol, passed=d <= tol, second_moment=second)


def repair(m: KrausMeasure, tol=DEFAULT_TOL) -> KrausMeasure:
    """Rescale all weights by ``k / tr(sum w v* v)``; only for defects below 1e-6."""
    if m.stochasticity_defect <= tol:
        return m
    if m.stochasticity_defect >= REPAIR_LIMIT:
        raise InvalidModelError(
            f"defect {m.stochasticity_defect:.3e} too large to repair (limit {REPAIR_LIMIT:.0e})"
        )
    mean_eig = float(np.sum(m.weights * np.sum(np.abs(m.matrices) ** 2, axis=(1, 2)))) / m.dim
    return KrausMeasure(m.weights / mean_eig, m.matrices, m.name)


@dataclass(frozen=True)
class TransitionDistribution:
    probabilities: np.ndarray


def transition_probabilities(m: KrausMeasure, x) -> TransitionDistribution:
    """``p_i = w_i ||v_i x||^2`` for a unit representative ``x`` of the ray."""
    m.require_valid()
    x = x.vector if isinstance(x, ProjectivePoint) else np.asarray(x, dtype=complex)
    if x.shape != (m.dim,):
        raise InvalidModelError(f"point of dimension {x.shape} for a model on C^{m.dim}")
    x = x / np.linalg.norm(x)
    p = m.weights * np.sum(np.abs(m.matrices @ x) ** 2, axis=1)
    return TransitionDistribution(p)


# -- built-in models ------------------------------------------------------------


def _rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _appc_example1():
    v1 = np.diag([np.exp(1j), np.exp(-1j)])
    v2 = np.array([[math.cos(1), 1j * math.sin(1)], [1j * math.sin(1), math.cos(1)]])
    return [0.5, 0.5], [v1, v2]


def _appc_example2():
    v1 = np.diag([1j, -1j])
    v2 = np.array([[0, 1j], [1j, 0]])
    return [0.5, 0.5], [v1, v2]


def _flip_flop():
    return [1.0, 1.0], [np.array([[0, 1], [0, 0]]), np.array([[0, 0], [1, 0]])]


def _amplitude_damping(p=0.5):
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"amplitude_damping needs p in [0, 1], got {p}")
    K0 = np.array([[1, 0], [0, math.sqrt(1 - p)]])
    K1 = np.array([[0, math.sqrt(p)], [0, 0]])
    return [1.0, 1.0], [K0, K1]


def _rotating_damping(theta=math.pi / 4, a=0.8, b=0.6):
    if abs(a) > 1 or abs(b) > 1:
        raise InvalidParameterError(f"rotating_damping needs |a|, |b| <= 1, got a={a}, b={b}")
    V1 = np.diag([a, b])
    V2 = _rotation(theta) @ np.diag([math.sqrt(1 - a * a), math.sqrt(1 - b * b)])
    return [1.0, 1.0], [V1, V2]


BUILTIN_MODELS = {
    "appc_example1": _appc_example1,
    "appc_example2": _appc_example2,
    "flip_flop": _flip_flop,
    "amplitude_damping": _amplitude_damping,
    "rotating_damping": _rotating_damping,
}


def builtin_model(name, params: Optional[Mapping[str, float]] = None) -> KrausMeasure:
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise InvalidParameterError(
            f"unknown model {name!r}; choose from {', '.join(sorted(BUILTIN_MODELS))}"
        ) from None
    params = dict(params or {})
    try:
        weights, matrices = factory(**{k: float(v) for k, v in params.items()})
    except TypeError as exc:
        raise InvalidParameterError(f"bad parameters for {name}: {exc}") from None
    return KrausMeasure(weights, np.array(matrices, dtype=complex), name)


# -- JSON model files -------------------------------------------------------------


def to_dict(m: KrausMeasure) -> dict:
    return {
        "dim": m.dim,
        "name": m.name,
        "elements": [
            {
                "weight": float(w),
                "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in v],
            }
            for w, v in zip(m.weights, m.matrices)
        ],
    }


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    return float(value)


def from_dict(data, source="<dict>") -> KrausMeasure:
    if not isinstance(data, dict):
        raise ParseError(f"{source}: top level must be an object")
    for key in ("dim", "elements"):
        if key not in data:
            raise ParseError(f"{source}: missing field {key!r}")
    k = data["dim"]
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ParseError(f"{source}: field 'dim' must be a positive integer, got {k!r}")
    elements = data["elements"]
    if not isinstance(elements, list) or not elements:
        raise ParseError(f"{source}: field 'elements' must be a non-empty list")
    weights, matrices = [], []
    for i, el in enumerate(elements):
        where = f"{source}: elements[{i}]"
        if not isinstance(el, dict) or "weight" not in el or "matrix" not in el:
            raise ParseError(f"{where}: expected an object with 'weight' and 'matrix'")
        weights.append(_number(el["weight"], f"{where}.weight"))
        rows = el["matrix"]
        if not isinstance(rows, list) or len(rows) != k:
            n = len(rows) if isinstance(rows, list) else "?"
            raise ParseError(f"{where}.matrix: expected {k} rows for dim={k}, got {n}")
        mat = np.empty((k, k), dtype=complex)
        for r, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != k:
                n = len(row) if isinstance(row, list) else "?"
                raise ParseError(f"{where}.matrix[{r}]: expected {k} entries, got {n}")
            for c, z in enumerate(row):
                if not isinstance(z, list) or len(z) != 2:
                    raise ParseError(f"{where}.matrix[{r}][{c}]: expected [re, im], got {z!r}")
                mat[r, c] = complex(
                    _number(z[0], f"{where}.matrix[{r}][{c}][0]"),
                    _number(z[1], f"{where}.matrix[{r}][{c}][1]"),
                )
        matrices.append(mat)
    name = data.get("name", "")
    if not isinstance(name, str):
        raise ParseError(f"{source}: field 'name' must be a string")
    try:
        return KrausMeasure(weights, np.array(matrices), name)
    except InvalidModelError as exc:
        raise ParseError(f"{source}: {exc}") from None


def save(m: KrausMeasure, path):
    Path(path).write_text(json.dumps(to_dict(m), indent=1) + "\n")


def load(path, tol=DEFAULT_TOL, allow_invalid=False, auto_repair=False) -> KrausMeasure:
    """Read a JSON model file.

    Raises:
        ParseError: malformed JSON or schema violation, with line or field context.
        InvalidModelError: the stochasticity defect exceeds ``tol`` (unless
            ``allow_invalid``; ``auto_repair`` rescales small defects instead).
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    m = from_dict(data, str(path))
    if auto_repair:
        m = repair(m, tol)
    if not allow_invalid:
        m.require_valid(tol)
    return m


def resolve_model(spec, params=None, **load_kwargs) -> KrausMeasure:
    """A builtin name, ``name:key=val,...`` string, dict or path to a JSON file."""
    if isinstance(spec, KrausMeasure):
        return spec
    if isinstance(spec, dict):
        if "elements" in spec:
            return from_dict(spec).require_valid()
        return builtin_model(spec["name"], spec.get("params"))
    spec = str(spec)
    name, _, rest = spec.partition(":")
    if name in BUILTIN_MODELS:
        merged = dict(params or {})
        for item in filter(None, rest.split(",")):
            key, eq, val = item.partition("=")
            if not eq:
                raise InvalidParameterError(f"bad model parameter {item!r}, expected key=value")
            try:
                merged[key.strip()] = float(val)
            except ValueError:
                raise InvalidParameterError(f"bad value in model parameter {item!r}") from None
        return builtin_model(name, merged)
    if not Path(spec).exists():
        raise InvalidParameterError(f"{spec!r} is neither a builtin model nor an existing file")
    return load(spec, **load_kwargs)
