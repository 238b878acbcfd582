"""Sampling quantum trajectories and the processes built on them.

Two samplers share one convention for randomness: trajectory ``t`` of a run
with master seed ``s`` draws from ``PCG64(substream_seed(s, t))``, first any
initial-state draws, then exactly one uniform per step. :class:`TrajectoryState`
steps a single trajectory; :func:`simulate_ensemble` advances many at once with
array operations and records selected quantities at chosen times. Because each
trajectory owns its stream, results do not depend on how trajectories are
split across threads.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .exceptions import BudgetError, DeadStateError, InvalidInputError
from .kraus import KrausMeasure
from .numerics import polar, svd
from .projective import ProjectivePoint, distances, from_vector, normalize_rows, sample_fubini_study
from .transport import EmpiricalMeasure

MASK64 = (1 << 64) - 1
DEAD_PROBABILITY = 1e-12
#: |R_jj| below this fraction of ||v|| counts as an exact zero in the QR update
QR_ZERO = 1e-13
#: cumulative logs below -LOG_SENTINEL_RATE * n are reported as -inf
LOG_SENTINEL_RATE = 700.0
WORD_BUDGET = 10**6


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def substream_seed(master: int, index: int) -> int:
    return splitmix64((splitmix64(master & MASK64) + index) & MASK64)


def substream_state(master: int, index: int) -> dict:
    """Full PCG64 state (128-bit state and odd increment) of a substream."""
    s = substream_seed(master, index)
    a, b, c = splitmix64(s), splitmix64(s ^ 0x5851F42D4C957F2D), splitmix64(s ^ MASK64)
    return {
        "bit_generator": "PCG64",
        "state": {"state": (s << 64) | a, "inc": ((b << 64) | c) | 1},
        "has_uint32": 0,
        "uinteger": 0,
    }


def substream(master: int, index: int) -> np.random.Generator:
    """Generator for trajectory ``index`` of a run with seed ``master``."""
    bg = np.random.PCG64(0)
    bg.state = substream_state(master, index)
    return np.random.Generator(bg)


def _choose(p, u):
    """Index ``i`` with ``u * sum(p)`` in ``[c_{i-1}, c_i)`` for the cumulative sums ``c``."""
    c = np.cumsum(p, axis=-1)
    idx = np.sum(c <= (u * c[..., -1])[..., None], axis=-1)
    return np.minimum(idx, p.shape[-1] - 1)


def _draw_initial(start, k, rng):
    """Returns ``("pure", x)`` or ``("density", rho)``; may consume draws from rng."""
    if isinstance(start, EmpiricalMeasure):
        if start.dim != k:
            raise InvalidInputError(f"initial measure on C^{start.dim} for a model on C^{k}")
        i = int(_choose(start.weights, rng.random()))
        return "pure", start.vectors[i]
    if isinstance(start, str):
        if start != "uniform":
            raise InvalidInputError(f"unknown initial distribution {start!r}")
        return "pure", sample_fubini_study(k, rng).vector
    if isinstance(start, ProjectivePoint):
        start = start.vector
    a = np.asarray(start, dtype=complex)
    if a.shape == (k,):
        return "pure", from_vector(a).vector
    if a.shape == (k, k):
        if abs(np.trace(a) - 1) > 1e-10 or np.linalg.norm(a - a.conj().T) > 1e-10:
            raise InvalidInputError("initial density matrix must be Hermitian with unit trace")
        return "density", 0.5 * (a + a.conj().T)
    raise InvalidInputError(f"initial state of shape {a.shape} does not match C^{k}")


def singular_values(W):
    """Batched singular values (descending) of (..., k, k) matrices; closed
    form for k = 2 with ``a2 = |det| / a1`` to avoid cancellation."""
    if W.shape[-1] != 2:
        return np.linalg.svd(W, compute_uv=False)
    fro2 = np.sum(np.abs(W) ** 2, axis=(-2, -1))
    det = np.abs(W[..., 0, 0] * W[..., 1, 1] - W[..., 0, 1] * W[..., 1, 0])
    disc = np.sqrt(np.maximum(fro2 * fro2 - 4 * det * det, 0.0))
    a1 = np.sqrt(0.5 * (fro2 + disc))
    a2 = np.divide(det, a1, out=np.zeros_like(a1), where=a1 > 0)
    return np.stack([a1, a2], axis=-1)


def _operator_norm(W):
    """Largest singular value of one matrix; scalar closed form for k = 2."""
    if W.shape[-1] != 2:
        return float(np.linalg.norm(W, 2))
    a, b, c, d = W.ravel().tolist()
    fro2 = abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2
    det = abs(a * d - b * c)
    return math.sqrt(0.5 * (fro2 + math.sqrt(max(fro2 * fro2 - 4 * det * det, 0.0))))


def initial_frame(k):
    """Fixed generic unitary frame for the QR recursion.

    Starting from the identity would put a frame column in the kernel of any
    Kraus matrix that annihilates a basis vector, and that flag volume never
    recovers. A frame drawn once from a fixed seed avoids such coincidences.
    """
    g = np.random.default_rng(0x51F15EED + k)
    Q, R = np.linalg.qr(g.standard_normal((k, k)) + 1j * g.standard_normal((k, k)))
    return Q * (np.diagonal(R) / np.abs(np.diagonal(R)))


def unitary_log_scales(V, tol=1e-12):
    """``log sqrt(c)`` for elements with ``v* v = c Id`` (else nan).

    For such elements every ``|R_jj|`` equals ``sqrt(c)`` exactly, so the QR
    increment is set to that value instead of the rounded diagonal.
    """
    k = V.shape[-1]
    G = np.conj(np.swapaxes(V, -2, -1)) @ V
    c = np.real(np.trace(G, axis1=-2, axis2=-1)) / k
    dev = np.linalg.norm(G - c[:, None, None] * np.eye(k), axis=(-2, -1))
    scaled = (c > 0) & (dev <= tol * np.maximum(c, 1e-300))
    out = np.full(len(V), np.nan)
    with np.errstate(divide="ignore"):
        out[scaled] = np.where(np.abs(c[scaled] - 1) <= tol, 0.0, 0.5 * np.log(c[scaled]))
    return out


def _log_abs_diag(R, vnorm, unit_log):
    d = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    with np.errstate(divide="ignore"):
        out = np.log(d)
    out = np.where(d <= QR_ZERO * vnorm[..., None], -np.inf, out)
    unit_log = np.asarray(unit_log)[..., None]
    return np.where(np.isnan(unit_log), out, unit_log)


def gammas_from_logs(logs, n):
    """Sorted (descending) exponents from cumulative QR logs; -inf sentinel
    for coordinates that fell below ``-700 n``."""
    logs = np.sort(np.asarray(logs, dtype=float), axis=-1)[..., ::-1]
    if n == 0:
        return np.zeros_like(logs)
    g = logs / n
    return np.where(logs < -LOG_SENTINEL_RATE * n, -np.inf, g)


@dataclass
class LyapunovReport:
    gamma_hat: np.ndarray
    n_used: int
    stderr: np.ndarray


@dataclass(eq=False)
class TrajectoryState:
    """One trajectory: current state, normalized product and Lyapunov frame.

    ``W_normalized`` is ``W_n / ||W_n||`` with ``log_norm = log ||W_n||``;
    ``W_window`` is the normalized product of the steps after ``window_start``.
    """

    model: KrausMeasure
    mode: str
    state: np.ndarray
    rng: np.random.Generator
    x0: Optional[np.ndarray] = None
    n: int = 0
    window_start: int = 0
    W_normalized: np.ndarray = None
    log_norm: float = 0.0
    W_window: np.ndarray = None
    lyap_frame: np.ndarray = None
    lyap_logs: np.ndarray = None
    history: List[int] = field(default_factory=list)
    lyap_increments: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        k = self.model.dim
        eye = np.eye(k, dtype=complex)
        if self.W_normalized is None:
            self.W_normalized = eye.copy()
        if self.W_window is None:
            self.W_window = eye.copy()
        if self.lyap_frame is None:
            self.lyap_frame = initial_frame(k)
        if self.lyap_logs is None:
            self.lyap_logs = np.zeros(k)
        self._vnorms = np.linalg.norm(self.model.matrices, 2, axis=(1, 2))
        self._unit_logs = unitary_log_scales(self.model.matrices)

    @property
    def point(self) -> ProjectivePoint:
        """Current ray (pure mode) or top eigenvector of the state (density mode)."""
        if self.mode == "pure":
            return from_vector(self.state)
        w, U = np.linalg.eigh(self.state)
        return from_vector(U[:, -1])

    def probabilities(self):
        V, w = self.model.matrices, self.model.weights
        if self.mode == "pure":
            return w * np.sum(np.abs(V @ self.state) ** 2, axis=1)
        return w * np.real(np.einsum("iab,bc,iac->i", V, self.state, V.conj()))

    def step(self) -> int:
        """Sample one outcome, update everything, return the outcome index."""
        u = self.rng.random()
        c = np.cumsum(self.probabilities())
        if c[-1] < DEAD_PROBABILITY:
            raise DeadStateError(f"total outcome probability {c[-1]:.3e} at step {self.n}")
        # same rule as _choose: the number of cumulative sums <= u * total
        i = min(int(np.searchsorted(c, u * c[-1], side="right")), len(c) - 1)
        v = self.model.matrices[i]
        if self.mode == "pure":
            y = v @ self.state
            self.state = y / math.sqrt(np.vdot(y, y).real)
        else:
            r = v @ self.state @ v.conj().T
            r = r / np.trace(r).real
            self.state = 0.5 * (r + r.conj().T)

        W = v @ self.W_normalized
        nrm = _operator_norm(W)
        if nrm == 0:
            raise DeadStateError(f"product of Kraus matrices vanished at step {self.n + 1}")
        self.W_normalized = W / nrm
        self.log_norm += math.log(nrm)
        if self.n >= self.window_start:
            Ww = v @ self.W_window
            self.W_window = Ww / _operator_norm(Ww)

        Q, R = np.linalg.qr(v @ self.lyap_frame)
        if np.isnan(self._unit_logs[i]):
            inc = _log_abs_diag(R, self._vnorms[i], np.nan)
        else:
            inc = np.full(len(R), self._unit_logs[i])
        self.lyap_frame = Q
        self.lyap_logs = self.lyap_logs + inc
        self.lyap_increments.append(inc)
        self.history.append(i)
        self.n += 1
        return i

    def run(self, n_steps):
        for _ in range(n_steps):
            self.step()
        return self

    def martingale(self) -> np.ndarray:
        """``M_n = W_n* W_n / tr(W_n* W_n)``; the norm ledger cancels."""
        G = self.W_normalized.conj().T @ self.W_normalized
        tr = np.trace(G).real
        if tr <= 1e-20:
            raise DeadStateError("tr(W* W) vanished")
        G = G / tr
        return 0.5 * (G + G.conj().T)

    def mle_estimators(self):
        """``(z, y)``: top right and left singular directions of the window product.

        ``z`` maximizes ``||W x||`` (estimate of the initial ray); ``y = W . z``
        (estimate of the current ray). Ties follow the SVD ordering.
        """
        U, s, V = svd(self.W_window)
        if s[0] == 0:
            raise DeadStateError("window product vanished")
        return ProjectivePoint(V[:, 0]), ProjectivePoint(U[:, 0])

    def polar_unitary(self) -> np.ndarray:
        return polar(self.W_normalized)[0]

    def lyapunov_report(self, n_batches=20) -> LyapunovReport:
        if self.n < 1:
            raise InvalidInputError("no steps taken yet")
        order = np.argsort(self.lyap_logs)[::-1]
        gamma = gammas_from_logs(self.lyap_logs, self.n)
        inc = np.array(self.lyap_increments)[:, order]
        nb = min(n_batches, self.n)
        stderr = np.full(self.model.dim, np.nan)
        if nb >= 2:
            means = np.array([b.mean(axis=0) for b in np.array_split(inc, nb)])
            with np.errstate(invalid="ignore"):
                stderr = means.std(axis=0, ddof=1) / math.sqrt(nb)
        stderr = np.where(np.isfinite(gamma), stderr, np.nan)
        return LyapunovReport(gamma, self.n, stderr)


def init_trajectory(m: KrausMeasure, start, seed=0, window_start=0, index=0) -> TrajectoryState:
    """Start a trajectory from a ray, a density matrix, an empirical measure
    (sampled) or ``"uniform"``; ``seed`` and ``index`` select the substream."""
    m.require_valid()
    if window_start < 0:
        raise InvalidInputError("window_start must be non-negative")
    rng = substream(seed, index)
    mode, s = _draw_initial(start, m.dim, rng)
    return TrajectoryState(
        model=m,
        mode=mode,
        state=np.array(s, dtype=complex),
        rng=rng,
        x0=np.array(s, dtype=complex) if mode == "pure" else None,
        window_start=window_start,
    )


# -- vectorized ensembles -------------------------------------------------------------

QUANTITIES = {
    "state", "x0", "log_norm", "W", "M", "lambda2", "sv_ratio", "lyap_logs", "d_xy",
    "window_z", "window_y",
}
# axis along which trajectories are stacked in the recorded arrays
_TRAJ_AXIS = {"x0": 0, "outcomes": 0, "d_xy": 2, "window_z": 2, "window_y": 2}


class _Chunk:
    def __init__(self, m, start, seed, indices, n_steps, windows, need_W, need_lyap):
        k = m.dim
        self.m = m
        self.V = m.matrices
        self.w = m.weights
        self.vnorm = np.linalg.norm(self.V, 2, axis=(1, 2))
        self.unit_logs = unitary_log_scales(self.V)
        self.windows = list(windows)
        N = len(indices)
        random_start = isinstance(start, (EmpiricalMeasure, str))
        if not random_start:
            self.mode, s0 = _draw_initial(start, k, None)
            inits = [s0] * N
        else:
            self.mode, inits = "pure", []
        # one bit generator reseeded per trajectory; identical to substream()
        bg = np.random.PCG64(0)
        gen = np.random.Generator(bg)
        self.uniforms = np.empty((N, n_steps))
        for r, t in enumerate(indices):
            bg.state = substream_state(seed, int(t))
            if random_start:
                inits.append(_draw_initial(start, k, gen)[1])
            self.uniforms[r] = gen.random(n_steps)
        self.state = np.array(inits, dtype=complex).reshape((N, k) if self.mode == "pure" else (N, k, k))
        self.x0 = self.state.copy() if self.mode == "pure" else None
        eye = np.broadcast_to(np.eye(k, dtype=complex), (N, k, k))
        self.need_W = need_W
        self.need_lyap = need_lyap
        self.W = eye.copy()
        self.log_norm = np.zeros(N)
        self.Wwin = [eye.copy() for _ in self.windows]
        self.Q = np.broadcast_to(initial_frame(k), (N, k, k)).copy()
        self.logs = np.zeros((N, k))
        self.outcomes = np.zeros((N, n_steps), dtype=np.int16)
        self.n = 0

    def step(self):
        V, w = self.V, self.w
        u = self.uniforms[:, self.n]
        if self.mode == "pure":
            VX = np.einsum("iab,nb->nia", V, self.state)
            p = w * np.sum(np.abs(VX) ** 2, axis=2)
        else:
            VR = V[None] @ self.state[:, None] @ np.conj(np.swapaxes(V, 1, 2))[None]
            p = w * np.real(np.einsum("niaa->ni", VR))
        tot = p.sum(axis=1)
        if np.any(tot < DEAD_PROBABILITY):
            raise DeadStateError(f"total outcome probability vanished at step {self.n}")
        idx = _choose(p, u)
        rows = np.arange(len(idx))
        if self.mode == "pure":
            y = VX[rows, idx]
            self.state = y / np.linalg.norm(y, axis=1, keepdims=True)
        else:
            r = VR[rows, idx]
            r = r / np.real(np.einsum("naa->n", r))[:, None, None]
            self.state = 0.5 * (r + np.conj(np.swapaxes(r, 1, 2)))
        Vi = V[idx]
        if self.need_W:
            W = Vi @ self.W
            nrm = singular_values(W)[:, 0]
            if np.any(nrm == 0):
                raise DeadStateError(f"product of Kraus matrices vanished at step {self.n + 1}")
            self.W = W / nrm[:, None, None]
            self.log_norm += np.log(nrm)
            for j, l in enumerate(self.windows):
                if self.n >= l:
                    Ww = Vi @ self.Wwin[j]
                    self.Wwin[j] = Ww / singular_values(Ww)[:, 0, None, None]
        if self.need_lyap:
            Q, R = np.linalg.qr(Vi @ self.Q)
            self.Q = Q
            self.logs = self.logs + _log_abs_diag(R, self.vnorm[idx], self.unit_logs[idx])
        self.outcomes[:, self.n] = idx
        self.n += 1

    def points(self):
        if self.mode == "pure":
            return normalize_rows(self.state)
        _, U = np.linalg.eigh(self.state)
        return normalize_rows(U[:, :, -1])

    def record(self, quantities):
        out = {}
        for q in quantities:
            if q == "state":
                # pure states are phase-fixed in one batch after the run
                out[q] = self.state.copy()
            elif q == "x0":
                out[q] = self.x0
            elif q == "log_norm":
                out[q] = self.log_norm.copy()
            elif q == "W":
                out[q] = self.W.copy()
            elif q == "M":
                G = np.conj(np.swapaxes(self.W, 1, 2)) @ self.W
                out[q] = G / np.real(np.einsum("naa->n", G))[:, None, None]
            elif q in ("lambda2", "sv_ratio"):
                s = singular_values(self.W)
                s2 = s[:, 1] if s.shape[1] > 1 else np.zeros(len(s))
                out[q] = s2**2 / np.sum(s**2, axis=1) if q == "lambda2" else s2 / s[:, 0]
            elif q == "lyap_logs":
                out[q] = self.logs.copy()
            elif q in ("d_xy", "window_z", "window_y"):
                x = self.points()
                d, zs, ys = [], [], []
                for j, l in enumerate(self.windows):
                    U, s, Vh = np.linalg.svd(self.Wwin[j])
                    y = normalize_rows(U[:, :, 0])
                    zs.append(normalize_rows(np.conj(Vh[:, 0, :])))
                    ys.append(y)
                    dj = distances(x, y)
                    d.append(np.where(self.n >= l, dj, np.nan))
                out[q] = {"d_xy": np.array(d), "window_z": np.array(zs), "window_y": np.array(ys)}[q]
            else:
                raise InvalidInputError(f"unknown quantity {q!r}; choose from {sorted(QUANTITIES)}")
        return out


def _run_chunk(m, start, seed, indices, n_steps, record_times, quantities, windows, keep_outcomes):
    need_W = bool(set(quantities) & {"W", "M", "lambda2", "sv_ratio", "log_norm", "d_xy", "window_z", "window_y"})
    need_lyap = "lyap_logs" in quantities
    ch = _Chunk(m, start, seed, indices, n_steps, windows, need_W, need_lyap)
    times = set(record_times)
    rec = {q: [] for q in quantities}
    for t in range(n_steps + 1):
        if t in times:
            snap = ch.record(quantities)
            for q in quantities:
                rec[q].append(snap[q])
        if t < n_steps:
            ch.step()
    out = {}
    for q in quantities:
        if q == "x0":
            out[q] = ch.x0
        elif rec[q]:
            out[q] = np.stack(rec[q], axis=0)
        else:
            shape = (0, len(windows), len(indices)) if _TRAJ_AXIS.get(q) == 2 else (0, len(indices))
            out[q] = np.empty(shape)
    if "state" in out and ch.mode == "pure" and out["state"].size:
        out["state"] = normalize_rows(out["state"])
    if keep_outcomes:
        out["outcomes"] = ch.outcomes
    return out


@dataclass
class EnsembleResult:
    """Quantities recorded at ``times``; arrays are indexed ``[time, trajectory, ...]``
    (``d_xy`` and the window estimators ``[time, window, trajectory, ...]``)."""

    times: List[int]
    data: dict
    windows: List[int]
    mode: str

    def __getitem__(self, key):
        return self.data[key]

    def at(self, key, t):
        return self.data[key][self.times.index(t)]


def simulate_ensemble(
    m: KrausMeasure,
    start,
    n_traj: int,
    n_steps: int,
    seed: int = 0,
    record_times: Optional[Sequence[int]] = None,
    quantities: Sequence[str] = ("state",),
    windows: Sequence[int] = (0,),
    keep_outcomes: bool = False,
    n_jobs: int = 1,
    first_index: int = 0,
) -> EnsembleResult:
    """Run ``n_traj`` independent trajectories for ``n_steps`` steps.

    Trajectory ``t`` uses substream ``first_index + t`` of ``seed``; the output
    is identical for every ``n_jobs``.
    """
    m.require_valid()
    if n_traj < 1 or n_steps < 0:
        raise InvalidInputError("need n_traj >= 1 and n_steps >= 0")
    if record_times is None:
        record_times = [n_steps]
    times = sorted(set(int(t) for t in record_times))
    if times and (times[0] < 0 or times[-1] > n_steps):
        raise InvalidInputError("record times must lie in [0, n_steps]")
    quantities = list(quantities)
    for q in quantities:
        if q not in QUANTITIES:
            raise InvalidInputError(f"unknown quantity {q!r}; choose from {sorted(QUANTITIES)}")
    indices = np.arange(first_index, first_index + n_traj)
    n_jobs = max(1, min(int(n_jobs), n_traj))
    chunks = np.array_split(indices, n_jobs)
    args = (m, start, seed)
    tail = (n_steps, times, quantities, windows, keep_outcomes)
    if n_jobs == 1:
        parts = [_run_chunk(*args, chunks[0], *tail)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda c: _run_chunk(*args, c, *tail), chunks))
    data = {}
    for key in parts[0]:
        if parts[0][key] is None:
            data[key] = None
            continue
        axis = _TRAJ_AXIS.get(key, 1)
        data[key] = np.concatenate([p[key] for p in parts], axis=axis)
    mode = _draw_initial(start, m.dim, substream(seed, first_index))[0]
    return EnsembleResult(times, data, list(windows), mode)


# -- exact word enumeration ----------------------------------------------------------


def word_products(m: KrausMeasure, n: int, budget=WORD_BUDGET):
    """All words of length ``n``: products ``v_{i_n} ... v_{i_1}`` and weights.

    Words are ordered lexicographically with the first applied letter most
    significant.
    """
    count = m.n_elements**n
    if count > budget:
        raise BudgetError(f"{count} words of length {n} exceed the budget of {budget}")
    k = m.dim
    P = np.eye(k, dtype=complex)[None]
    wts = np.ones(1)
    for _ in range(n):
        P = np.einsum("jab,wbc->wjac", m.matrices, P).reshape(-1, k, k)
        wts = np.outer(wts, m.weights).reshape(-1)
    return wts, P


def compute_f(m: KrausMeasure, n: int, budget=WORD_BUDGET) -> float:
    """``f(n) = sum over words of length n of weight(w) * a1(v_w) a2(v_w)``."""
    m.require_valid()
    if m.dim < 2:
        return 0.0
    wts, P = word_products(m, n, budget)
    s = np.linalg.svd(P, compute_uv=False)
    return float(np.sum(wts * s[:, 0] * s[:, 1]))


def exact_cylinder_probability(m: KrausMeasure, rho, word) -> float:
    """Probability of observing the outcome sequence ``word`` from state ``rho``."""
    rho = np.asarray(rho, dtype=complex)
    weight = 1.0
    for i in word:
        if not 0 <= i < m.n_elements:
            raise InvalidInputError(f"outcome index {i} out of range")
        v = m.matrices[i]
        rho = v @ rho @ v.conj().T
        weight *= m.weights[i]
    return float(weight * np.trace(rho).real)
