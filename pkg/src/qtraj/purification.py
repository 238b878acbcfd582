"""Checks of the purification property: no projector of rank >= 2 compresses
every product ``v_w* v_w`` to a multiple of itself.

The word checker is exact for k = 2 and a semi-decision procedure for k >= 3.
The Monte Carlo checker watches the second eigenvalue of
``M_n = W_n* W_n / tr(W_n* W_n)`` decay along trajectories started from
``Id/k``.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import stats

from .exceptions import BudgetError
from .io import to_jsonable, write_csv
from .kraus import KrausMeasure
from .trajectory import WORD_BUDGET, simulate_ensemble, word_products

PROPORTIONAL_TOL = 1e-8
MC_TOL = 1e-6
VERDICTS = ("violated", "holds_certified", "holds_likely", "inconclusive")


@dataclass
class PurReport:
    """Outcome of a purification check.

    Attributes:
        verdict: one of ``VERDICTS``.
        witness: projector of rank >= 2 that every enumerated ``v_w* v_w``
            compresses to a scalar (only when violated).
        word_length_checked: longest word length enumerated (0 for Monte Carlo).
        certificate_word: for k = 2, a word whose ``v_w* v_w`` is not scalar.
        span_dimension: real dimension of the span of the ``v_w* v_w``.
        mc_statistics: decay table and fit for the Monte Carlo check.
    """

    verdict: str
    witness: Optional[np.ndarray] = None
    word_length_checked: int = 0
    certificate_word: Optional[List[int]] = None
    span_dimension: Optional[int] = None
    mc_statistics: Optional[dict] = None

    def to_dict(self):
        return to_jsonable(
            {
                "verdict": self.verdict,
                "witness": self.witness,
                "word_length_checked": self.word_length_checked,
                "certificate_word": self.certificate_word,
                "span_dimension": self.span_dimension,
                "mc_statistics": self.mc_statistics,
            }
        )

    def write_decay_csv(self, path):
        if not self.mc_statistics:
            raise ValueError("report carries no Monte Carlo statistics")
        s = self.mc_statistics
        rows = zip(s["n"], s["median_lambda2"], s["p90_lambda2"])
        return write_csv(path, ["n", "median_lambda2", "p90_lambda2"], rows)


def _gram_products(m: KrausMeasure, max_len, budget):
    """``v_w* v_w`` for all words of length 1..max_len, with the words."""
    keep = m.weights > 0
    sub = KrausMeasure(m.weights[keep], m.matrices[keep], m.name)
    labels = np.flatnonzero(keep)
    total = sum(sub.n_elements**n for n in range(1, max_len + 1))
    if total > budget:
        raise BudgetError(
            f"{total} words up to length {max_len} exceed the budget of {budget}; "
            "use the Monte Carlo check instead"
        )
    grams, words = [], []
    for n in range(1, max_len + 1):
        _, P = word_products(sub, n, budget)
        grams.append(np.conj(np.swapaxes(P, 1, 2)) @ P)
        idx = np.indices((sub.n_elements,) * n).reshape(n, -1).T
        words.extend(labels[idx].tolist())
    return np.concatenate(grams), words


def _non_scalar(G, tol):
    k = G.shape[-1]
    dev = G - (np.trace(G, axis1=-2, axis2=-1) / k)[..., None, None] * np.eye(k)
    return np.linalg.norm(dev, axis=(-2, -1)) > tol * np.linalg.norm(G, axis=(-2, -1))


def _hermitian_span(G, tol):
    """Orthonormal (real) basis of the span of Hermitian matrices, as matrices."""
    k = G.shape[-1]
    flat = np.concatenate([G.real.reshape(len(G), -1), G.imag.reshape(len(G), -1)], axis=1)
    _, s, Vt = np.linalg.svd(flat, full_matrices=False)
    r = int(np.sum(s > tol * max(s[0], 1e-300)))
    basis = Vt[:r, : k * k].reshape(r, k, k) + 1j * Vt[:r, k * k :].reshape(r, k, k)
    return basis, r


def _intersect(A, B, tol=1e-8):
    """Orthonormal basis of range(A) n range(B) for orthonormal A, B."""
    U, s, Vh = np.linalg.svd(B.conj().T @ A)
    r = int(np.sum(s > 1 - tol))
    return A @ Vh.conj().T[:, :r]


def _eigenspaces(H, tol):
    w, U = np.linalg.eigh(0.5 * (H + H.conj().T))
    scale = max(np.abs(w).max(), 1e-300)
    groups, start = [], 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > tol * scale:
            groups.append(U[:, start:i])
            start = i
    return groups


def joint_eigenspaces(mats, tol=PROPORTIONAL_TOL, min_dim=2):
    """Subspaces of dimension >= ``min_dim`` on which every matrix acts as a scalar."""
    k = mats[0].shape[-1]
    cands = [np.eye(k, dtype=complex)]
    for H in mats:
        nxt = []
        for S in cands:
            for F in _eigenspaces(H, tol):
                I = _intersect(S, F)
                if I.shape[1] >= min_dim:
                    nxt.append(I)
        cands = nxt
        if not cands:
            break
    return sorted(cands, key=lambda S: -S.shape[1])


def witness_holds(pi, grams, tol=PROPORTIONAL_TOL):
    """True if ``pi G pi`` is a multiple of ``pi`` for every ``G``."""
    r = np.trace(pi).real
    C = pi @ grams @ pi
    lam = np.trace(C, axis1=-2, axis2=-1) / r
    err = np.linalg.norm(C - lam[:, None, None] * pi, axis=(-2, -1))
    return bool(np.all(err <= tol * np.maximum(np.linalg.norm(grams, axis=(-2, -1)), 1e-300)))


def check_pur_words(m: KrausMeasure, max_len=1, tol=PROPORTIONAL_TOL, budget=WORD_BUDGET) -> PurReport:
    """Decide purification from all words up to length ``max_len``.

    For k = 2 the only projector of rank >= 2 is the identity, so the property
    holds iff some ``v_w* v_w`` is not a multiple of it. For k >= 3 a common
    eigenspace of dimension >= 2 proves a violation, and a span of all k^2
    Hermitian matrices proves the property; otherwise the result is
    inconclusive.

    Raises:
        BudgetError: too many words to enumerate.
    """
    m.require_valid()
    k = m.dim
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    grams, words = _gram_products(m, max_len, budget)
    _, span = _hermitian_span(grams, tol)
    report = dict(word_length_checked=max_len, span_dimension=span)
    if k == 1:
        return PurReport("holds_certified", **report)
    if k == 2:
        bad = np.flatnonzero(_non_scalar(grams, tol))
        if bad.size:
            return PurReport("holds_certified", certificate_word=words[bad[0]], **report)
        return PurReport("violated", witness=np.eye(2, dtype=complex), **report)
    basis, _ = _hermitian_span(grams, tol)
    spaces = joint_eigenspaces(basis, tol)
    if spaces:
        S = spaces[0]
        return PurReport("violated", witness=S @ S.conj().T, **report)
    if span == k * k:
        return PurReport("holds_certified", **report)
    return PurReport("inconclusive", **report)


def _checkpoints(n_steps, count=10):
    step = max(1, n_steps // count)
    pts = list(range(0, n_steps + 1, step))
    if pts[-1] != n_steps:
        pts.append(n_steps)
    return pts


def check_pur_montecarlo(
    m: KrausMeasure, n_steps=50, n_traj=200, seed=0, tol=MC_TOL, checkpoints=None, n_jobs=1
) -> PurReport:
    """Track the second eigenvalue of ``M_n`` from ``Id/k`` over ``n_traj`` trajectories.

    ``holds_likely`` needs a log-linear decay of the median (R^2 > 0.9,
    negative slope) that ends below ``tol``; a median that is exactly zero at
    the end also counts. Everything else, including a plateau, is reported as
    ``inconclusive`` with the statistics attached.
    """
    m.require_valid()
    k = m.dim
    times = sorted(set(checkpoints)) if checkpoints else _checkpoints(n_steps)
    res = simulate_ensemble(
        m, np.eye(k) / k, n_traj, n_steps, seed=seed, record_times=times,
        quantities=["lambda2"], n_jobs=n_jobs,
    )
    lam = res["lambda2"]
    med = np.median(lam, axis=1)
    p90 = np.quantile(lam, 0.9, axis=1)
    t = np.array(times, dtype=float)
    use = (t >= 1) & (med > 0)
    slope = intercept = r2 = float("nan")
    if use.sum() >= 3 and np.ptp(np.log(med[use])) > 0:
        fit = stats.linregress(t[use], np.log(med[use]))
        slope, intercept, r2 = float(fit.slope), float(fit.intercept), float(fit.rvalue**2)
    final = float(med[-1])
    plateau = final > tol and not (slope < 0)
    if final == 0.0 or (r2 > 0.9 and slope < 0 and final < tol):
        verdict = "holds_likely"
    else:
        verdict = "inconclusive"
    mc = {
        "n": times,
        "median_lambda2": med.tolist(),
        "p90_lambda2": p90.tolist(),
        "slope": slope,
        "intercept": intercept,
        "r2": r2,
        "final_median": final,
        "tol": tol,
        "plateau": bool(plateau),
        "n_traj": n_traj,
        "seed": seed,
    }
    return PurReport(verdict, word_length_checked=0, mc_statistics=mc)


@dataclass
class ContractivityReport:
    n_steps: int
    ratio_samples: np.ndarray = field(repr=False)
    min_ratio: float
    median_ratio: float

    def to_dict(self):
        return to_jsonable(
            {"n_steps": self.n_steps, "min_ratio": self.min_ratio, "median_ratio": self.median_ratio}
        )


def contractivity_diagnostic(m: KrausMeasure, n_steps=50, n_traj=200, seed=0, n_jobs=1) -> ContractivityReport:
    """Distribution of ``a2(W_n) / a1(W_n)`` over trajectories from ``Id/k``;
    ratios near zero show the products becoming rank one."""
    m.require_valid()
    k = m.dim
    res = simulate_ensemble(
        m, np.eye(k) / k, n_traj, n_steps, seed=seed, record_times=[n_steps],
        quantities=["sv_ratio"], n_jobs=n_jobs,
    )
    r = res["sv_ratio"][0]
    return ContractivityReport(n_steps, r, float(r.min()), float(np.median(r)))
