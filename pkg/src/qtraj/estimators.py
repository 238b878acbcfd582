"""scikit-learn style wrappers around the channel, trajectory and transport code.

``X`` is a stack of Kraus matrices with shape (n_elements, k, k) (or a
:class:`KrausMeasure`) and ``sample_weight`` holds the element weights.
Fitted attributes end in an underscore.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import channel
from .exceptions import InvalidInputError
from .kraus import KrausMeasure
from .projective import normalize_rows
from .trajectory import gammas_from_logs, simulate_ensemble
from .transport import EmpiricalMeasure, w1


def check_kraus_array(X, sample_weight=None, tol=1e-9) -> KrausMeasure:
    """Validate a Kraus stack and weights; returns a measure passing ``validate``.

    Raises:
        InvalidInputError: wrong shape, non-finite entries, negative weights or
            a stochasticity defect above ``tol``.
    """
    if isinstance(X, KrausMeasure):
        if sample_weight is not None:
            raise InvalidInputError("sample_weight given together with a KrausMeasure")
        m = X
    else:
        V = np.asarray(X)
        if V.ndim == 2:
            V = V[None]
        if V.ndim != 3 or V.shape[1] != V.shape[2] or V.shape[0] == 0:
            raise InvalidInputError(f"expected Kraus matrices of shape (n, k, k), got {V.shape}")
        w = np.ones(V.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        m = KrausMeasure(w, V.astype(complex))
    m.require_valid(tol)
    return m


def check_rays(Y, k):
    """(n, k) complex array of unit, phase-fixed rows."""
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim == 1:
        Y = Y[None]
    if Y.ndim != 2 or Y.shape[1] != k:
        raise InvalidInputError(f"expected rays of shape (n, {k}), got {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise InvalidInputError("rays have non-finite entries")
    return normalize_rows(Y)


class ChannelSpectrum(TransformerMixin, BaseEstimator):
    """Spectrum, period, gap and invariant state of the average channel.

    ``transform`` applies the channel to a stack of density matrices.
    """

    def __init__(self, peripheral_tol=channel.PERIPHERAL_TOL):
        self.peripheral_tol = peripheral_tol

    def fit(self, X, y=None, sample_weight=None):
        m = check_kraus_array(X, sample_weight)
        rep = channel.analyze(m, self.peripheral_tol)
        self.measure_ = m
        self.eigenvalues_ = rep.eigenvalues
        self.period_ = rep.period_m
        self.gap_ = rep.gap_lambda
        self.rho_inv_ = rep.rho_inv
        self.invariant_subspace_ = rep.invariant_subspace_E
        self.n_features_in_ = m.dim
        return self

    def transform(self, X):
        check_is_fitted(self)
        R = np.asarray(X, dtype=complex)
        single = R.ndim == 2
        R = R[None] if single else R
        out = np.array([channel.apply_channel(self.measure_, r) for r in R])
        return out[0] if single else out


class InvariantMeasureEstimator(TransformerMixin, BaseEstimator):
    """Empirical invariant measure from ``n_traj`` trajectories after ``n_steps``.

    ``transform`` pushes given rays ``n_steps`` steps along the chain
    (trajectory ``i`` of the fit seed drives row ``i``); ``score`` is minus the
    W1 distance between the fitted measure and the empirical measure of the rays.
    """

    def __init__(self, n_traj=1000, n_steps=200, initial="uniform", seed=0, n_jobs=1, max_points=5000):
        self.n_traj = n_traj
        self.n_steps = n_steps
        self.initial = initial
        self.seed = seed
        self.n_jobs = n_jobs
        self.max_points = max_points

    def fit(self, X, y=None, sample_weight=None):
        m = check_kraus_array(X, sample_weight)
        res = simulate_ensemble(
            m, self.initial, self.n_traj, self.n_steps, seed=self.seed, n_jobs=self.n_jobs,
        )
        states = res["state"][0]
        if res.mode == "density":
            states = np.array([np.linalg.eigh(r)[1][:, -1] for r in states])
        self.measure_ = m
        self.nu_hat_ = EmpiricalMeasure.uniform(states)
        self.rho_hat_ = self.nu_hat_.density_matrix()
        self.n_features_in_ = m.dim
        return self

    def transform(self, X):
        check_is_fitted(self)
        Y = check_rays(X, self.measure_.dim)
        out = np.empty_like(Y)
        for i, y in enumerate(Y):
            res = simulate_ensemble(self.measure_, y, 1, self.n_steps, seed=self.seed, first_index=i)
            out[i] = res["state"][0, 0]
        return out

    def score(self, X, y=None):
        check_is_fitted(self)
        Y = check_rays(X, self.measure_.dim)
        return -w1(self.nu_hat_, EmpiricalMeasure.uniform(Y), max_points=self.max_points)


class LyapunovSpectrum(BaseEstimator):
    """Lyapunov exponents of the products ``W_n`` averaged over trajectories."""

    def __init__(self, n_steps=1000, n_traj=1, initial="uniform", seed=0):
        self.n_steps = n_steps
        self.n_traj = n_traj
        self.initial = initial
        self.seed = seed

    def fit(self, X, y=None, sample_weight=None):
        m = check_kraus_array(X, sample_weight)
        res = simulate_ensemble(
            m, self.initial, self.n_traj, self.n_steps, seed=self.seed, quantities=["lyap_logs"],
        )
        g = gammas_from_logs(res["lyap_logs"][0], self.n_steps)
        self.per_trajectory_ = g
        with np.errstate(invalid="ignore"):
            self.gamma_ = g.mean(axis=0)
            self.stderr_ = g.std(axis=0, ddof=1) / np.sqrt(len(g)) if len(g) > 1 else np.full(m.dim, np.nan)
        self.n_features_in_ = m.dim
        return self

    def predict(self, X=None):
        """Estimated top-two gap ``gamma_1 - gamma_2``, the a.s. contraction rate."""
        check_is_fitted(self)
        return float(self.gamma_[0] - self.gamma_[1]) if len(self.gamma_) > 1 else float("inf")
