"""Experiment drivers: convergence of empirical laws to the invariant measure,
the two rotation-group examples, estimator decay and ergodic averages.

Every driver takes an :class:`ExperimentConfig`, writes CSV/JSON artifacts to
``cfg.output_dir`` and returns a result object. Trajectories are drawn from
substreams of ``cfg.seed``, so outputs do not depend on ``cfg.n_jobs``.
"""

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import stats

from . import channel, kraus, purification
from .exceptions import (
    AssumptionError,
    BudgetError,
    InsufficientResolutionError,
    InvalidInputError,
    MultipleFixedPointsError,
    ParseError,
)
from .io import to_jsonable, write_csv, write_json
from .kraus import KrausMeasure
from .projective import from_vector, sample_fubini_study
from .trajectory import (
    compute_f,
    exact_cylinder_probability,
    gammas_from_logs,
    simulate_ensemble,
    substream,
)
from .transport import EmpiricalMeasure, cesaro_mix, w1

log = logging.getLogger(__name__)

EXPERIMENTS = ("convergence", "invariant", "appc1", "appc2", "estimator-decay", "ergodicity")
DEFAULT_CHECKPOINTS = (0, 1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 20, 25, 30, 40, 50, 60, 80, 100, 125, 150, 200)
#: substream index reserved for reference samples that are not trajectories
REFERENCE_STREAM = 1 << 62
#: smallest distance used in per-trajectory log-slope fits
SLOPE_FLOOR = 1e-12


@dataclass
class ExperimentConfig:
    """Parameters shared by all experiments; JSON configs use these field names.

    ``model`` is a builtin name, a ``"name:key=value,..."`` string, a model
    file path or an inline model dictionary. ``initial`` is ``"uniform"``,
    ``"maximally_mixed"``, ``"invariant"``, ``"e<i>"`` (basis ray, 1-based), or a
    dictionary with one of the keys ``vector``, ``density`` or
    ``atoms`` (+ optional ``weights``).
    """

    model: Any = "rotating_damping"
    seed: int = 0
    n_traj: int = 10_000
    n_steps: int = 200
    burn_in: int = 100
    checkpoints: Optional[List[int]] = None
    initial: Any = "uniform"
    output_dir: str = "out"
    model_params: Optional[Dict[str, float]] = None
    n_jobs: int = 1
    force: bool = False
    max_points: int = 2000
    reference_size: Optional[int] = None
    offsets: List[int] = field(default_factory=lambda: [0])
    block_len: int = 3
    z: float = 2.0
    max_word_len: int = 4
    compare_lyapunov: bool = True

    def __post_init__(self):
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be an integer in [0, 2^64)")
        if self.n_traj < 1 or self.n_steps < 1:
            raise InvalidInputError("need n_traj >= 1 and n_steps >= 1")
        if self.burn_in < 0 or self.burn_in > self.n_steps:
            raise InvalidInputError("burn_in must lie in [0, n_steps]")
        if self.checkpoints is not None:
            self.checkpoints = sorted(set(int(c) for c in self.checkpoints))
            if self.checkpoints and (self.checkpoints[0] < 0 or self.checkpoints[-1] > self.n_steps):
                raise InvalidInputError("checkpoints must lie in [0, n_steps]")
        if any(l < 0 for l in self.offsets):
            raise InvalidInputError("offsets must be non-negative")
        if self.n_jobs < 1 or self.max_points < 2 or self.block_len < 1:
            raise InvalidInputError("need n_jobs >= 1, max_points >= 2 and block_len >= 1")

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ParseError("experiment config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParseError(f"unknown config field(s): {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ParseError(f"bad config: {exc}") from None

    @classmethod
    def from_json(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)

    def load_model(self) -> KrausMeasure:
        return kraus.resolve_model(self.model, self.model_params)

    @property
    def out(self) -> Path:
        p = Path(self.output_dir)
        p.mkdir(parents=True, exist_ok=True)
        return p


def parse_initial(spec, m: KrausMeasure):
    """Translate an ``initial`` config entry into a start for the samplers."""
    k = m.dim
    if isinstance(spec, str):
        if spec == "uniform":
            return "uniform"
        if spec in ("maximally_mixed", "ch"):
            return np.eye(k) / k
        if spec == "invariant":
            return channel.analyze(m).rho_inv
        if spec.startswith("e") and spec[1:].isdigit():
            i = int(spec[1:])
            if not 1 <= i <= k:
                raise InvalidInputError(f"basis ray {spec} out of range for C^{k}")
            return np.eye(k, dtype=complex)[i - 1]
        raise InvalidInputError(f"unknown initial distribution {spec!r}")
    if isinstance(spec, dict):
        if "vector" in spec:
            return _complex_array(spec["vector"], (k,), "initial.vector")
        if "density" in spec:
            rho = _complex_array(spec["density"], (k, k), "initial.density")
            return channel.check_density_matrix(rho, name="initial.density")
        if "atoms" in spec:
            X = _complex_array(spec["atoms"], None, "initial.atoms")
            if X.ndim != 2 or X.shape[1] != k:
                raise InvalidInputError(f"initial.atoms must be a list of vectors in C^{k}")
            w = spec.get("weights")
            return EmpiricalMeasure.uniform(X) if w is None else EmpiricalMeasure(X, w)
    raise InvalidInputError(f"cannot interpret initial distribution {spec!r}")


def _complex_array(value, shape, where):
    """Nested lists of reals or ``[re, im]`` pairs to a complex array."""
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise InvalidInputError(f"{where}: expected numbers") from None
    if shape is not None and a.shape == tuple(shape) + (2,):
        a = a[..., 0] + 1j * a[..., 1]
    elif shape is None and a.ndim == 3 and a.shape[-1] == 2:
        a = a[..., 0] + 1j * a[..., 1]
    if shape is not None and a.shape != tuple(shape):
        raise InvalidInputError(f"{where}: expected shape {tuple(shape)}, got {a.shape}")
    return np.asarray(a, dtype=complex)


# -- assumption gate ---------------------------------------------------------------


@dataclass
class GateReport:
    pur: Optional[purification.PurReport]
    phi_erg: Optional[channel.PhiErgReport]
    forced: bool = False

    def to_dict(self):
        out = {"forced": self.forced}
        if self.pur is not None:
            out["pur"] = self.pur.verdict
        if self.phi_erg is not None:
            out["phi_erg"] = {"holds": self.phi_erg.holds, "d": self.phi_erg.d, "E_is_full": self.phi_erg.E_is_full}
        return out


def _pur_words(m, max_len):
    # longest enumerable word length up to max_len
    L = max_len
    while L > 1 and sum(m.n_elements**n for n in range(1, L + 1)) > 10**5:
        L -= 1
    return purification.check_pur_words(m, L)


def gate(m: KrausMeasure, cfg: ExperimentConfig, pur=True, phi_erg=True) -> GateReport:
    """Run the assumption checkers; refuse (AssumptionError) on a violation
    unless ``cfg.force`` is set."""
    rep = GateReport(
        _pur_words(m, cfg.max_word_len) if pur else None,
        channel.check_phi_erg(m) if phi_erg else None,
    )
    problems = []
    if rep.pur is not None and rep.pur.verdict == "violated":
        problems.append("purification is violated")
    if rep.phi_erg is not None and not rep.phi_erg.holds:
        problems.append(f"the channel has {rep.phi_erg.d} independent invariant states")
    if problems:
        if not cfg.force:
            raise AssumptionError("; ".join(problems) + " (use --force / \"force\": true to run anyway)")
        log.warning("running despite: %s", "; ".join(problems))
        rep.forced = True
    return rep


# -- invariant measure -------------------------------------------------------------


@dataclass
class InvariantEstimate:
    nu_hat: EmpiricalMeasure
    rho_hat: np.ndarray
    rho_inv: np.ndarray
    rho_check: float
    period: int
    slices: List[np.ndarray] = field(repr=False, default_factory=list)

    def to_dict(self):
        return to_jsonable(
            {
                "rho_hat": self.rho_hat,
                "rho_inv": self.rho_inv,
                "rho_check": self.rho_check,
                "m": self.period,
                "n_points": self.nu_hat.size,
            }
        )


def _final_slices(m, start, n_traj, n_steps, period, seed, first_index, n_jobs):
    """States of ``n_traj`` trajectories at the last ``period`` steps up to ``n_steps``."""
    times = list(range(max(0, n_steps - period + 1), n_steps + 1))
    res = simulate_ensemble(
        m, start, n_traj, n_steps, seed=seed, record_times=times, quantities=["state"],
        n_jobs=n_jobs, first_index=first_index,
    )
    if res.mode == "pure":
        return list(res["state"])
    return [np.array([np.linalg.eigh(r)[1][:, -1] for r in s]) for s in res["state"]]


def _trace_norm(X):
    return float(np.abs(np.linalg.eigvalsh(0.5 * (X + X.conj().T))).sum())


def invariant_estimate(cfg, m=None, first_index=0, n_traj=None, n_steps=None) -> InvariantEstimate:
    m = m or cfg.load_model()
    erg = channel.check_phi_erg(m)
    if not erg.holds:
        raise MultipleFixedPointsError(erg.d)
    spec = channel.analyze(m)
    start = parse_initial(cfg.initial, m)
    slices = _final_slices(
        m, start, n_traj or cfg.n_traj, n_steps or cfg.n_steps, spec.period_m, cfg.seed, first_index, cfg.n_jobs
    )
    nu = cesaro_mix([EmpiricalMeasure.uniform(s) for s in slices])
    rho_hat = nu.density_matrix()
    return InvariantEstimate(nu, rho_hat, spec.rho_inv, _trace_norm(rho_hat - spec.rho_inv), spec.period_m, slices)


def _measure_rows(nu: EmpiricalMeasure):
    for i, (x, w) in enumerate(zip(nu.vectors, nu.weights)):
        row = [i, w]
        for c in x:
            row += [c.real, c.imag]
        yield row


def _vector_header(k):
    return [h for j in range(k) for h in (f"x_re_{j}", f"x_im_{j}")]


def run_invariant_estimate(cfg: ExperimentConfig) -> InvariantEstimate:
    """Empirical invariant measure from the states at ``n_steps`` and its
    barycenter compared with the invariant state of the channel.

    Raises:
        MultipleFixedPointsError: the channel has several invariant states.
    """
    est = invariant_estimate(cfg)
    out = cfg.out
    write_json(out / "invariant.json", {"config": cfg.to_dict(), **est.to_dict()})
    write_csv(out / "nu_hat.csv", ["index", "weight"] + _vector_header(est.nu_hat.dim), _measure_rows(est.nu_hat))
    return est


# -- convergence to the invariant measure ---------------------------------------------


@dataclass
class ConvergenceResult:
    n: List[int]
    w1: List[float]
    noise_floor: float
    slope: float
    intercept: float
    r2: float
    used: List[bool]
    period: int
    gate: GateReport

    def to_dict(self):
        return to_jsonable(
            {
                "n": self.n, "w1": self.w1, "noise_floor": self.noise_floor, "slope": self.slope,
                "intercept": self.intercept, "r2": self.r2, "used_in_fit": self.used, "m": self.period,
                "gate": self.gate.to_dict(),
            }
        )


def default_checkpoints(limit):
    return [c for c in DEFAULT_CHECKPOINTS if c <= limit]


def run_convergence(cfg: ExperimentConfig) -> ConvergenceResult:
    """W1 between the Cesaro-averaged empirical law after ``m n`` steps and an
    independent empirical invariant measure, with a log-linear fit.

    The reference uses trajectory indices ``n_traj .. 2 n_traj - 1`` (or
    ``reference_size`` of them) run for ``burn_in + n_steps`` steps. The noise
    floor is W1 between its two halves; only checkpoints with
    positive ``w1 >= 3 * floor`` enter the fit. All measures are cut to their first
    ``max_points`` atoms (trajectories are exchangeable).

    Raises:
        AssumptionError: a checker reports a violation and ``force`` is off.
        InsufficientResolutionError: fewer than 3 checkpoints above the floor.
    """
    m = cfg.load_model()
    g = gate(m, cfg)
    period = channel.analyze(m).period_m
    n_ref = cfg.reference_size or cfg.n_traj
    ref = invariant_estimate(cfg, m, first_index=cfg.n_traj, n_traj=n_ref, n_steps=cfg.burn_in + cfg.n_steps)
    P = min(cfg.max_points, n_ref // 2)
    per = max(1, P // period)
    half = n_ref // 2
    ref_a = cesaro_mix([EmpiricalMeasure.uniform(s[:half][:per]) for s in ref.slices])
    ref_b = cesaro_mix([EmpiricalMeasure.uniform(s[half:][:per]) for s in ref.slices])
    floor = w1(ref_a, ref_b, max_points=max(P, 2))

    limit = (cfg.n_steps - period + 1) // period
    cps = [c for c in (cfg.checkpoints or default_checkpoints(limit)) if c <= limit]
    times = sorted({period * c + r for c in cps for r in range(period)})
    start = parse_initial(cfg.initial, m)
    res = simulate_ensemble(
        m, start, min(cfg.n_traj, per), cfg.n_steps, seed=cfg.seed, record_times=times,
        quantities=["state"], n_jobs=cfg.n_jobs,
    )
    states = res["state"]
    if res.mode == "density":
        states = np.array([[np.linalg.eigh(r)[1][:, -1] for r in s] for s in states])
    values = []
    for c in cps:
        sl = [states[res.times.index(period * c + r)] for r in range(period)]
        mu = cesaro_mix([EmpiricalMeasure.uniform(s) for s in sl])
        values.append(w1(mu, ref_a, max_points=max(P, 2)))
    values = np.array(values)
    used = (values >= 3 * floor) & (values > 0)
    slope = intercept = r2 = math.nan
    if used.sum() >= 3:
        fit = stats.linregress(np.array(cps)[used], np.log(values[used]))
        slope, intercept, r2 = float(fit.slope), float(fit.intercept), float(fit.rvalue**2)
    result = ConvergenceResult(cps, values.tolist(), floor, slope, intercept, r2, used.tolist(), period, g)
    # the table is written even without a fit so the floor can be inspected
    rows = [(n, v, slope, r2, floor, u) for n, v, u in zip(cps, values, used)]
    write_csv(cfg.out / "convergence.csv", ["n", "w1_value", "fitted_slope", "r2", "noise_floor", "in_fit"], rows)
    write_json(cfg.out / "convergence.json", {"config": cfg.to_dict(), **result.to_dict()})
    if used.sum() < 3:
        raise InsufficientResolutionError(
            f"only {int(used.sum())} checkpoint(s) above 3x the noise floor {floor:.3g}; "
            "increase n_traj/max_points or add early checkpoints"
        )
    return result


# -- rotation-group examples -----------------------------------------------------------


@dataclass
class AppendixC1Result:
    mean_projector: np.ndarray
    frobenius_error: float
    w1_to_uniform: float
    reference_size: int

    def to_dict(self):
        return to_jsonable(asdict(self))


@dataclass
class AppendixC2Result:
    z: complex
    atoms: np.ndarray
    labels: List[str]
    frequencies: np.ndarray
    unmatched: float
    max_deviation: float

    def to_dict(self):
        return to_jsonable(
            {
                "z": self.z, "atoms": self.atoms, "labels": self.labels, "frequencies": self.frequencies,
                "unmatched": self.unmatched, "max_deviation": self.max_deviation,
            }
        )


def fubini_study_reference(k, size, seed):
    return EmpiricalMeasure.uniform(sample_fubini_study(k, substream(seed, REFERENCE_STREAM), size))


def _appendix_c1(cfg):
    m = kraus.builtin_model("appc_example1")
    start = parse_initial(cfg.initial, m)
    res = simulate_ensemble(m, start, cfg.n_traj, cfg.n_steps, seed=cfg.seed, record_times=[cfg.n_steps], n_jobs=cfg.n_jobs)
    nu = EmpiricalMeasure.uniform(res["state"][0])
    mean_pi = nu.density_matrix()
    err = float(np.linalg.norm(mean_pi - np.eye(2) / 2))
    size = cfg.reference_size or cfg.n_traj
    ref = fubini_study_reference(2, size, cfg.seed)
    budget = max(cfg.max_points, nu.size, ref.size)
    dist = w1(nu, ref, max_points=budget)
    result = AppendixC1Result(mean_pi, err, dist, size)
    write_csv(
        cfg.out / "appc1.csv", ["metric", "value"],
        [("frobenius_error_mean_projector", err), ("w1_to_uniform", dist)],
    )
    write_json(cfg.out / "appc1.json", {"config": cfg.to_dict(), **result.to_dict()})
    return result


def orbit_atoms(z):
    """Distinct rays among ``e_z, e_{-z}, e_{1/z}, e_{-1/z}`` with ``e_z = (1, z)``
    and ``e_inf = (0, 1)``."""
    def ray(w):
        return np.array([0, 1], dtype=complex) if w is None else np.array([1, w], dtype=complex)

    def inv(w):
        if w is None:
            return 0.0
        return None if w == 0 else 1 / w

    def neg(w):
        return None if w is None else -w

    zs = [z, neg(z), inv(z), neg(inv(z))]
    names = ["z", "-z", "1/z", "-1/z"]
    atoms, labels = [], []
    for w, name in zip(zs, names):
        x = from_vector(ray(w)).vector
        for j, a in enumerate(atoms):
            if abs(np.vdot(a, x)) > 1 - 1e-12:
                labels[j] += f"|{name}"
                break
        else:
            atoms.append(x)
            labels.append(name)
    return np.array(atoms), labels


def _appendix_c2(cfg):
    m = kraus.builtin_model("appc_example2")
    z = cfg.z
    atoms, labels = orbit_atoms(z)
    x0 = from_vector(np.array([1, z], dtype=complex)).vector if z is not None else np.array([0, 1], dtype=complex)
    times = range(1, cfg.n_steps + 1)
    res = simulate_ensemble(m, x0, 1, cfg.n_steps, seed=cfg.seed, record_times=times)
    X = res["state"][:, 0, :]
    overlap = np.abs(X @ atoms.conj().T)
    hit = overlap > 1 - 1e-9
    freq = hit.sum(axis=0) / len(X)
    unmatched = float(1 - hit.any(axis=1).mean())
    target = 1.0 / len(atoms)
    dev = float(np.max(np.abs(freq - target)))
    result = AppendixC2Result(z, atoms, labels, freq, unmatched, dev)
    rows = [(lab, f, target, f - target) for lab, f in zip(labels, freq)]
    write_csv(cfg.out / "appc2.csv", ["atom", "frequency", "target", "deviation"], rows)
    write_json(cfg.out / "appc2.json", {"config": cfg.to_dict(), **result.to_dict()})
    return result


def run_appendix_c(example: int, cfg: ExperimentConfig):
    """Example 1: empirical measure of the dense-rotation walk against the
    uniform (Fubini-Study) measure. Example 2: occupation frequencies of the
    finite orbit of ``e_z`` along one trajectory."""
    if example == 1:
        return _appendix_c1(cfg)
    if example == 2:
        return _appendix_c2(cfg)
    raise InvalidInputError(f"example must be 1 or 2, got {example}")


# -- estimator decay -----------------------------------------------------------------------


@dataclass
class EstimatorDecayResult:
    n: np.ndarray
    offsets: List[int]
    mean_d: np.ndarray
    stderr_d: np.ndarray
    f: np.ndarray
    slopes: np.ndarray
    gamma: np.ndarray
    slope_bound: np.ndarray
    gate: GateReport

    @property
    def gap(self):
        return self.gamma[:, 0] - self.gamma[:, 1]

    def to_dict(self):
        ok = self.slopes <= self.slope_bound[None, :]
        return to_jsonable(
            {
                "offsets": self.offsets,
                "median_slope": np.median(self.slopes, axis=1),
                "max_slope": np.max(self.slopes, axis=1),
                "fraction_within_bound": ok.mean(axis=1),
                "gamma_hat_mean": self.gamma.mean(axis=0),
                "gate": self.gate.to_dict(),
            }
        )


def trajectory_slope(n, d, floor=SLOPE_FLOOR):
    """Least-squares slope of ``log d`` against ``n`` over points with ``d > floor``;
    ``-inf`` when fewer than three such points remain (exact collapse)."""
    keep = (n >= 1) & (d > floor)
    if keep.sum() < 3:
        return -math.inf
    return float(np.polyfit(n[keep], np.log(d[keep]), 1)[0])


def run_estimator_decay(cfg: ExperimentConfig, offsets=None) -> EstimatorDecayResult:
    """Distance between the current ray and its estimate from the outcomes of
    the window ``(l, l + n]``, for each offset ``l``.

    Per trajectory the log-distance slope is compared with ``-(g1 - g2) + 0.05``
    where ``g1, g2`` are that trajectory's top two Lyapunov estimates. The exact
    bound ``f(n)`` on the mean distance is listed where enumerable.

    Raises:
        AssumptionError: purification is violated (unless forced), or the
            Lyapunov comparison is requested while the minimal invariant
            subspace is not the whole space (after writing the mean-decay table).
    """
    m = cfg.load_model()
    offsets = sorted(set(offsets if offsets is not None else cfg.offsets))
    g = gate(m, cfg, pur=True, phi_erg=False)
    erg = channel.check_phi_erg(m)
    start = parse_initial(cfg.initial, m)
    T = cfg.n_steps
    if max(offsets) >= T:
        raise InvalidInputError("every offset must be smaller than n_steps")
    res = simulate_ensemble(
        m, start, cfg.n_traj, T, seed=cfg.seed, record_times=range(T + 1),
        quantities=["d_xy", "lyap_logs"], windows=offsets, n_jobs=cfg.n_jobs,
    )
    d = res["d_xy"]  # (time, window, trajectory)
    gamma = gammas_from_logs(res["lyap_logs"][-1], T)
    gap = gamma[:, 0] - gamma[:, 1]
    bound = np.where(np.isfinite(gap), -gap + 0.05, -math.inf)
    n_max = T - max(offsets)
    ns = np.arange(n_max + 1)
    mean_d = np.array([[d[l + n, j].mean() for n in ns] for j, l in enumerate(offsets)])
    se_d = np.array([[d[l + n, j].std(ddof=1) / math.sqrt(cfg.n_traj) if cfg.n_traj > 1 else np.nan for n in ns]
                     for j, l in enumerate(offsets)])
    f = np.full(len(ns), np.nan)
    for n in ns:
        try:
            f[n] = compute_f(m, int(n), budget=10**5)
        except BudgetError:
            break
    slopes = np.array(
        [[trajectory_slope(ns.astype(float), d[l + ns, j, t]) for t in range(cfg.n_traj)] for j, l in enumerate(offsets)]
    )
    result = EstimatorDecayResult(ns, offsets, mean_d, se_d, f, slopes, gamma, bound, g)
    med = np.median(slopes, axis=1)
    # an exact collapse (slope -inf) satisfies any bound
    with np.errstate(invalid="ignore"):
        excess = np.where(slopes == -math.inf, -math.inf, slopes - bound[None, :])
    worst = np.max(excess, axis=1)
    g1, g2 = gamma[:, 0].mean(), gamma[:, 1].mean()
    rows = []
    for j, l in enumerate(offsets):
        for n in ns:
            rows.append((int(n), l, mean_d[j, n], se_d[j, n], f[n], med[j], worst[j], g1, g2))
    header = ["n", "l", "mean_d", "stderr_d", "f_n", "median_slope", "max_slope_minus_bound", "gamma1_hat", "gamma2_hat"]
    write_csv(cfg.out / "estimator_decay.csv", header, rows)
    slope_rows = [
        (t, l, slopes[j, t], gamma[t, 0], gamma[t, 1], bound[t])
        for j, l in enumerate(offsets) for t in range(cfg.n_traj)
    ]
    write_csv(cfg.out / "estimator_slopes.csv", ["trajectory", "l", "slope", "gamma1_hat", "gamma2_hat", "bound"], slope_rows)
    write_json(cfg.out / "estimator_decay.json", {"config": cfg.to_dict(), **result.to_dict()})
    if cfg.compare_lyapunov and not (erg.holds and erg.E_is_full):
        raise AssumptionError(
            "the Lyapunov rate comparison needs a unique invariant state with full support; "
            "mean-decay table written"
        )
    return result


# -- ergodic averages ---------------------------------------------------------------------


@dataclass
class ErgodicityResult:
    blocks: List[tuple]
    time_average: np.ndarray
    exact: np.ndarray
    max_gap: float

    def to_dict(self):
        return to_jsonable(
            {"blocks": [list(b) for b in self.blocks], "time_average": self.time_average,
             "exact": self.exact, "max_gap": self.max_gap}
        )


def block_frequencies(outcomes, block):
    """Fraction of positions ``t`` with ``outcomes[t:t+len(block)] == block``."""
    L = len(block)
    o = np.asarray(outcomes)
    if len(o) < L:
        return float("nan")
    hit = np.ones(len(o) - L + 1, dtype=bool)
    for j, b in enumerate(block):
        hit &= o[j : len(o) - L + 1 + j] == b
    return float(hit.mean())


def run_ergodicity(cfg: ExperimentConfig, block_len=None) -> ErgodicityResult:
    """Time averages of outcome blocks along one trajectory started from the
    invariant state against their exact probabilities, for all blocks of
    length up to ``block_len``.

    Raises:
        AssumptionError: several invariant states (unless forced).
    """
    m = cfg.load_model()
    gate(m, cfg, pur=False, phi_erg=True)
    L = block_len or cfg.block_len
    if m.n_elements**L > 10**5:
        raise BudgetError(f"{m.n_elements}^{L} blocks exceed the enumeration budget")
    rho = channel.analyze(m).rho_inv
    res = simulate_ensemble(m, rho, 1, cfg.n_steps, seed=cfg.seed, record_times=[], quantities=[], keep_outcomes=True)
    outcomes = res["outcomes"][0]
    blocks, avg, exact = [], [], []
    for length in range(1, L + 1):
        for b in itertools.product(range(m.n_elements), repeat=length):
            blocks.append(b)
            avg.append(block_frequencies(outcomes, b))
            exact.append(exact_cylinder_probability(m, rho, b))
    avg, exact = np.array(avg), np.array(exact)
    result = ErgodicityResult(blocks, avg, exact, float(np.max(np.abs(avg - exact))))
    rows = [(" ".join(str(i + 1) for i in b), a, e, a - e) for b, a, e in zip(blocks, avg, exact)]
    write_csv(cfg.out / "ergodicity.csv", ["block", "time_average", "exact", "gap"], rows)
    write_json(cfg.out / "ergodicity.json", {"config": cfg.to_dict(), **result.to_dict()})
    return result


def run_experiment(name: str, cfg: ExperimentConfig):
    if name == "convergence":
        return run_convergence(cfg)
    if name == "invariant":
        return run_invariant_estimate(cfg)
    if name == "appc1":
        return run_appendix_c(1, cfg)
    if name == "appc2":
        return run_appendix_c(2, cfg)
    if name == "estimator-decay":
        return run_estimator_decay(cfg)
    if name == "ergodicity":
        return run_ergodicity(cfg)
    raise InvalidInputError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
