import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtraj import channel, kraus
from qtraj.exceptions import BudgetError, DeadStateError, InvalidInputError
from qtraj.projective import distance
from qtraj.trajectory import (
    TrajectoryState,
    compute_f,
    exact_cylinder_probability,
    gammas_from_logs,
    initial_frame,
    init_trajectory,
    simulate_ensemble,
    singular_values,
    substream,
    substream_seed,
    word_products,
)
from qtraj.transport import EmpiricalMeasure
from oracles import f_by_loops, flag_log_volumes, log_singular_product, random_kraus

E1 = np.array([1, 0], dtype=complex)
E2 = np.array([0, 1], dtype=complex)


def model(name, **params):
    return kraus.builtin_model(name, params or None)


def bare_state(m, **kw):
    return TrajectoryState(model=m, mode="pure", state=E1.copy(), rng=substream(0, 0), **kw)


# -- seeding ------------------------------------------------------------------------


def test_substreams_are_deterministic_and_distinct():
    a = substream(7, 3).random(5)
    assert np.array_equal(a, substream(7, 3).random(5))
    assert not np.array_equal(a, substream(7, 4).random(5))
    assert not np.array_equal(a, substream(8, 3).random(5))
    assert substream_seed(0, 0) != substream_seed(0, 1)


# -- init and step ------------------------------------------------------------------


def test_init_pure_and_density():
    s = init_trajectory(model("flip_flop"), E1)
    assert s.n == 0 and s.mode == "pure"
    assert np.allclose(s.state, E1) and np.allclose(s.W_normalized, np.eye(2))
    d = init_trajectory(model("flip_flop"), np.eye(2) / 2)
    assert d.mode == "density"
    with pytest.raises(InvalidInputError):
        init_trajectory(model("flip_flop"), np.ones(3))


def test_init_from_empirical_measure_uses_weights():
    nu = EmpiricalMeasure(np.array([E1, E2]), np.array([0.25, 0.75]))
    starts = [init_trajectory(model("flip_flop"), nu, seed=1, index=i).state for i in range(4000)]
    frac = np.mean([abs(x[1]) > 0.5 for x in starts])
    assert abs(frac - 0.75) < 4 * np.sqrt(0.75 * 0.25 / 4000)


def test_amplitude_damping_ground_state_is_absorbing():
    s = init_trajectory(model("amplitude_damping", p=0.4), E1, seed=3)
    for _ in range(20):
        assert s.step() == 0
        assert distance(s.state, E1) == 0


def test_flip_flop_two_cycle():
    s = init_trajectory(model("flip_flop"), E1, seed=5)
    seen = [(s.step(), s.point.vector.copy()) for _ in range(6)]
    for t, (i, x) in enumerate(seen):
        assert i == (1 if t % 2 == 0 else 0)
        assert np.allclose(np.abs(x), E2 if t % 2 == 0 else E1)


def test_unitary_outcomes_are_fair():
    s = init_trajectory(model("appc_example1"), "uniform", seed=9)
    assert np.allclose(s.probabilities(), 0.5)
    s.run(4000)
    assert abs(np.mean(s.history) - 0.5) < 4 * 0.5 / np.sqrt(4000)


# -- martingale, estimators, polar --------------------------------------------------


def test_martingale_examples():
    s = init_trajectory(model("appc_example2"), "uniform", seed=0)
    assert np.allclose(s.martingale(), np.eye(2) / 2)
    s.run(25)
    assert np.allclose(s.martingale(), np.eye(2) / 2, atol=1e-12)
    a = init_trajectory(model("amplitude_damping", p=0.5), E1)
    assert a.step() == 0
    assert np.allclose(a.martingale(), np.diag([1, 0.5]) / 1.5)


def test_martingale_of_vanished_product_is_dead():
    s = bare_state(model("flip_flop"), W_normalized=np.zeros((2, 2), dtype=complex))
    with pytest.raises(DeadStateError):
        s.martingale()


def test_mle_estimator_examples():
    s = bare_state(model("flip_flop"))
    z, y = s.mle_estimators()
    assert np.allclose(z.vector, E1) and np.allclose(y.vector, E1)
    s = bare_state(model("flip_flop"), W_window=np.diag([1, 0.5]).astype(complex))
    z, y = s.mle_estimators()
    assert np.allclose(z.vector, E1) and np.allclose(y.vector, E1)
    s = bare_state(model("flip_flop"), W_window=np.array([[0, 1], [0, 0]], dtype=complex))
    z, y = s.mle_estimators()
    assert np.allclose(z.vector, E2) and np.allclose(y.vector, E1)


def test_polar_unitary_examples():
    s = bare_state(model("flip_flop"), W_normalized=np.diag([1, 0.5]).astype(complex))
    assert np.allclose(s.polar_unitary(), np.eye(2))
    W = np.array([[0, 1], [0, 0]], dtype=complex)
    U = bare_state(model("flip_flop"), W_normalized=W).polar_unitary()
    assert np.allclose(U.conj().T @ U, np.eye(2))
    # only the action on the range of W* W is determined
    assert np.allclose(U @ E2, E1)


def test_polar_unitary_of_unitary_model_is_the_product():
    m = model("appc_example1")
    s = init_trajectory(m, "uniform", seed=2)
    W = np.eye(2, dtype=complex)
    for _ in range(10):
        W = m.matrices[s.step()] @ W
    assert np.allclose(s.polar_unitary(), W, atol=1e-12)


@pytest.mark.xfail(
    strict=True,
    reason="median d(x_100, U_100 . top eigenvector of M_100) is about 1e-3 on "
    "rotating_damping, not below 1e-6 (see notes/decisions.md)",
)
def test_current_ray_is_asymptotically_outcome_measurable():
    m = model("rotating_damping")
    d = []
    for i in range(200):
        s = init_trajectory(m, "uniform", seed=4, index=i).run(100)
        top = np.linalg.eigh(s.martingale())[1][:, -1]
        d.append(distance(s.state, s.polar_unitary() @ top))
    assert np.median(d) < 1e-6


def test_current_ray_approaches_polar_image():
    m = model("rotating_damping")
    med = {}
    for n in (10, 100):
        d = []
        for i in range(200):
            s = init_trajectory(m, "uniform", seed=4, index=i).run(n)
            top = np.linalg.eigh(s.martingale())[1][:, -1]
            d.append(distance(s.state, s.polar_unitary() @ top))
        med[n] = np.median(d)
    assert med[100] < 0.1 * med[10]


# -- Lyapunov -----------------------------------------------------------------------


def test_unitary_lyapunov_exponents_are_zero():
    s = init_trajectory(model("appc_example1"), "uniform", seed=1).run(500)
    rep = s.lyapunov_report()
    assert np.all(rep.gamma_hat == 0.0)


def test_amplitude_damping_lyapunov_closed_form():
    rep = init_trajectory(model("amplitude_damping", p=0.5), E1, seed=1).run(2000).lyapunov_report()
    # the start frame only contributes O(1/n)
    assert abs(rep.gamma_hat[0]) < 5e-3
    assert abs(np.sum(rep.gamma_hat) - 0.5 * np.log(0.5)) < 1e-12


def test_flip_flop_second_exponent_is_minus_infinity():
    rep = init_trajectory(model("flip_flop"), "uniform", seed=1).run(50).lyapunov_report()
    assert abs(rep.gamma_hat[0]) < 0.05
    assert rep.gamma_hat[1] == -np.inf


def test_initial_frame_is_unitary_and_fixed():
    for k in (2, 3, 5):
        Q = initial_frame(k)
        assert np.allclose(Q.conj().T @ Q, np.eye(k))
        assert np.array_equal(Q, initial_frame(k))
        assert np.all(np.abs(Q) > 1e-3)


def test_scaled_unitary_increments_are_exact():
    c = np.cos(0.4)
    U = np.array([[c, 1j * np.sin(0.4)], [1j * np.sin(0.4), c]])
    m = kraus.KrausMeasure([1.0, 1.0], [U / np.sqrt(2), np.diag([1j, -1j]) / np.sqrt(2)])
    s = init_trajectory(m, "uniform", seed=0).run(40)
    inc = np.array(s.lyap_increments)
    # every increment is the same number, not a rounded QR diagonal
    assert np.all(inc == inc[0, 0])
    assert abs(inc[0, 0] - 0.5 * np.log(0.5)) < 1e-15


def test_gammas_sorted_with_sentinel():
    g = gammas_from_logs(np.array([-1e6, -3.0, 0.5]), 10)
    assert np.array_equal(g, [0.05, -0.3, -np.inf])


@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(2, 3), st.integers(1, 30))
@settings(max_examples=20)
def test_lyapunov_partial_sums_match_high_precision(seed, k, n_el, n):
    w, V = random_kraus(k, n_el, np.random.default_rng(seed))
    m = kraus.KrausMeasure(w, V)
    s = init_trajectory(m, "uniform", seed=seed).run(n)
    flags = flag_log_volumes(V, s.history, initial_frame(k))
    assert np.allclose(np.cumsum(s.lyap_logs), flags, atol=1e-8 * max(1, n), rtol=0)
    gsum = np.sum(s.lyapunov_report().gamma_hat)
    assert abs(gsum - log_singular_product(V, s.history) / n) < 1e-8


# -- ensembles ----------------------------------------------------------------------


@pytest.mark.parametrize("start", ["uniform", "density", "e1"])
def test_ensemble_matches_scalar_trajectories(start):
    m = model("rotating_damping")
    init = {"uniform": "uniform", "density": np.eye(2) / 2, "e1": E1}[start]
    res = simulate_ensemble(m, init, 5, 30, seed=11, quantities=["state", "log_norm", "lyap_logs"],
                            keep_outcomes=True)
    for t in range(5):
        s = init_trajectory(m, init, seed=11, index=t).run(30)
        assert s.history == list(res["outcomes"][t])
        assert abs(s.log_norm - res["log_norm"][0, t]) < 1e-10
        assert np.allclose(s.lyap_logs, res["lyap_logs"][0, t], atol=1e-10)
        if s.mode == "pure":
            assert distance(s.state, res["state"][0, t]) < 1e-12
        else:
            assert np.allclose(s.state, res["state"][0, t], atol=1e-12)


def test_ensemble_is_independent_of_thread_count():
    m = model("rotating_damping")
    q = ["state", "M", "lambda2", "lyap_logs", "d_xy"]
    a = simulate_ensemble(m, "uniform", 103, 20, seed=5, record_times=[0, 7, 20], quantities=q,
                          windows=(0, 3), keep_outcomes=True)
    b = simulate_ensemble(m, "uniform", 103, 20, seed=5, record_times=[0, 7, 20], quantities=q,
                          windows=(0, 3), keep_outcomes=True, n_jobs=8)
    for key in q + ["outcomes"]:
        assert np.array_equal(a[key], b[key], equal_nan=True), key


def test_ensemble_rejects_bad_arguments():
    m = model("flip_flop")
    with pytest.raises(InvalidInputError):
        simulate_ensemble(m, "uniform", 2, 5, record_times=[6])
    with pytest.raises(InvalidInputError):
        simulate_ensemble(m, "uniform", 2, 5, quantities=["nope"])
    with pytest.raises(InvalidInputError):
        simulate_ensemble(m, "gaussian", 2, 5)


def test_closed_form_singular_values():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((50, 2, 2)) + 1j * rng.standard_normal((50, 2, 2))
    assert np.allclose(singular_values(W), np.linalg.svd(W, compute_uv=False))


def test_martingale_property():
    m = model("rotating_damping")
    n = 20000
    res = simulate_ensemble(m, np.eye(2) / 2, n, 4, seed=8, record_times=[3, 4], quantities=["M"])
    M3, M4 = res["M"]
    diff = M4 - M3
    se = np.sqrt(diff.real.var(axis=0) / n) + np.sqrt(diff.imag.var(axis=0) / n)
    assert np.all(np.abs(diff.mean(axis=0)) <= 4 * se + 1e-15)


def test_marginal_identity():
    m = model("amplitude_damping", p=0.5)
    x2 = np.array([1, 1]) / np.sqrt(2)
    nu = EmpiricalMeasure(np.array([E1, x2]), np.array([0.5, 0.5]))
    n = 20000
    res = simulate_ensemble(m, nu, n, 2, seed=3, quantities=[], keep_outcomes=True)
    rho = nu.density_matrix()
    for word in itertools.product(range(2), repeat=2):
        freq = np.mean(np.all(res["outcomes"] == word, axis=1))
        p = exact_cylinder_probability(m, rho, word)
        assert abs(freq - p) <= 4 * np.sqrt(max(p * (1 - p), 1e-12) / n)


def test_shift_identity():
    m = model("rotating_damping")
    rho = np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]])
    n = 20000
    res = simulate_ensemble(m, rho, n, 2, seed=6, quantities=[], keep_outcomes=True)
    freq = np.mean(res["outcomes"][:, 1] == 0)
    p = exact_cylinder_probability(m, channel.apply_channel(m, rho), [0])
    assert abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / n)


def test_estimator_contraction_in_mean_with_offsets():
    m = model("rotating_damping")
    offsets = (0, 2, 5, 8)
    n_traj = 4000
    res = simulate_ensemble(m, "uniform", n_traj, 16, seed=12, record_times=range(17),
                            quantities=["d_xy"], windows=offsets)
    for j, l in enumerate(offsets):
        for n in range(1, 9):
            d = res.at("d_xy", n + l)[j]
            bound = compute_f(m, n) + 4 * d.std(ddof=1) / np.sqrt(n_traj)
            assert d.mean() <= bound, (l, n)


def test_flip_flop_estimator_is_exact():
    res = simulate_ensemble(model("flip_flop"), "uniform", 100, 10, seed=1, record_times=range(1, 11),
                            quantities=["d_xy"])
    assert np.all(res["d_xy"] == 0.0)


# -- exact enumeration --------------------------------------------------------------


def test_f_examples():
    ident = kraus.KrausMeasure([1.0], [np.eye(2)])
    assert all(compute_f(ident, n) == pytest.approx(1.0, abs=1e-15) for n in range(5))
    assert all(compute_f(model("flip_flop"), n) == 0.0 for n in range(1, 8))
    assert compute_f(model("flip_flop"), 0) == 1.0


@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(1, 3), st.integers(0, 4))
@settings(max_examples=20)
def test_f_matches_loop_oracle(seed, k, n_el, n):
    w, V = random_kraus(k, n_el, np.random.default_rng(seed))
    assert abs(compute_f(kraus.KrausMeasure(w, V), n) - f_by_loops(w, V, n)) < 1e-12


def test_f_budget():
    with pytest.raises(BudgetError):
        compute_f(model("flip_flop"), 21)


def test_word_order_first_letter_most_significant():
    m = model("flip_flop")
    _, P = word_products(m, 2)
    V = m.matrices
    expected = [V[b] @ V[a] for a in range(2) for b in range(2)]
    assert np.allclose(P, expected)


def test_cylinder_examples():
    ad = model("amplitude_damping", p=0.5)
    assert exact_cylinder_probability(ad, np.diag([1, 0]), []) == 1.0
    assert exact_cylinder_probability(ad, np.diag([1, 0]), [1]) == 0.0
    u = model("appc_example1")
    for word in ([0], [1, 0, 1], [0, 0, 1, 1, 0]):
        assert exact_cylinder_probability(u, np.eye(2) / 2, word) == pytest.approx(0.5 ** len(word), abs=1e-15)


def test_cylinder_probabilities_sum_to_one():
    m = model("rotating_damping")
    rho = np.diag([0.3, 0.7])
    total = sum(exact_cylinder_probability(m, rho, w) for w in itertools.product(range(2), repeat=5))
    assert abs(total - 1) < 1e-12
