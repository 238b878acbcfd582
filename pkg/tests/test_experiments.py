import json

import numpy as np
import pytest

from qtraj import kraus
from qtraj.exceptions import AssumptionError, InsufficientResolutionError, InvalidInputError, ParseError
from qtraj.experiments import (
    ExperimentConfig,
    block_frequencies,
    orbit_atoms,
    parse_initial,
    run_appendix_c,
    run_convergence,
    run_ergodicity,
    run_estimator_decay,
    run_experiment,
    run_invariant_estimate,
    trajectory_slope,
)
from qtraj.io import read_csv


def cfg(tmp_path, **kw):
    kw.setdefault("output_dir", str(tmp_path))
    return ExperimentConfig(**kw)


def test_config_round_trip_and_errors(tmp_path):
    c = cfg(tmp_path, seed=3, n_traj=10, n_steps=20, burn_in=5, checkpoints=[5, 1, 1])
    assert c.checkpoints == [1, 5]
    assert ExperimentConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c
    with pytest.raises(ParseError, match="unknown config field"):
        ExperimentConfig.from_dict({"modle": "flip_flop"})
    with pytest.raises(InvalidInputError):
        ExperimentConfig(n_steps=10, burn_in=11)
    path = tmp_path / "bad.json"
    path.write_text('{"seed": 1,,}')
    with pytest.raises(ParseError, match="line 1"):
        ExperimentConfig.from_json(path)


def test_parse_initial_forms():
    m = kraus.builtin_model("rotating_damping")
    assert parse_initial("uniform", m) == "uniform"
    assert np.allclose(parse_initial("e2", m), [0, 1])
    assert np.allclose(parse_initial("maximally_mixed", m), np.eye(2) / 2)
    assert np.allclose(parse_initial("invariant", m), np.diag([0.64, 0.36]), atol=1e-9)
    nu = parse_initial({"atoms": [[1, 0], [0, 1]], "weights": [0.25, 0.75]}, m)
    assert np.allclose(nu.weights, [0.25, 0.75])
    with pytest.raises(InvalidInputError):
        parse_initial("e3", m)
    with pytest.raises(InvalidInputError):
        parse_initial({"vector": [1, 0, 0]}, m)


def test_invariant_estimate_matches_channel(tmp_path):
    est = run_invariant_estimate(cfg(tmp_path, model="flip_flop", n_traj=500, n_steps=11, burn_in=0))
    assert est.period == 2
    assert est.rho_check < 0.1
    header, rows = read_csv(tmp_path / "nu_hat.csv")
    assert header == ["index", "weight", "x_re_0", "x_im_0", "x_re_1", "x_im_1"]
    assert len(rows) == 1000


@pytest.mark.parametrize("model,target", [("amplitude_damping:p=0.5", np.diag([1, 0])), ("appc_example1", np.eye(2) / 2)])
def test_invariant_estimate_examples(tmp_path, model, target):
    est = run_invariant_estimate(cfg(tmp_path, model=model, n_traj=4000, n_steps=60, burn_in=60))
    assert np.allclose(est.rho_inv, target, atol=1e-9)
    assert est.rho_check < 0.05


def test_flip_flop_invariant_estimate_is_two_atoms(tmp_path):
    est = run_invariant_estimate(cfg(tmp_path, model="flip_flop", n_traj=300, n_steps=9, burn_in=0))
    merged = est.nu_hat.merged()
    assert merged.size == 2
    assert np.allclose(sorted(merged.weights), [0.5, 0.5])


def test_convergence_small(tmp_path):
    c = cfg(tmp_path, n_traj=1000, n_steps=60, burn_in=60, initial="e1", max_points=500)
    res = run_convergence(c)
    assert res.slope < 0
    header, rows = read_csv(tmp_path / "convergence.csv")
    assert header == ["n", "w1_value", "fitted_slope", "r2", "noise_floor", "in_fit"]
    assert {r[-1] for r in rows} <= {"true", "false"}


def test_convergence_reports_insufficient_resolution(tmp_path):
    c = cfg(tmp_path, n_traj=20, n_steps=4, burn_in=4, initial="uniform", checkpoints=[3, 4])
    with pytest.raises(InsufficientResolutionError):
        run_convergence(c)


def test_convergence_flip_flop_sits_at_noise_floor(tmp_path):
    c = cfg(tmp_path, model="flip_flop", n_traj=2000, n_steps=40, burn_in=40, max_points=1000)
    with pytest.raises(InsufficientResolutionError):
        run_convergence(c)
    _, rows = read_csv(tmp_path / "convergence.csv")
    floor = float(rows[0][4])
    assert all(float(r[1]) <= floor for r in rows if int(r[0]) >= 2)
    assert all(r[2] == "nan" for r in rows)


def test_gate_refuses_and_force_overrides(tmp_path):
    c = cfg(tmp_path, model="appc_example2", n_traj=50, n_steps=10, burn_in=10)
    with pytest.raises(AssumptionError, match="purification"):
        run_convergence(c)
    c.force = True
    try:
        res = run_convergence(c)
        assert res.gate.forced
    except InsufficientResolutionError:
        pass


def test_appendix_c1_small(tmp_path):
    res = run_appendix_c(1, cfg(tmp_path, n_traj=800, n_steps=100, burn_in=100))
    assert res.frobenius_error < 0.1
    assert res.w1_to_uniform < 0.2
    assert read_csv(tmp_path / "appc1.csv")[0] == ["metric", "value"]


def test_orbit_atoms():
    atoms, labels = orbit_atoms(2.0)
    assert len(atoms) == 4 and labels == ["z", "-z", "1/z", "-1/z"]
    atoms, labels = orbit_atoms(1.0)
    assert len(atoms) == 2 and labels == ["z|1/z", "-z|-1/z"]
    x = np.array([1, 2]) / np.sqrt(5)
    v2 = np.array([[0, 1j], [1j, 0]])
    y = v2 @ x
    assert any(abs(abs(np.vdot(a, y)) - 1) < 1e-12 for a in orbit_atoms(2.0)[0])


@pytest.mark.parametrize("z,n_atoms", [(2.0, 4), (1.0, 2)])
def test_appendix_c2_frequencies(tmp_path, z, n_atoms):
    res = run_appendix_c(2, cfg(tmp_path, n_steps=20000, burn_in=0, z=z))
    assert res.unmatched == 0.0
    assert len(res.frequencies) == n_atoms
    assert res.max_deviation < 0.03


def test_estimator_decay_flip_flop_is_exact(tmp_path):
    res = run_estimator_decay(cfg(tmp_path, model="flip_flop", n_traj=50, n_steps=12, burn_in=0, offsets=[0, 3]))
    assert np.all(res.mean_d[:, 1:] == 0.0)
    assert np.all(res.slopes == -np.inf)
    header = read_csv(tmp_path / "estimator_decay.csv")[0]
    assert header == ["n", "l", "mean_d", "stderr_d", "f_n", "median_slope", "max_slope_minus_bound",
                      "gamma1_hat", "gamma2_hat"]


def test_estimator_decay_needs_full_support(tmp_path):
    c = cfg(tmp_path, model="amplitude_damping:p=0.3", n_traj=20, n_steps=10, burn_in=0)
    with pytest.raises(AssumptionError, match="full support"):
        run_estimator_decay(c)
    assert (tmp_path / "estimator_decay.csv").exists()


def test_estimator_decay_uniform_in_offset(tmp_path):
    # the curves agree across l when the start measure is (close to) invariant,
    # since x_l then has the same law as x_0
    inv = run_invariant_estimate(cfg(tmp_path / "inv", n_traj=3000, n_steps=100, burn_in=100, seed=1))
    X = inv.nu_hat.vectors
    init = {"atoms": np.stack([X.real, X.imag], axis=-1).tolist()}
    res = run_estimator_decay(cfg(tmp_path, n_traj=3000, n_steps=40, burn_in=0, offsets=[0, 5, 10], initial=init))
    for j in (1, 2):
        se = np.sqrt(res.stderr_d[0, 1:] ** 2 + res.stderr_d[j, 1:] ** 2)
        assert np.all(np.abs(res.mean_d[0, 1:] - res.mean_d[j, 1:]) <= 4 * se)


def test_trajectory_slope():
    n = np.arange(10.0)
    assert trajectory_slope(n, np.exp(-0.3 * n)) == pytest.approx(-0.3)
    assert trajectory_slope(n, np.zeros(10)) == -np.inf


def test_block_frequencies():
    o = [0, 1, 0, 1, 1]
    assert block_frequencies(o, (1,)) == 0.6
    assert block_frequencies(o, (0, 1)) == 0.5
    assert np.isnan(block_frequencies([0], (0, 1)))


def test_ergodicity_unitary_outcomes(tmp_path):
    res = run_ergodicity(cfg(tmp_path, model="appc_example1", n_steps=20000, burn_in=0, block_len=2))
    assert res.max_gap < 0.02
    _, rows = read_csv(tmp_path / "ergodicity.csv")
    assert rows[0][0] == "1" and rows[2][0] == "1 1"


def test_ergodicity_examples(tmp_path):
    ad = run_ergodicity(cfg(tmp_path, model="amplitude_damping:p=0.5", n_steps=5000, burn_in=0, block_len=1))
    assert ad.time_average[0] == 1.0 and ad.max_gap == 0.0
    ff = run_ergodicity(cfg(tmp_path, model="flip_flop", n_steps=5000, burn_in=0, block_len=2))
    two = dict(zip(ff.blocks, ff.time_average))
    assert two[(0, 0)] == 0.0 and two[(1, 1)] == 0.0
    assert abs(two[(0, 1)] - 0.5) < 1e-3 and abs(two[(1, 0)] - 0.5) < 1e-3


def test_run_experiment_unknown_name(tmp_path):
    with pytest.raises(InvalidInputError):
        run_experiment("nope", cfg(tmp_path))
