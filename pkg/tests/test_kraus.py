import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qtraj import kraus
from qtraj.exceptions import InvalidModelError, InvalidParameterError, ParseError
from oracles import random_kraus, random_ray

seeds = st.integers(0, 2**32 - 1)


@pytest.mark.parametrize("name", sorted(kraus.BUILTIN_MODELS))
def test_builtins_are_stochastic(name):
    rep = kraus.validate(kraus.builtin_model(name), tol=1e-12)
    assert rep.passed
    assert np.isclose(rep.second_moment, 2.0)


def test_scaled_identity_fails_validation():
    m = kraus.KrausMeasure([1.0], [2 * np.eye(2)])
    rep = kraus.validate(m, tol=1e-12)
    assert not rep.passed
    assert np.isclose(rep.defect, np.linalg.norm(3 * np.eye(2)))
    with pytest.raises(InvalidModelError):
        m.require_valid()


def test_amplitude_damping_matrices():
    m = kraus.builtin_model("amplitude_damping", {"p": 0.36})
    assert np.allclose(m.matrices[0], np.diag([1, 0.8]))
    assert np.allclose(m.matrices[1], [[0, 0.6], [0, 0]])


def test_rotating_damping_default_structure():
    m = kraus.builtin_model("rotating_damping")
    assert np.allclose(m.matrices[0], np.diag([0.8, 0.6]))
    c = np.cos(np.pi / 4)
    R = np.array([[c, -c], [c, c]])
    assert np.allclose(m.matrices[1], R @ np.diag([0.6, 0.8]))


@pytest.mark.parametrize(
    "name,params",
    [("amplitude_damping", {"p": 1.5}), ("rotating_damping", {"a": 2.0}), ("nope", {}), ("flip_flop", {"p": 0.1})],
)
def test_bad_builtin_parameters(name, params):
    with pytest.raises(InvalidParameterError):
        kraus.builtin_model(name, params)


@given(seeds, st.integers(1, 4), st.integers(1, 4))
def test_random_models_validate_and_round_trip(seed, k, n):
    w, V = random_kraus(k, n, np.random.default_rng(seed))
    m = kraus.KrausMeasure(w, V, "random")
    assert kraus.validate(m, 1e-12).passed
    back = kraus.from_dict(json.loads(json.dumps(kraus.to_dict(m))))
    assert back == m


@given(seeds, st.integers(1, 4), st.integers(1, 4))
def test_transition_probabilities_sum_to_one(seed, k, n):
    rng = np.random.default_rng(seed)
    w, V = random_kraus(k, n, rng)
    p = kraus.transition_probabilities(kraus.KrausMeasure(w, V), random_ray(k, rng)).probabilities
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) < 1e-12


def test_transition_probabilities_hand_values():
    m = kraus.builtin_model("amplitude_damping", {"p": 0.5})
    p = kraus.transition_probabilities(m, np.array([1, 0])).probabilities
    assert np.allclose(p, [1, 0])
    m = kraus.builtin_model("appc_example1")
    rng = np.random.default_rng(3)
    assert np.allclose(kraus.transition_probabilities(m, random_ray(2, rng)).probabilities, [0.5, 0.5])


def test_repair_only_small_defects():
    m = kraus.builtin_model("flip_flop")
    slightly = kraus.KrausMeasure(m.weights * (1 + 1e-8), m.matrices)
    fixed = kraus.repair(slightly)
    assert kraus.validate(fixed, 1e-12).passed
    with pytest.raises(InvalidModelError):
        kraus.repair(kraus.KrausMeasure([1.0], [2 * np.eye(2)]))


def test_load_save_and_errors(tmp_path):
    m = kraus.builtin_model("appc_example1")
    path = tmp_path / "m.json"
    kraus.save(m, path)
    assert kraus.load(path) == m
    bad = tmp_path / "bad.json"
    bad.write_text('{"dim": 2, "elements": [{"weight": 1, "matrix": [[[1,0],[0,0]]]}]}')
    with pytest.raises(ParseError, match=r"elements\[0\]\.matrix: expected 2 rows"):
        kraus.load(bad)
    bad.write_text('{"dim": 2,\n "elements": [}')
    with pytest.raises(ParseError, match="line 2"):
        kraus.load(bad)
    invalid = tmp_path / "invalid.json"
    kraus.save(kraus.KrausMeasure([1.0], [2 * np.eye(2)]), invalid)
    with pytest.raises(InvalidModelError):
        kraus.load(invalid)
    assert kraus.load(invalid, allow_invalid=True).dim == 2


def test_resolve_model_forms(tmp_path):
    assert kraus.resolve_model("amplitude_damping:p=0.3") == kraus.builtin_model("amplitude_damping", {"p": 0.3})
    assert kraus.resolve_model({"name": "flip_flop"}) == kraus.builtin_model("flip_flop")
    path = tmp_path / "m.json"
    kraus.save(kraus.builtin_model("flip_flop"), path)
    assert kraus.resolve_model(str(path)).dim == 2
    with pytest.raises(InvalidParameterError):
        kraus.resolve_model("not-a-model")


def test_construction_rejects_bad_shapes():
    with pytest.raises(InvalidModelError):
        kraus.KrausMeasure([1.0, 1.0], [np.eye(2)])
    with pytest.raises(InvalidModelError):
        kraus.KrausMeasure([-1.0], [np.eye(2)])
    with pytest.raises(InvalidModelError):
        kraus.KrausMeasure([1.0], np.ones((1, 2, 3)))
