import json
from pathlib import Path

import numpy as np
import pytest

import scenarios
from mixnet.identcheck import (brute_force_matching, check_identifiability, check_informativity,
                               check_relaxed_cond6, diagonal_matching, empirical_spectrum,
                               left_coprime)
from mixnet.netmodel import net2
from mixnet.polyalg import PolyMatrix
from mixnet.simkit import ExcitationSpec
from mixnet.structure import ModelStructure

GOLDEN = Path(__file__).parent / "golden"


@pytest.mark.parametrize("name", sorted(scenarios.golden_cases()))
def test_golden_reports(name):
    rep = check_identifiability(scenarios.golden_cases()[name]).to_dict()
    expected = json.loads((GOLDEN / f"{name}.json").read_text())
    assert json.loads(json.dumps(rep)) == expected


def test_example3_scenarios_pass_condition_2():
    for s in scenarios.example3_scenarios().values():
        assert check_identifiability(s).conditions["diagonal_permutation"]["holds"]
    wit = check_identifiability(scenarios.example3_scenarios()["mixed"]).conditions
    assert wit["diagonal_permutation"]["witness"] == {
        "row 1": "Upsilon[2] col 1", "row 2": "B[0] col 1", "row 3": "Upsilon[1] col 3"}


def test_net2_all_conditions():
    m = net2()
    rep = check_identifiability(ModelStructure.from_model(m), model=m)
    assert all(v["holds"] is True for v in rep.conditions.values())
    assert rep.conditions["diagonal_permutation"]["witness"] == {"row 1": "B[0] col 1",
                                                                 "row 2": "B[0] col 2"}


def test_failure_scenarios():
    assert check_identifiability(scenarios.bidirectional()).conditions["one_directional"]["holds"] is False
    assert check_identifiability(scenarios.no_excitation()).conditions["excitation"]["holds"] is False
    assert check_identifiability(scenarios.rank_deficient_gamma()).conditions["constraint"]["holds"] is False


def _random_structure(rng, L):
    nl = int(rng.integers(1, 3))
    A = rng.random((nl, L, L)) < 0.4
    A = A | np.transpose(A, (0, 2, 1))
    K = int(rng.integers(1, 3))
    B = rng.random((1, L, K)) < 0.35
    Ng = rng.random((1, L, L)) < 0.2
    Ng[:, np.arange(L), np.arange(L)] = False
    return ModelStructure(A, B, Ng, np.zeros(L, int), np.zeros((1, L, L), bool),
                          np.zeros((1, 1)), np.ones(1))


def test_matching_equals_brute_force():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(300):
        L = int(rng.integers(2, 5))
        s = _random_structure(rng, L)
        fast, slow = diagonal_matching(s), brute_force_matching(s)
        assert (fast is None) == (slow is None)
        if fast is not None:
            hits += 1
            assert sorted(fast) == sorted(slow) or len(set(fast)) == L
    assert 0 < hits < 300


def test_cond6_symmetric_under_transpose():
    rng = np.random.default_rng(1)
    for _ in range(50):
        s = _random_structure(rng, 4)
        t = ModelStructure(s.A_mask, s.B_mask, np.transpose(s.Ng_mask, (0, 2, 1)), s.Dg_deg,
                           s.F_mask, s.Gamma, s.gamma)
        a = check_identifiability(s).conditions["one_directional"]["holds"]
        b = check_identifiability(t).conditions["one_directional"]["holds"]
        assert a == b


def test_gamma_rank_stable_under_row_scaling():
    s = scenarios.example3_scenarios()["own_inputs"]
    rng = np.random.default_rng(2)
    G = np.zeros((2, s.n_vartheta))
    G[0, 0], G[1, -1], G[1, 0] = 1.0, 1.0, 0.5
    for _ in range(20):
        scale = 10 ** rng.uniform(-3, 3, 2)
        t = s.with_constraint(G * scale[:, None], np.ones(2))
        assert check_identifiability(t).conditions["constraint"]["holds"]
        t = s.with_constraint(np.vstack([G[0], G[0]]) * scale[:, None], np.ones(2))
        assert not check_identifiability(t).conditions["constraint"]["holds"]


def test_relaxed_condition_clauses():
    rel = check_relaxed_cond6(scenarios.bidirectional(True, ground=(False, True, True)))
    assert rel["G12"]["clause"] == 2 and rel["G21"]["clause"] == 3
    rep = check_identifiability(scenarios.bidirectional(True, ground=(False, True, True)))
    assert rep.conditions["one_directional"]["holds"]
    rel = check_relaxed_cond6(scenarios.bidirectional(True, ground=(True, True, False)))
    assert rel["G12"]["clause"] is None
    assert not check_identifiability(scenarios.bidirectional(True)).conditions["one_directional"]["holds"]
    s = ModelStructure.from_model(net2())
    assert all(v["clause"] == 1 for v in check_relaxed_cond6(s).values())


def test_coprimeness():
    m = net2()
    ok, _ = left_coprime(PolyMatrix(np.concatenate([m.A.coefs, m.B.padded(2)], axis=2)))
    assert ok
    d = np.array([1.0, -0.5])
    A = PolyMatrix(np.convolve(d, [2.0, 0.3])[:, None, None])
    B = PolyMatrix(np.convolve(d, [1.0, 0.1])[:, None, None])
    ok, wit = left_coprime(PolyMatrix(np.concatenate([A.coefs, B.coefs], axis=2)))
    assert not ok and abs(wit["common_root_lambda"][0] - 2.0) < 1e-8


def test_informativity():
    s = ModelStructure.from_model(net2())
    assert check_informativity(ExcitationSpec("white"), s)["holds"]
    assert not check_informativity(ExcitationSpec("multisine", freqs=(0.4,)), s)["holds"]
    t = np.arange(8000)
    one_tone = np.column_stack([np.cos(0.4 * t), np.sin(0.4 * t + 1)])
    res = check_informativity(one_tone, s)
    assert not res["holds"] and res["count"] < res["required"]
    white = np.random.default_rng(0).standard_normal((8000, 2))
    assert check_informativity(white, s)["holds"]
    rep = check_informativity(ExcitationSpec("white"), scenarios.no_excitation())
    assert not rep["holds"] and "no excitation" in rep["reason"]
    assert "rule" in rep


def test_empirical_spectrum_shape():
    f, P = empirical_spectrum(np.random.default_rng(1).standard_normal((1000, 2)))
    assert P.shape == (f.size, 2, 2) and f[-1] <= np.pi + 1e-12
