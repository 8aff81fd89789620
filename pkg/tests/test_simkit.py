import numpy as np
import pytest

from mixnet.netmodel import MixedModel, default_grid, freq_response, net2, to_breve
from mixnet.polyalg import PolyMatrix
from mixnet.simkit import (DataSet, ExcitationSpec, SimulationError, cross_correlation_test,
                           gen_excitation, gen_noise, generate, innovations, prediction_error,
                           simulate, whiteness_test)


def test_white_excitation_variance_and_determinism():
    r = gen_excitation(ExcitationSpec("white", 1.0, seed=7), 10_000, 1)
    assert abs(r.var() - 1) < 0.05
    r2 = gen_excitation(ExcitationSpec("white", 1.0, seed=7), 10_000, 1)
    assert np.array_equal(r, r2)


def test_multisine_energy_on_its_frequencies():
    N = 4096
    w0 = 2 * np.pi * 128 / N
    r = gen_excitation(ExcitationSpec("multisine", 1.0, (w0,), seed=1), N, 1)[:, 0]
    P = np.abs(np.fft.rfft(r)) ** 2
    assert P.argmax() == 128 and P[128] / P.sum() > 0.999
    with pytest.raises(ValueError):
        gen_excitation(ExcitationSpec("multisine", 1.0, ()), 10, 1)
    with pytest.raises(ValueError):
        gen_excitation(ExcitationSpec("pink"), 10, 1)


def test_custom_excitation(tmp_path):
    path = tmp_path / "r.csv"
    np.savetxt(path, np.arange(20.0).reshape(10, 2), delimiter=",")
    r = gen_excitation(ExcitationSpec("custom", path=str(path)), 8, 2)
    assert r.shape == (8, 2) and r[1, 0] == 2.0
    with pytest.raises(ValueError):
        gen_excitation(ExcitationSpec("custom", path=str(path)), 20, 2)


def test_noise_covariance():
    e = gen_noise(np.eye(2), 100_000, 0)
    assert np.linalg.norm(np.cov(e.T) - np.eye(2)) / np.sqrt(2) < 0.05
    lam = np.diag([0.01, 0.04])
    e = gen_noise(lam, 100_000, 1)
    assert np.allclose(e.var(axis=0), [0.01, 0.04], rtol=0.05)
    assert gen_noise(lam, 0, 1).shape == (0, 2)
    with pytest.raises(ValueError):
        gen_noise(np.array([[1.0, 2.0], [2.0, 1.0]]), 10, 0)


def test_simulate_zero_and_linearity():
    m = net2()
    assert not np.any(simulate(m, np.zeros((50, 2)), np.zeros((50, 2))))
    rng = np.random.default_rng(0)
    r, e = rng.standard_normal((300, 2)), rng.standard_normal((300, 2))
    assert np.allclose(simulate(m, 2.5 * r, 2.5 * e), 2.5 * simulate(m, r, e))


def test_impulse_response_matches_frequency_response():
    m = net2()
    M = 4096
    grid = 2 * np.pi * np.arange(M) / M
    H = freq_response(m, grid).Twr[:, :, 0]
    h_ref = np.fft.ifft(H, axis=0).real[:200]
    r = np.zeros((200, 2))
    r[0, 0] = 1.0
    h = simulate(m, r)
    assert np.abs(h - h_ref).max() < 1e-8


def test_periodic_steady_state_matches_grid():
    m = net2()
    P, periods = 256, 20
    rng = np.random.default_rng(1)
    base = rng.standard_normal(P)
    fr = freq_response(m, default_grid(128))
    for k in range(2):
        r = np.zeros((P * periods, 2))
        r[:, k] = np.tile(base, periods)
        w = simulate(m, r)[-P:]
        W = np.fft.fft(w, axis=0)[:128]
        R = np.fft.fft(base)[:128]
        assert np.abs(W / R[:, None] - fr.Twr[:, :, k]).max() < 1e-6


def test_overflow_guard():
    A = PolyMatrix(np.array([[[1.0]], [[-1.5]]]))
    m = MixedModel(A, PolyMatrix.identity(1), PolyMatrix.identity(1), PolyMatrix.zeros(1, 1),
                   PolyMatrix.identity(1), np.eye(1))
    with pytest.raises(SimulationError, match="diverged"):
        simulate(m, np.ones((5000, 1)))


def test_generate_is_deterministic(tmp_path):
    m = net2()
    spec = ExcitationSpec(seed=3)
    d1, d2 = generate(m, 500, spec, 4), generate(m, 500, spec, 4)
    assert np.array_equal(d1.w, d2.w) and np.array_equal(d1.e, d2.e)
    d1.to_csv(tmp_path / "d.csv")
    back = DataSet.from_csv(tmp_path / "d.csv")
    assert np.array_equal(back.w, d1.w) and np.array_equal(back.r, d1.r)
    assert back.meta["model_hash"] == d1.meta["model_hash"]
    with pytest.raises(ValueError):
        DataSet(np.full((3, 1), np.nan), np.zeros((3, 1)))


def test_prediction_error_noise_free():
    m = net2()
    d = generate(m, 3000, ExcitationSpec(seed=5), None, burn_in=0, noise=False)
    _, crit = prediction_error(m, d)
    assert crit < 1e-16


def test_prediction_error_innovation_property():
    m = net2()
    d = generate(m, 20_000, ExcitationSpec(seed=6), 7)
    eps, crit = prediction_error(m, d)
    _, p = whiteness_test(eps[10:])
    assert p > 0.01
    _, p = cross_correlation_test(eps[10:], np.hstack([d.w, d.r])[10:], lags=range(1, 11))
    assert p > 0.01


def test_wrong_model_has_larger_criterion():
    m = net2()
    d = generate(m, 5000, ExcitationSpec(seed=8), 9)
    A = m.A.coefs.copy()
    A[0, 0, 1] = A[0, 1, 0] = -1.05
    wrong = MixedModel(PolyMatrix(A), m.B, m.Dg, m.Ng, m.F, m.Lambda)
    assert prediction_error(wrong, d)[1] > prediction_error(m, d)[1]
    with pytest.raises(ValueError):
        prediction_error(m, d, S=-np.eye(2))


def test_innovations_scale_with_upsilon0():
    m = net2()
    d = generate(m, 2000, ExcitationSpec(seed=10), 11, burn_in=0)
    v = innovations(m, d)
    U0 = to_breve(m).Upsilon0
    assert np.allclose(v, d.e, atol=1e-9)
    eps, _ = prediction_error(m, d)
    assert np.allclose(eps @ U0.T, d.e, atol=1e-9)
