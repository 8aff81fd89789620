import numpy as np
import pytest
from scipy.signal import lfilter

from mixnet.estim1 import (ArxEstimate, InformativityError, arx_regressors, estimate_breve,
                           fit_arx, reduce_to_structured, refine)
from mixnet.netmodel import build_msd, net2, to_breve
from mixnet.polyalg import PolyMatrix
from mixnet.simkit import DataSet, ExcitationSpec, generate, simulate, whiteness_test
from mixnet.structure import ModelStructure


def _series(P: PolyMatrix, d, n):
    """Coefficients 0..n of ``P / d`` as a power series."""
    imp = np.zeros(n + 1)
    imp[0] = 1.0
    h = lfilter([1.0], d, imp)
    return lfilter(h, [1.0], P.padded(n + 1), axis=0)


def _exact_arx(m, n):
    """Truncated ARX expansion of the true model; ``F = I`` so the noise filter is ``dG``."""
    b = to_breve(m)
    U0inv = np.linalg.inv(b.Upsilon0)
    d = b.dG.coeffs
    Abar = np.einsum("ij,kjl->kil", U0inv, _series(b.Upsilon, d, n))
    Bbar = np.einsum("ij,kjl->kil", U0inv, _series(b.Bb, d, n))
    p = n * m.L + (n + 1) * m.K
    return ArxEstimate(PolyMatrix(Abar), PolyMatrix(Bbar), U0inv @ m.Lambda @ U0inv.T,
                       np.eye(p), n, 1000)


def _eta_err(eta, ref):
    return np.linalg.norm(eta - ref) / np.linalg.norm(ref)


def test_arx_exact_on_noise_free_coprime_model():
    m = build_msd([1, 1], [[0, 1], [1, 0]], [[0, 1], [1, 0]], [1, 0], [1, 0])
    d = generate(m, 500, ExcitationSpec(seed=0), None, burn_in=0, noise=False)
    arx = fit_arx(d, 2)
    U0inv = np.linalg.inv(m.A[0])
    assert np.allclose(arx.Abar.padded(3), np.einsum("ij,kjl->kil", U0inv, m.A.padded(3)), atol=1e-9)
    assert np.abs(arx.Sigma).max() < 1e-20


def test_arx_residual_variance_matches_innovations():
    m = net2()
    d = generate(m, 10_000, ExcitationSpec(seed=1), 2)
    arx = fit_arx(d, 30)
    U0inv = np.linalg.inv(to_breve(m).Upsilon0)
    ref = U0inv @ m.Lambda @ U0inv.T
    assert np.linalg.norm(arx.Sigma - ref) / np.linalg.norm(ref) < 0.10


def test_underorder_arx_residuals_not_white():
    d = generate(net2(), 10_000, ExcitationSpec(seed=3), 4)
    Phi, Y = arx_regressors(d, 1)
    E = Y - Phi @ np.linalg.lstsq(Phi, Y, rcond=None)[0]
    assert whiteness_test(E)[1] < 0.01


def test_single_sinusoid_is_rank_deficient():
    m = net2()
    t = np.arange(3000)
    r = np.column_stack([np.cos(0.4 * t), np.sin(0.4 * t)])
    e = np.random.default_rng(0).standard_normal((3000, 2)) * 0.1
    d = DataSet(simulate(m, r, e), r, e)
    with pytest.raises(InformativityError, match="not informative"):
        estimate_breve(d, ModelStructure.from_model(m))


def test_reduction_recovers_truth_from_exact_arx():
    m = net2()
    s = ModelStructure.from_model(m)
    arx = _exact_arx(m, 40)
    ref = s.eta_from_breve(to_breve(m))
    eta = reduce_to_structured(arx, s)
    assert _eta_err(eta.eta, ref) < 1e-8
    again = refine(eta, arx, s, passes=2)
    assert _eta_err(again.eta, ref) < 1e-8


def test_refinement_improves_accuracy():
    m = net2()
    s = ModelStructure.from_model(m)
    ref = s.eta_from_breve(to_breve(m))
    e0, e1, e2 = [], [], []
    for run in range(8):
        d = generate(m, 4000, ExcitationSpec(seed=100 + run), 200 + run)
        e0.append(_eta_err(estimate_breve(d, s, passes=0).eta.eta, ref))
        e1.append(_eta_err(estimate_breve(d, s, passes=1).eta.eta, ref))
        e2.append(_eta_err(estimate_breve(d, s, passes=2).eta.eta, ref))
    assert np.median(e1) < 0.5 * np.median(e0)
    assert np.median(e2) <= 1.2 * np.median(e1)


def test_noise_model_and_symmetry():
    m = net2()
    s = ModelStructure.from_model(m)
    d = generate(m, 16_000, ExcitationSpec(seed=5), 6)
    res = estimate_breve(d, s)
    b = res.breve
    assert np.linalg.norm(b.Lb - m.Lambda) / np.linalg.norm(m.Lambda) < 0.05
    Fb_true = to_breve(m).Fb
    assert np.abs(b.Fb.padded(2) - Fb_true.padded(2)).max() < 0.05
    assert np.array_equal(b.Ab.coefs, np.transpose(b.Ab.coefs, (0, 2, 1)))


def test_noise_free_estimate_is_exact():
    m = net2()
    s = ModelStructure.from_model(m)
    d = generate(m, 2000, ExcitationSpec(seed=7), None, burn_in=0, noise=False)
    res = estimate_breve(d, s)
    assert res.diagnostics["1a"]["fallback"] == "equation-error"
    assert _eta_err(res.eta.eta, s.eta_from_breve(to_breve(m))) < 1e-6
    assert np.abs(res.breve.Lb).max() < 1e-12


def test_constraint_scale_invariance():
    m = net2()
    s = ModelStructure.from_model(m)
    d = generate(m, 4000, ExcitationSpec(seed=8), 9)
    base = estimate_breve(d, s).eta.eta
    for c in (0.1, 10.0):
        t = s.with_constraint(s.Gamma, c * s.gamma)
        assert np.allclose(estimate_breve(d, t).eta.eta, c * base, rtol=1e-8, atol=1e-10)
