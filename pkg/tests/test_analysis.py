import json
import math
from importlib import resources

import numpy as np
import pytest

from ratelearn import CapExceeded, UsageError, rd
from ratelearn import analysis as A
from ratelearn.codec import decode, encode, train_codec
from ratelearn.learning import HypothesisGrid, covering_number, erm, true_risk_regression
from ratelearn.losses import LossFunction
from ratelearn.probability import FiniteJoint, PiecewiseLinear, RegressionModel

ABS = LossFunction("absolute")
SQ = LossFunction("squared")
HAMMING = LossFunction("hamming")


def test_theorem1_examples():
    assert A.theorem1_bound(0.3, ABS, 0.0) == 0.3
    assert A.theorem1_bound(0.1, ABS, 0.05) == pytest.approx(0.2)
    assert A.theorem1_bound(0.2, LossFunction("ppower", 2.0), 0.0625) == pytest.approx(1.2)


def test_theorem3_examples_and_consistency():
    assert A.theorem3_bound(0.5, 2.0) == pytest.approx(0.75)
    assert A.theorem3_bound(1.0, 0.0) == pytest.approx(3.0)
    assert A.theorem3_bound(0.7, 200.0) == pytest.approx(0.7)
    for sigma in (0.1, 0.5, 2.0):
        for rate in (0.0, 0.5, 1.0, 3.0, 7.5):
            via2 = A.theorem2_bound(sigma**2, 2, rd.gaussian_drf(sigma, rate))
            assert abs(via2 - A.theorem3_bound(sigma, rate)) <= 1e-15 * max(1.0, via2)


def test_finite_sample_bound_examples():
    assert A.finite_sample_bound(0.0, ABS, 0.3, 0.0, 10) == 0.3
    assert A.finite_sample_bound(0.02, ABS, 0.1, 1.0, 100) == pytest.approx(0.24)
    with pytest.raises(UsageError):
        A.finite_sample_bound(0.0, ABS, 0.3, 0.0, 0)


def test_bound_report_gaussian_only_fields():
    rep = A.bound_report(2.0, SQ, sigma=0.5)
    assert rep.theorem3_bound == pytest.approx(0.75)
    assert json.loads(json.dumps(rep.to_json()))["theorem2_bound"] == pytest.approx(0.75)
    plain = A.bound_report(1.0, ABS, sup_drf=0.1, lstar=0.2)
    assert plain.theorem3_bound is None


def test_theorem1_nonincreasing_along_a_curve():
    curve = rd.rd_curve(FiniteJoint.from_pmf([[0.3, 0.2], [0.1, 0.4]]), HAMMING)
    rates = np.linspace(0, curve.rates.max(), 20)
    vals = [A.theorem1_bound(0.3, HAMMING, rd.invert_curve(curve, r).value) for r in rates]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


# -- learner chain -------------------------------------------------------------


def regression_realization(seed, rate, n=2048):
    gen = np.random.default_rng(seed)
    grid = HypothesisGrid.lattice((0, 1), 4, 4)
    model = RegressionModel(grid.member(77), 0.5)
    x, y = model.sample(gen, n)
    codec = train_codec("conditional-lloyd-max", x, y, rate, SQ, x_bins=4, x_range=(0, 1))
    return grid, model, x, y, decode(codec, x, encode(codec, x, y))


def test_lossless_chain_collapses():
    grid, _, x, y, _ = regression_realization(0, 1)
    rep = A.proof_chain_check(x, y, y, grid, SQ, erm(grid, x, y, SQ).index)
    assert rep.extras["l_n"] == 0.0
    assert all(s.slack == 0.0 for s in rep.steps)


@pytest.mark.parametrize("seed", range(5))
def test_chain_holds_per_realization(seed):
    grid, _, x, y, yhat = regression_realization(seed, 1)
    rep = A.proof_chain_check(x, y, yhat, grid, SQ, erm(grid, x, yhat, SQ).index)
    assert rep.ok(A.CHAIN_TOL)
    assert rep.extras["form"] == "root"


def test_eta_chain_for_absolute_loss():
    grid, _, x, y, yhat = regression_realization(9, 2)
    rep = A.proof_chain_check(x, y, yhat, grid, ABS, erm(grid, x, yhat, ABS).index)
    assert rep.extras["form"] == "eta"
    assert rep.ok(A.CHAIN_TOL)


def test_non_minimizer_is_refused_or_reported():
    grid, _, x, y, yhat = regression_realization(1, 1)
    fit = erm(grid, x, yhat, SQ)
    wrong = int(np.argmax(fit.risks))
    with pytest.raises(UsageError):
        A.proof_chain_check(x, y, yhat, grid, SQ, wrong)
    rep = A.proof_chain_check(x, y, yhat, grid, SQ, wrong, allow_non_erm=True)
    step_b = next(s for s in rep.steps if s.label == "(b)")
    assert step_b.slack < -1e-6


def test_remark2_bound_holds_with_calibrated_constant():
    grid = HypothesisGrid.lattice((0, 1), 4, 4)
    model = RegressionModel(grid.member(77), 0.5)
    ns = [128, 512, 2048]
    c_prime = A.calibrate_c_prime(ns, A.ulln_deviations(grid, model, SQ, ns, 10, seed=5))
    n, hits, trials = 512, 0, 40
    for t in range(trials):
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([99, t])))
        x, y = model.sample(gen, n)
        codec = train_codec("lloyd-max", x, y, 2, SQ)
        yhat = decode(codec, x, encode(codec, x, y))
        ln = float(np.mean((y - yhat) ** 2))
        risk = true_risk_regression(grid.member(erm(grid, x, yhat, SQ).index), model)
        hits += risk <= A.finite_sample_bound(ln, SQ, model.sigma**2, c_prime, n)
    assert hits / trials >= 0.95


# -- Dobrushin -------------------------------------------------------------------


def test_dobrushin_on_lipschitz_entropies():
    eps = np.geomspace(0.2, 0.02, 6)
    sigma = 0.5
    ent = [covering_number(1.0, sigma * e, materialize=False).log2_count for e in eps]
    c_fit = float(np.max(np.asarray(ent) * eps))
    trend = A.dobrushin_diagnostic(eps, ent, [10 * c_fit])[0]
    assert trend.decreasing


def test_dobrushin_finite_family_and_falsification():
    eps = [0.3, 0.2, 0.1, 0.05]
    for t in A.dobrushin_diagnostic(eps, [3.0] * 4, [0.01, 1.0, 10.0]):
        assert t.decreasing
    c = 0.5
    synthetic = [2.0 ** (2 * c / e) for e in eps]
    assert not A.dobrushin_diagnostic(eps, synthetic, [c])[0].decreasing


def test_dobrushin_validation():
    with pytest.raises(UsageError):
        A.dobrushin_diagnostic([0.2, 0.1], [1, 2], [1.0])
    with pytest.raises(UsageError):
        A.dobrushin_diagnostic([0.1, 0.2, 0.3], [1, 2, 3], [1.0])


# -- converse chain ------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny():
    text = resources.files("ratelearn").joinpath("data/tiny.json").read_text()
    joint, loss, n, rate, scheme = A.load_instance(json.loads(text))
    return joint, loss, n, rate, scheme, rd.rd_curve(joint, loss)


def test_identity_scheme_is_tight_through_mutual_information(tiny):
    joint, loss, _, _, _, curve = tiny
    scheme = A.Scheme.from_json({"encoder": "identity", "decoder": "identity"}, joint, loss, 1)
    rep = A.appendix_chain_verify(joint, scheme, 1, 1.0, curve, loss)
    h_y_given_x = float(-(joint.pmf * np.log2(joint.conditional_y())).sum())
    assert rep.steps[0].right == pytest.approx(h_y_given_x, abs=1e-12)
    for s in rep.steps[1:4]:
        assert s.slack == pytest.approx(0.0, abs=1e-12)
    assert rep.ok(A.APPENDIX_TOL)


def test_constant_scheme_forces_zero_rate_endpoint(tiny):
    joint, loss, n, _, _, curve = tiny
    scheme = A.Scheme.from_json({"encoder": "constant", "decoder": {"constant": [0] * n}}, joint, loss, n)
    rep = A.appendix_chain_verify(joint, scheme, n, 0.0, curve, loss)
    assert rep.ok(A.APPENDIX_TOL)
    assert all(abs(s.left) < 1e-12 for s in rep.steps[:10])
    assert rep.extras["expected_l_n"] >= curve.d_max - 1e-12


def test_shipped_instance_dominance(tiny):
    joint, loss, n, rate, scheme, curve = tiny
    rep = A.appendix_chain_verify(joint, scheme, n, rate, curve, loss)
    assert rep.ok(A.APPENDIX_TOL)
    assert rep.extras["L*"] >= rep.extras["D_Y|X(R)"]


def test_over_rate_encoder_is_rejected(tiny):
    joint, loss, n, _, _, curve = tiny
    scheme = A.Scheme.from_json({"encoder": "identity", "decoder": "identity"}, joint, loss, n)
    with pytest.raises(UsageError):
        A.appendix_chain_verify(joint, scheme, n, 0.5, curve, loss)


def test_enumeration_cap():
    joint = FiniteJoint.from_pmf(np.full((4, 4), 1 / 16))
    scheme = A.Scheme.from_json({}, joint, HAMMING, 4)
    curve = rd.rd_curve(joint, HAMMING)
    with pytest.raises(CapExceeded):
        A.appendix_chain_verify(joint, scheme, 4, 2.0, curve, HAMMING)


def test_report_text_and_json(tiny):
    joint, loss, n, rate, scheme, curve = tiny
    rep = A.appendix_chain_verify(joint, scheme, n, rate, curve, loss)
    assert "worst slack" in rep.to_text()
    assert json.loads(json.dumps(rep.to_json()))["worst_slack"] == rep.worst_slack
