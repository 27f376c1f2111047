import math

import numpy as np
import pytest
from scipy.optimize import brentq

from ratelearn import UsageError, rd
from ratelearn.losses import LossFunction
from ratelearn.probability import FiniteJoint

HAMMING = LossFunction("hamming")


def h2(p):
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


@pytest.mark.parametrize("p", [0.5, 0.3, 0.1])
def test_bernoulli_curve_matches_closed_form(p):
    curve = rd.rd_curve(FiniteJoint.from_pmf([[1 - p, p]]), HAMMING)
    assert curve.d_max == pytest.approx(p)
    for pt in curve.points:
        assert pt.rate == pytest.approx(max(h2(p) - h2(pt.distortion), 0.0), abs=1e-6)


def test_bernoulli_inversion_against_entropy_bisection():
    want = brentq(lambda d: 1 - h2(d) - 0.25, 1e-12, 0.5 - 1e-12, xtol=1e-15)
    got = rd.distortion_at_rate(FiniteJoint.from_pmf([[0.5, 0.5]]), HAMMING, 0.25)
    assert float(got.distortion) == pytest.approx(want, abs=1e-6)


def test_side_information_that_reveals_y_gives_zero_rate():
    j = FiniteJoint.from_pmf([[0.5, 0.0], [0.0, 0.5]])
    curve = rd.rd_curve(j, HAMMING)
    assert curve.d_max == 0.0
    assert curve.rates.max() == 0.0


def test_independent_side_information_does_not_help():
    py = np.array([0.2, 0.5, 0.3])
    j = FiniteJoint.from_pmf(np.outer([0.6, 0.4], py))
    cond = rd.rd_curve(j, HAMMING)
    pooled = rd.rd_curve(j.pooled(), HAMMING)
    for pt in pooled.points[1:]:
        assert cond.rate_at(pt.distortion).value == pytest.approx(pt.rate, abs=1e-4)


def test_envelope_never_exceeds_chord(rng):
    j = FiniteJoint.from_pmf(rng.dirichlet(np.ones(9)).reshape(3, 3))
    curve = rd.rd_curve(j, HAMMING)
    for d in np.linspace(0, curve.d_max, 25):
        assert curve.rate_at(d, "envelope").value <= curve.rate_at(d).value + 1e-9


def test_lagrangian_history_is_nonincreasing(rng):
    j = FiniteJoint.from_pmf(rng.dirichlet(np.ones(16)).reshape(4, 4))
    res = rd.ba_rd_point(j, HAMMING, 4.0, keep_history=True)
    for h in res.histories:
        assert np.all(np.diff(h) <= 1e-12 * max(1.0, abs(h[0])))
    assert res.converged


def test_ba_point_satisfies_its_own_dual_bound(rng):
    j = FiniteJoint.from_pmf(rng.dirichlet(np.ones(12)).reshape(3, 4))
    res = rd.ba_rd_point(j, HAMMING, 3.0)
    # the solved point lies on or above its supporting line
    assert res.rate >= res.intercept - res.slope * res.distortion - 1e-8


def test_curve_serialization_round_trips():
    curve = rd.rd_curve(FiniteJoint.from_pmf([[0.7, 0.3]]), HAMMING, source_id="bern")
    back = rd.RDCurve.from_csv(curve.to_csv())
    np.testing.assert_array_equal(back.distortions, curve.distortions)
    np.testing.assert_array_equal(back.rates, curve.rates)
    again = rd.RDCurve.from_json(curve.to_json())
    np.testing.assert_array_equal(again.slopes, curve.slopes)


def test_inversion_clamps_and_rejects():
    curve = rd.rd_curve(FiniteJoint.from_pmf([[0.5, 0.5]]), HAMMING)
    inv = rd.invert_curve(curve, 50.0)
    assert inv.clamped
    assert inv.value == pytest.approx(curve.distortions[-1])
    with pytest.raises(UsageError):
        rd.invert_curve(curve, -1.0)
    with pytest.raises(UsageError):
        rd.ba_rd_point(FiniteJoint.from_pmf([[0.5, 0.5]]), HAMMING, -1.0)


def test_gaussian_drf_and_sup():
    assert rd.gaussian_drf(1.0, 1.0) == 0.25
    assert rd.gaussian_drf(0.5, 0.0) == 0.25
    spec = rd.SupDRFSpec(rd.GAUSSIAN_TAG, 2.0, sigma=0.5)
    assert rd.sup_drf(spec).value == pytest.approx(0.25 / 16)


def test_sup_over_finite_family_takes_the_worst_member():
    family = [FiniteJoint.from_pmf([[1 - p, p]]) for p in (0.1, 0.5, 0.3)]
    out = rd.sup_drf(rd.SupDRFSpec(family, 0.2), HAMMING)
    assert out.argmax == 1
    assert out.value == pytest.approx(max(out.per_member))
