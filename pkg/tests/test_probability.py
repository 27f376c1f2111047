import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from ratelearn import UsageError
from ratelearn.probability import (
    DiscretizationSpec,
    FiniteJoint,
    PiecewiseLinear,
    RegressionModel,
    attach_channel,
    discretize_regression,
    entropy_bits,
    kl_and_variational,
    mutual_information_bits,
)


def h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


@pytest.fixture
def symmetric():
    return FiniteJoint.from_pmf([[0.4, 0.1], [0.1, 0.4]])


def test_conditional_entropy_of_binary_symmetric_joint(symmetric):
    assert entropy_bits(symmetric, "Y|X") == pytest.approx(h2(0.2), abs=1e-12)
    assert entropy_bits(symmetric, "XY") == pytest.approx(1 + h2(0.2), abs=1e-12)
    assert mutual_information_bits(symmetric, "X", "Y") == pytest.approx(1 - h2(0.2), abs=1e-12)


def test_copy_channel_conveys_all_remaining_uncertainty(symmetric):
    ext = attach_channel(symmetric, np.eye(2))
    assert mutual_information_bits(ext, "Y", "Yhat", given="X") == pytest.approx(h2(0.2), abs=1e-12)
    assert entropy_bits(ext, "Y|X,Yhat") == pytest.approx(0.0, abs=1e-12)


def test_independent_channel_conveys_nothing(symmetric):
    ext = attach_channel(symmetric, [[0.3, 0.7], [0.3, 0.7]])
    assert mutual_information_bits(ext, "Y", "Yhat", given="X") == pytest.approx(0.0, abs=1e-12)


def test_construction_rejects_bad_pmfs():
    with pytest.raises(UsageError):
        FiniteJoint.from_pmf([[0.5, 0.6]])
    with pytest.raises(UsageError):
        FiniteJoint.from_pmf([[1.2, -0.2]])
    with pytest.raises(UsageError):
        FiniteJoint((0,), [0.0, 1.0], [[1.0]])


def test_json_round_trip(symmetric):
    back = FiniteJoint.from_json(symmetric.to_json())
    np.testing.assert_array_equal(back.pmf, symmetric.pmf)
    np.testing.assert_array_equal(back.y_alphabet, symmetric.y_alphabet)


def test_kl_and_variational_hand_values():
    p, q = [0.5, 0.5], [0.25, 0.75]
    div = kl_and_variational(p, q)
    assert div.kl_nats == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3), abs=1e-15)
    assert div.dv == pytest.approx(0.5, abs=1e-15)
    assert kl_and_variational(p, p).kl_nats == 0.0
    assert math.isinf(kl_and_variational([0.5, 0.5], [1.0, 0.0]).kl_nats)
    with pytest.raises(UsageError):
        kl_and_variational([1.0], [0.5, 0.5])


joints = st.integers(2, 4).flatmap(
    lambda k: st.lists(st.floats(0.01, 1.0), min_size=k * k, max_size=k * k).map(
        lambda w: np.array(w).reshape(k, k) / np.sum(w)
    )
)


@settings(max_examples=60, deadline=None)
@given(joints)
def test_information_identities(pmf):
    pmf = pmf / pmf.sum()
    j = FiniteJoint.from_pmf(pmf)
    hx, hy, hxy = entropy_bits(j, "X"), entropy_bits(j, "Y"), entropy_bits(j, "XY")
    mi = mutual_information_bits(j, "X", "Y")
    assert hxy == pytest.approx(hx + entropy_bits(j, "Y|X"), abs=1e-10)
    assert 0.0 <= mi <= min(hx, hy) + 1e-10
    assert mi == pytest.approx(hx + hy - hxy, abs=1e-10)


def test_sq_distance_matches_quadrature():
    gen = np.random.default_rng(3)
    for _ in range(10):
        f = PiecewiseLinear.from_knots(np.sort(np.r_[0, gen.uniform(0, 1, 4), 1]), gen.uniform(0, 1, 6))
        g = PiecewiseLinear.from_steps(0.0, 1.0, gen.uniform(0, 1, 5))
        pts = sorted(set(np.r_[f.breaks, g.breaks]))
        ref, _ = quad(lambda t: (f(t) - g(t)) ** 2, 0, 1, points=pts[1:-1], epsabs=1e-14, epsrel=1e-13, limit=200)
        assert f.sq_distance(g) == pytest.approx(ref, abs=1e-10)


def test_cell_moments_match_quadrature():
    f = PiecewiseLinear.from_knots([0, 0.3, 1], [0.2, 0.9, 0.1])
    edges = np.linspace(0, 1, 5)
    w, m1, m2 = f.cell_moments(edges)
    for k in range(4):
        a, b = edges[k], edges[k + 1]
        assert w[k] == pytest.approx(b - a)
        assert m1[k] == pytest.approx(quad(f, a, b, points=[0.3])[0], abs=1e-12)
        assert m2[k] == pytest.approx(quad(lambda t: f(t) ** 2, a, b, points=[0.3])[0], abs=1e-12)


def test_piecewise_json_round_trip():
    f = PiecewiseLinear.from_steps(0.0, 1.0, [0.1, 0.5, 0.9])
    g = PiecewiseLinear.from_json(f.to_json())
    x = np.linspace(0, 1, 101)
    np.testing.assert_array_equal(f(x), g(x))


def test_regression_model_validates_inputs():
    with pytest.raises(UsageError):
        RegressionModel(PiecewiseLinear.constant(0.0, 1.0, 1.5), 0.5)
    with pytest.raises(UsageError):
        RegressionModel(PiecewiseLinear.constant(0.0, 1.0, 0.5), 0.0)


def test_discretized_gaussian_moments():
    model = RegressionModel(PiecewiseLinear.constant(0.0, 1.0, 0.5), 0.5)
    j = discretize_regression(model, DiscretizationSpec(y_grid=2048))
    mean = float(j.py @ j.y_alphabet)
    var = float(j.py @ (j.y_alphabet - mean) ** 2)
    assert mean == pytest.approx(0.5, abs=1e-9)
    # midpoint rule adds h^2/12 to the variance
    h = j.y_alphabet[1] - j.y_alphabet[0]
    assert var == pytest.approx(0.25 + h * h / 12, rel=1e-5)


def test_discretization_refuses_visible_truncation():
    model = RegressionModel(PiecewiseLinear.constant(0.0, 1.0, 0.5), 0.5)
    with pytest.raises(UsageError):
        discretize_regression(model, DiscretizationSpec(y_span=2.0))
