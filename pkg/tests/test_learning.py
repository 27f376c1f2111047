import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from ratelearn import CapExceeded, UsageError
from ratelearn import learning as L
from ratelearn.analysis import calibrate_c_prime, ulln_deviations
from ratelearn.losses import LossFunction, eta_concavity_violation
from ratelearn.probability import DiscretizationSpec, PiecewiseLinear, RegressionModel

SQ = LossFunction("squared")
ABS = LossFunction("absolute")


# -- losses --------------------------------------------------------------------


def test_eta_values():
    assert L.eval_eta(ABS, 0.3) == pytest.approx(0.3)
    assert L.eval_eta(LossFunction("ppower", 2.0), 0.25) == pytest.approx(1.0)
    for kind in ("squared", "absolute", "hamming"):
        assert L.eval_eta(LossFunction(kind), 0.0) == 0.0
    with pytest.raises(UsageError):
        L.eval_eta(ABS, -0.1)


@pytest.mark.parametrize("loss", [SQ, ABS, LossFunction("hamming"), LossFunction("ppower", 3.0)])
def test_eta_is_concave(loss):
    assert eta_concavity_violation(loss) <= 1e-12


def test_modulus_soundness():
    grid = L.HypothesisGrid.lattice((0, 1), 4, 4)
    gen = np.random.default_rng(1)
    assert L.modulus_soundness_check(ABS, grid, 10_000, gen) <= 1e-12
    assert L.modulus_soundness_check(LossFunction("hamming"), grid, 10_000, gen) <= 1e-12
    assert L.modulus_soundness_check(LossFunction("ppower", 2.0), grid, 100_000, gen) <= 1e-12
    corrupted = LossFunction("absolute", eta_scale=0.5)
    assert L.modulus_soundness_check(corrupted, grid, 10_000, gen) > 0


# -- grids -------------------------------------------------------------------


def test_lattice_enumeration_is_lexicographic_and_counted():
    grid = L.HypothesisGrid.lattice((0, 1), 3, 2, max_jump=1)
    rows = [tuple(r) for r in grid.index]
    assert rows == sorted(rows)
    brute = [t for t in np.ndindex(3, 3, 3) if abs(t[0] - t[1]) <= 1 and abs(t[1] - t[2]) <= 1]
    assert rows == brute
    assert L.count_sequences(3, 3, 1) == len(brute)


def test_lattice_cap():
    with pytest.raises(CapExceeded) as err:
        L.HypothesisGrid.lattice((0, 1), 10, 9, cap=1000)
    assert err.value.cap == 1000


def test_grid_json_round_trip():
    grid = L.HypothesisGrid.lattice((0, 2), 3, 3, lipschitz=1.0)
    back = L.HypothesisGrid.from_json(grid.to_json())
    np.testing.assert_array_equal(back.values, grid.values)
    np.testing.assert_array_equal(back.edges, grid.edges)


def test_grid_values_must_be_in_unit_interval():
    with pytest.raises(UsageError):
        L.HypothesisGrid.explicit((0, 1), [[0.5, 1.5]])


# -- risks -------------------------------------------------------------------


def test_empirical_risk_examples():
    grid = L.HypothesisGrid.explicit((0, 1), [[0.0], [1.0]])
    assert L.empirical_risk(grid.member(0), [0.3], [0.5], SQ) == pytest.approx(0.25)
    x = np.array([0.1, 0.4, 0.8])
    f = PiecewiseLinear.from_knots([0, 1], [0, 1])
    assert L.empirical_risk(f, x, x, SQ) == 0.0
    with pytest.raises(UsageError):
        L.empirical_risk(f, [], [], SQ)


def test_empirical_risk_against_compensated_sum(rng):
    x = rng.uniform(0, 1, 5000)
    y = rng.normal(0.5, 1.0, 5000)
    f = PiecewiseLinear.from_steps(0.0, 1.0, [0.2, 0.7, 0.4])
    ref = math.fsum((float(f(a)) - b) ** 2 for a, b in zip(x, y)) / x.size
    assert L.empirical_risk(f, x, y, SQ) == pytest.approx(ref, rel=1e-13)


def test_erm_examples():
    grid = L.HypothesisGrid.explicit((0, 1), [[0.0], [1.0]])
    assert L.erm(grid, [0.2, 0.7], [1.0, 1.0], SQ).index == 1
    tied = L.HypothesisGrid.explicit((0, 1), [[0.0], [1.0]])
    assert L.erm(tied, [0.5], [0.5], SQ).index == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_erm_risk_is_minimal(seed):
    gen = np.random.default_rng(seed)
    grid = L.HypothesisGrid.explicit((0, 1), gen.uniform(0, 1, (50, 3)))
    x, y = gen.uniform(0, 1, 40), gen.uniform(0, 1, 40)
    res = L.erm(grid, x, y, SQ)
    direct = [L.empirical_risk(grid.member(i), x, y, SQ) for i in range(len(grid))]
    assert res.risk <= min(direct) + 1e-15


def test_true_risk_examples():
    f0 = PiecewiseLinear.constant(0.0, 1.0, 0.0)
    model = RegressionModel(f0, 0.5)
    assert L.true_risk_regression(PiecewiseLinear.constant(0.0, 1.0, 0.5), model) == pytest.approx(0.5)
    assert L.true_risk_regression(f0, model) == pytest.approx(0.25)
    with pytest.raises(UsageError):
        L.true_risk_regression(f0, model, ABS)


def test_true_risk_on_other_domain():
    model = RegressionModel(PiecewiseLinear.constant(-1.0, 3.0, 0.0), 0.5, (-1.0, 3.0))
    g = PiecewiseLinear.constant(-1.0, 3.0, 0.5)
    assert L.true_risk_regression(g, model) == pytest.approx(0.5)


def test_true_risk_matches_quadrature(rng):
    for _ in range(5):
        f0 = PiecewiseLinear.from_knots(np.r_[0, np.sort(rng.uniform(0, 1, 3)), 1], rng.uniform(0, 1, 5))
        g = PiecewiseLinear.from_steps(0.0, 1.0, rng.uniform(0, 1, 4))
        model = RegressionModel(f0, 0.3)
        pts = sorted(set(np.r_[f0.breaks, g.breaks]))[1:-1]
        ref = quad(lambda t: (f0(t) - g(t)) ** 2, 0, 1, points=pts, epsabs=1e-14, epsrel=1e-13)[0] + 0.09
        assert L.true_risk_regression(g, model) == pytest.approx(ref, abs=1e-9)


def test_vectorized_true_risks_agree(rng):
    grid = L.HypothesisGrid.lattice((0, 1), 4, 3)
    f0 = PiecewiseLinear.from_knots([0, 0.5, 1], [0.1, 0.8, 0.3])
    model = RegressionModel(f0, 0.4)
    fast = L.true_risks_regression(grid, model)
    for i in rng.integers(0, len(grid), 20):
        assert fast[i] == pytest.approx(L.true_risk_regression(grid.member(int(i)), model), abs=1e-14)
    assert fast.min() >= 0.16


def test_risk_decomposition_zero_only_at_regression_function():
    grid = L.HypothesisGrid.lattice((0, 1), 3, 2)
    f0_idx = 7
    model = RegressionModel(grid.member(f0_idx), 0.5)
    excess = L.true_risks_regression(grid, model) - 0.25
    assert excess[f0_idx] == pytest.approx(0.0, abs=1e-15)
    assert np.all(np.delete(excess, f0_idx) > 1e-3)


def test_ulln_deviation_shrinks():
    grid = L.HypothesisGrid.lattice((0, 1), 4, 4)
    model = RegressionModel(PiecewiseLinear.from_steps(0.0, 1.0, [0.25, 0.5, 0.75, 0.5]), 0.5)
    dev = ulln_deviations(grid, model, SQ, [100, 1000, 10_000], 20, seed=11)
    means = dev.mean(axis=1)
    assert means[0] > means[1] > means[2]
    assert np.mean(dev[2] < 0.05) >= 0.95


def test_c_prime_calibration_recovers_planted_constant():
    ns = np.array([100, 400, 1600])
    assert calibrate_c_prime(ns, 0.7 / np.sqrt(ns)) == pytest.approx(1.4)


def test_moment_condition_bounded(rng):
    grid = L.HypothesisGrid.lattice((0, 1), 2, 2)
    sigma = 0.5
    model = RegressionModel(PiecewiseLinear.constant(0.0, 1.0, 0.5), sigma)
    moments = L.moment_condition(grid, model, SQ, 20_000, rng)
    # E (f + Z)^4 <= 1 + 6 sigma^2 + 3 sigma^4 for f in [0, 1]
    assert np.all(moments <= 1.1 * (1 + 6 * sigma**2 + 3 * sigma**4))


# -- covering ---------------------------------------------------------------


def test_constant_class_covering():
    cov = L.covering_number(0.0, 0.25)
    assert cov.count == 2
    np.testing.assert_allclose(cov.grid.levels, [0.25, 0.75])
    assert L.covering_number(0.0, 0.05).count == 10


def lipschitz_test_functions(gen, count=300):
    x = np.linspace(0, 1, 2001)
    fs = []
    for c in np.linspace(0, 1, 11):
        for a in np.linspace(0, 1, 11):
            fs.append(np.clip(a + np.abs(x - c), 0, 1))
            fs.append(np.clip(a - np.abs(x - c), 0, 1))
    for _ in range(count):
        steps = gen.uniform(-1, 1, x.size - 1) * np.diff(x)
        walk = np.concatenate([[gen.uniform(0, 1)], steps]).cumsum()
        fs.append(np.clip(walk, 0, 1))
    return x, fs


@pytest.mark.parametrize("eps", [0.5, 0.3, 0.2])
def test_lipschitz_net_covers_test_functions(eps):
    cov = L.covering_number(1.0, eps)
    x, fs = lipschitz_test_functions(np.random.default_rng(2))
    net = cov.grid.values[:, cov.grid.cell_of(x)]
    for f in fs:
        assert np.min(np.max(np.abs(net - f[None, :]), axis=1)) <= eps + 1e-12


def test_covering_monotone_and_grows_like_inverse_epsilon():
    eps = np.geomspace(0.2, 0.02, 8)
    logs = [L.covering_number(1.0, e, materialize=False).log2_count for e in eps]
    counts = [L.covering_number(1.0, e, materialize=False).count for e in eps]
    assert all(b >= a for a, b in zip(counts, counts[1:]))
    slope = np.polyfit(np.log(1 / eps), np.log(logs), 1)[0]
    assert 0.8 <= slope <= 1.2


def test_covering_cap_and_validation():
    with pytest.raises(CapExceeded):
        L.covering_number(1.0, 0.01, cap=10_000)
    with pytest.raises(UsageError):
        L.covering_number(1.0, 0.0)


def test_family_net_radius_and_spot_checks():
    cov = L.covering_number(0.0, 0.1)
    cert = L.family_net_from_function_net(cov.grid, 0.5, pairs=5, rng=3,
                                          spec=DiscretizationSpec(x_bins=4, y_grid=2048, y_span=8.0))
    assert cert.dv_radius == pytest.approx(0.2)
    assert cert.worst_slack >= -1e-6
    same = [c for c in cert.checks if c[0] == c[1]]
    for c in same:
        assert c[2] == 0.0
