"""Elementary differentials and exact-solution expansions."""

import math
from itertools import product

import numpy as np
import pytest

from srkweak import expansion as E
from srkweak import problems as P
from srkweak import trees as T


def conc(text):
    return T.canonical_concrete(T.parse_tree(text))


@pytest.fixture(scope="module")
def gbm():
    return P.gbm()


def test_single_node_values(gbm):
    f = P.FUNCTIONALS["x"]
    x = gbm.x0
    drift_tree = T.parse_tree("t")
    assert E.elementary_differential(drift_tree, gbm, f, x) == pytest.approx(1.5 * 0.1)
    diff_tree = T.parse_tree("s_1")
    assert E.elementary_differential(diff_tree, gbm, f, x) == pytest.approx(0.1 * 0.1)


def test_reference_nested_tree(gbm):
    # second derivative of the square against (drift'(diffusion), diffusion)
    f2 = P.FUNCTIONALS["x2"]
    value = E.elementary_differential(conc("([s_1],s_1)"), gbm, f2, gbm.x0)
    mu, sigma, x0 = 1.5, 0.1, 0.1
    assert value == pytest.approx(2 * (mu * sigma * x0) * (sigma * x0))


def test_diffusion_free_trees_vanish_for_additive_problem():
    ou = P.ornstein_uhlenbeck()
    f2 = P.FUNCTIONALS["x2"]
    # diffusion is constant: any stochastic node with children dies
    assert E.elementary_differential(conc("({s_1}_1)"), ou, f2, ou.x0) == pytest.approx(0.0)


def test_zero_diffusion_kills_stochastic_trees(gbm):
    zero_diff = P.SdeProblem(
        "drift-only", 1, 1, "ito", np.array([0.1]),
        drift=gbm.drift, diffusion=lambda t, x, j: 0.0 * x,
        drift_deriv=gbm.drift_deriv,
        diffusion_deriv=lambda j, order, x, dirs: np.zeros(1),
    )
    f = P.FUNCTIONALS["x"]
    assert E.elementary_differential(conc("(s_1,s_1)"), zero_diff, f, zero_diff.x0) == 0.0


def test_index_renaming_invariance():
    # summed over all concrete assignments, equivalent trees agree
    lin = P.linear2d()
    f2 = P.FUNCTIONALS["x2"]
    variants = ["(s_j1,{s_j2}_j1)", "(s_j2,{s_j1}_j2)"]
    sums = []
    for text in variants:
        tree = T.canonical(T.parse_tree(text))
        ids = T.index_classes(tree)
        total = 0.0
        for values in product((1, 2), repeat=len(ids)):
            concrete = T.canonical_concrete(T._merge_indices(tree, dict(zip(ids, values))))
            total += E.elementary_differential(concrete, lin, f2, lin.x0)
        sums.append(total)
    assert sums[0] == pytest.approx(sums[1])


def test_truncated_expectation_low_orders(gbm):
    f = P.FUNCTIONALS["x"]
    assert E.truncated_expectation(gbm, f, gbm.x0, 0.3, 0) == pytest.approx(0.1)
    dt = 0.2
    assert E.truncated_expectation(gbm, f, gbm.x0, dt, 1) == pytest.approx(0.1 * (1 + 1.5 * dt))


def test_truncated_expectation_rejects_negative_dt(gbm):
    with pytest.raises(ValueError):
        E.truncated_expectation(gbm, P.FUNCTIONALS["x"], gbm.x0, -0.1, 1)


def test_missing_oracles_rejected(gbm):
    stripped = P.SdeProblem(
        "bare", 1, 1, "ito", np.array([0.1]), drift=gbm.drift, diffusion=gbm.diffusion
    )
    with pytest.raises(ValueError):
        E.truncated_expectation(stripped, P.FUNCTIONALS["x"], stripped.x0, 0.1, 1)


def test_error_slope_second_order(gbm):
    slope, rows = E.expansion_error_slope(
        gbm, P.FUNCTIONALS["x2"], 2, [2.0**-k for k in range(3, 8)]
    )
    assert abs(slope - 3.0) <= 0.2
    assert all(err > 0 for _, _, err in rows)


def test_error_slope_first_order(gbm):
    slope, _ = E.expansion_error_slope(
        gbm, P.FUNCTIONALS["x2"], 1, [2.0**-k for k in range(3, 8)]
    )
    assert abs(slope - 2.0) <= 0.2


def test_strat_family_matches_converted_ito_family():
    # stratonovich tree family with the original drift against the ito
    # family with the corrected drift rate: identical truncations
    sigma = 0.1
    gs = P.gbm(calculus="strat")
    gi = P.gbm(mu=1.5 + 0.5 * sigma**2, calculus="ito")
    for dt in (0.5, 0.25, 0.125):
        a = E.truncated_expectation(gs, P.FUNCTIONALS["x2"], gs.x0, dt, 2)
        b = E.truncated_expectation(gi, P.FUNCTIONALS["x2"], gi.x0, dt, 2)
        assert a == pytest.approx(b, rel=1e-13)


def test_strat_expansion_against_closed_form():
    gs = P.gbm(calculus="strat")
    slope, _ = E.expansion_error_slope(
        gs, P.FUNCTIONALS["x2"], 2, [2.0**-k for k in range(3, 8)]
    )
    assert abs(slope - 3.0) <= 0.2


def test_oracle_consistency_with_finite_differences(gbm):
    # multilinear forms agree with nested central differences
    rng = np.random.default_rng(3)
    x = np.array([0.7])
    step = 1e-5
    for order in (1, 2):
        dirs = tuple(rng.normal(size=1) for _ in range(order))
        exact = P.FUNCTIONALS["x2"].deriv(order, x, dirs)

        def fd(order, point, dirs):
            if order == 0:
                return float(point[0] ** 2)
            plus = fd(order - 1, point + step * dirs[-1], dirs[:-1])
            minus = fd(order - 1, point - step * dirs[-1], dirs[:-1])
            return (plus - minus) / (2 * step)

        assert fd(order, x, dirs) == pytest.approx(exact, rel=1e-4, abs=1e-6)
    # drift form for the linear problem
    d = tuple(rng.normal(size=1) for _ in range(1))
    fd1 = (gbm.drift(0.0, x + step * d[0]) - gbm.drift(0.0, x - step * d[0])) / (2 * step)
    assert gbm.drift_deriv(1, x, d)[0] == pytest.approx(float(fd1[0]), rel=1e-6)
