"""Order-condition generation, verification, and the concrete oracle."""

from fractions import Fraction

import pytest

from srkweak import conditions as C
from srkweak import tableau as TB
from srkweak import trees as T
from srkweak.exact import HalfPowerPoly as HP


@pytest.fixture(scope="module")
def conds_ito_2_2():
    return C.generate_conditions("ito", 2, 2)


def _find(conds, tree_text, n_blocks=None):
    key = T.canonical(T.parse_tree(tree_text))
    out = [c for c in conds if c.correlated_tree == key]
    if n_blocks is not None:
        out = [c for c in out if c.pattern.n_blocks() == n_blocks]
    return out


def test_trivial_root_condition(conds_ito_2_2):
    (cond,) = _find(conds_ito_2_2, "g")
    assert cond.lhs == 1 and cond.rhs_factor == 1
    assert cond.target() == HP.number(1)


def test_worked_example_quadruple(conds_ito_2_2):
    # four stochastic leaves, paired two against two: target h^2
    paired = _find(conds_ito_2_2, "(s_j1,s_j1,s_j2,s_j2)")
    assert len(paired) == 3  # three pairings of four distinct indices
    for cond in paired:
        assert cond.alpha_star == 1 and cond.beta == 3 and cond.alpha_delta == 1
        assert cond.target() == HP.h_power(4)
    (merged,) = _find(conds_ito_2_2, "(s_j1,s_j1,s_j1,s_j1)")
    assert merged.beta == 1
    assert merged.target() == HP.h_power(4, 3)


def test_worked_example_drift_pair():
    conds = C.generate_conditions("ito", 2, 2)
    (cond,) = _find(conds, "([s_j1],s_j1)")
    assert cond.alpha_star == 2 and cond.gamma_density == 2 and cond.alpha_delta == 3
    assert cond.target() == HP.h_power(4, Fraction(1, 2))
    # distinct indices: unreachable class, homogeneous condition
    (homog,) = _find(conds, "([s_j1],s_j2)")
    assert homog.homogeneous and cond.lhs != homog.lhs
    assert homog.target().is_zero()


def test_worked_example_coupled_pair(conds_ito_2_2):
    # two distinct cross pairings merge onto the same correlated class,
    # which is exactly why its correlation count is two
    crosses = _find(conds_ito_2_2, "(s_j1,s_j2,{s_j2}_j1)")
    assert len(crosses) == 2
    for cross in crosses:
        assert cross.alpha_star == 4 and cross.beta == 2 and cross.alpha_delta == 6
        assert cross.gamma_density == 2
        assert cross.target() == HP.h_power(4, Fraction(1, 2))
    (merged,) = _find(conds_ito_2_2, "(s_j1,s_j1,{s_j1}_j1)")
    assert merged.alpha_star == 4  # sum over the coinciding classes (ito)
    strat = C.generate_conditions("strat", 2, 2)
    (merged_s,) = _find(strat, "(s_j1,s_j1,{s_j1}_j1)")
    assert merged_s.alpha_star == 6


def test_homogeneous_conditions_are_first_class(conds_ito_2_2):
    homog = [c for c in conds_ito_2_2 if c.homogeneous]
    assert homog, "expected unreachable-class conditions"
    assert all(c.lhs == 0 and c.beta == 1 for c in homog)
    # half-integer orders are always homogeneous
    assert all(c.homogeneous for c in conds_ito_2_2 if c.rho_hv % 2 == 1)


def test_pattern_block_cap_by_noise_dimension():
    m1 = C.generate_conditions("ito", 2, 1)
    assert all(c.pattern.n_blocks() <= 1 for c in m1)
    m2 = C.generate_conditions("ito", 2, 2)
    assert any(c.pattern.n_blocks() == 2 for c in m2)
    assert all(c.pattern.n_blocks() <= 2 for c in m2)


def test_m1_beta_always_one():
    assert all(c.beta == 1 for c in C.generate_conditions("ito", 2, 1))
    assert all(c.beta == 1 for c in C.generate_conditions("strat", 2, 1))


def test_both_sides_share_h_power(conds_ito_2_2):
    for c in conds_ito_2_2:
        if not c.homogeneous:
            items = list(c.target().monomial_items())
            assert len(items) == 1
            (halves, mono), _ = items[0]
            assert mono == () and halves == c.rho_hv


def test_condition_set_grows_with_order():
    small = C.generate_conditions("ito", 1, 2)
    large = C.generate_conditions("ito", 2, 2)
    key = lambda c: (c.delta_tree, c.pattern.blocks)  # noqa: E731
    small_map = {key(c): (c.lhs, c.rhs_factor) for c in small}
    large_map = {key(c): (c.lhs, c.rhs_factor) for c in large}
    for k, v in small_map.items():
        assert large_map[k] == v


def test_generate_rejects_bad_inputs():
    with pytest.raises(ValueError):
        C.generate_conditions("ito", 0, 1)
    with pytest.raises(ValueError):
        C.generate_conditions("ito", 1, 0)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def test_verify_order2_schemes():
    ri = TB.load_scheme("ri1wm")
    for m in (1, 2):
        report = C.verify_tableau(ri, 2, m)
        assert report.passed and report.max_order_passed() == 2
        assert all(r.residual.is_zero() for r in report.records)
    rs = TB.load_scheme("rs1wm")
    report = C.verify_tableau(rs, 2, 1)
    assert report.passed
    assert all(r.residual.is_zero() for r in report.records)


def test_verify_euler_order_boundary():
    eu = TB.load_scheme("euler")
    assert C.verify_tableau(eu, 1, 1).passed
    report = C.verify_tableau(eu, 2, 1)
    assert not report.passed
    assert report.max_order_passed() == 1
    # golden value recorded from the first run: the three-stage drift
    # couplings are missing, so the nested-drift tree fails by -h^2/2
    first = report.first_failure()
    assert T.format_tree(first.condition.correlated_tree) == "([t])"
    assert first.residual == HP.h_power(4, Fraction(-1, 2))
    assert len(report.violations()) == 7


def test_verify_respects_requested_calculus():
    # the stratonovich condition set is strictly harder for an ito-order-2
    # scheme: the chain-pair tree acquires a nonzero target
    ri = TB.load_scheme("ri1wm")
    report = C.verify_tableau(ri, 2, 1, calculus="strat")
    assert not report.passed


def test_report_csv_deterministic():
    report = C.verify_tableau(TB.load_scheme("euler"), 2, 1)
    assert report.to_csv() == C.verify_tableau(TB.load_scheme("euler"), 2, 1).to_csv()
    lines = report.to_csv().splitlines()
    assert lines[0].startswith("rho,tree,pattern")
    assert len(lines) == 1 + len(report.records)


def test_mean_zero_rows_present():
    report = C.verify_tableau(TB.load_scheme("ri1wm"), 1, 2)
    assert len(report.mean_zero_rows) > 0
    assert all(ok for _, ok in report.mean_zero_rows)


# ---------------------------------------------------------------------------
# Concrete oracle
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "scheme,p,m,expected",
    [
        ("ri1wm", 2, 1, True),
        ("ri1wm", 2, 2, True),
        ("rs1wm", 2, 1, True),
        ("euler", 1, 1, True),
        ("euler", 1, 2, True),
        ("euler", 2, 1, False),
    ],
)
def test_oracle_agrees_with_pattern_mode(scheme, p, m, expected):
    tab = TB.load_scheme(scheme)
    pattern = C.verify_tableau(tab, p, m)
    concrete = C.concrete_coefficient_check(tab, p, m)
    assert pattern.conditions_ok == concrete.passed == expected


def test_oracle_odd_stochastic_trees_have_zero_exact_side():
    report = C.concrete_coefficient_check(TB.load_scheme("ri1wm"), 2, 2)
    for rec in report.records:
        if T.diff_count(rec.tree) % 2 == 1:
            assert rec.exact_coeff == 0


def test_oracle_reduces_to_deterministic_rk_conditions():
    # all stochastic couplings zero: the oracle should reproduce classical
    # second-order conditions (sum alpha = 1, sum alpha c = 1/2) and nothing
    # about them fails for a scheme satisfying exactly those.
    spec = {
        "name": "heun",
        "calculus": "ito",
        "stages": 2,
        "multi_index_patterns": [["k"]],
        "alpha": ["1/2", "1/2"],
        "coefficients": {
            "A": [{"row": "drift", "matrix": [["0", "0"], ["1", "0"]]}],
            "B": [],
            "gamma": [],
        },
        "rv_model": {
            "primitives": [{"name": "I", "indices": ["k"], "support": [
                {"coeff": "1", "h_halves": 1, "prob": "1/2"},
                {"coeff": "-1", "h_halves": 1, "prob": "1/2"}]}],
            "theta": [{"nu": ["k"], "expr": "I[k]"}],
        },
    }
    report = C.concrete_coefficient_check(TB.Tableau(spec), 2, 1)
    failing = {T.format_tree(r.tree, concrete=True) for r in report.violations()}
    # drift-only trees pass (Heun is classically second order); every tree
    # with stochastic nodes and nonzero exact side fails (no noise support)
    assert "([t])" not in failing and "(t,t)" not in failing and "(t)" not in failing
    assert "(s_1,s_1)" in failing
