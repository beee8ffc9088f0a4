"""Scheme descriptions: pattern expansion, assembly, elementary weights."""

import json
from fractions import Fraction

import pytest

from srkweak import rvmodel as R
from srkweak import tableau as TB
from srkweak import trees as T
from srkweak.exact import HalfPowerPoly as HP


@pytest.fixture(scope="module")
def ri():
    return TB.load_scheme("ri1wm")


@pytest.fixture(scope="module")
def ri2(ri):
    return TB.instantiate(ri, 2)


def test_builtin_names():
    assert set(TB.builtin_scheme_names()) == {"euler", "ri1wm", "rs1wm"}


def test_load_unknown_scheme():
    with pytest.raises(TB.TableauError):
        TB.load_scheme("definitely-not-a-scheme")


def test_round_trip_is_lossless(tmp_path, ri):
    path = tmp_path / "copy.json"
    TB.save_scheme(ri, path)
    again = TB.load_scheme(path)
    assert again.spec == ri.spec
    assert json.loads(path.read_text()) == ri.spec


def test_weights_are_derived_not_stored(ri2):
    # stage-time weights come from row sums of the drift couplings
    assert ri2.c[TB.DRIFT_SLOT] == (Fraction(0), Fraction(2, 3), Fraction(2, 3))
    assert ri2.c[(1, (1,))] == (Fraction(0), Fraction(1), Fraction(1))
    # slots without drift coupling have zero weights
    assert ri2.c[(1, (2,))] == (Fraction(0), Fraction(0), Fraction(0))


def test_pattern_rules_zero_off_pattern_slots(ri2):
    # couplings only reach the slot whose component matches the rule
    assert ((1, (2,)), (2, (2,))) in ri2.Z
    assert ((1, (2,)), (1, (1,))) not in ri2.Z
    assert ((1, (1,)), (2, (2,))) not in ri2.Z


def test_rs1wm_cross_component_coupling():
    it = TB.instantiate(TB.load_scheme("rs1wm"), 2)
    pair = ((1, (1,)), (2, (2,)))
    assert pair in it.Z
    entry = it.Z[pair][2][0]  # stage 3 row, first column
    assert entry == Fraction(1, 4) * HP.symbol("I[2]")


def test_m1_collapses_index_distinctions(ri):
    it = TB.instantiate(ri, 1)
    assert [s for s in it.z if s != TB.DRIFT_SLOT] == [(1, (1,))]
    # the k != l weight rows are never instantiated at m = 1
    gamma_keys = {iota for (iota, _) in it.gamma}
    assert gamma_keys == {(1,), (1, 1)}


def test_conflicting_rules_detected(ri):
    spec = json.loads(ri.to_json())
    spec["coefficients"]["gamma"].append(
        {"iota": ["k"], "slot": {"w": "k", "nu": ["l"]}, "when": "k==l",
         "vector": ["0", "0", "0"]}
    )
    with pytest.raises(TB.TableauError):
        TB.instantiate(TB.Tableau(spec), 2)


def test_duplicate_identical_rule_tolerated(ri):
    spec = json.loads(ri.to_json())
    spec["coefficients"]["A"].append(dict(spec["coefficients"]["A"][0]))
    TB.instantiate(TB.Tableau(spec), 2)  # no conflict: same values


def test_explicitness_validation(ri):
    spec = json.loads(ri.to_json())
    spec["coefficients"]["A"][0]["matrix"][0][2] = "1"  # above the diagonal
    with pytest.raises(TB.TableauError):
        TB.instantiate(TB.Tableau(spec), 1)


def test_bad_noise_dimension(ri):
    with pytest.raises(TB.TableauError):
        TB.instantiate(ri, 0)


# ---------------------------------------------------------------------------
# Elementary weights
# ---------------------------------------------------------------------------


def conc(text):
    return T.canonical_concrete(T.parse_tree(text))


def test_phi_of_bare_root(ri2):
    assert TB.phi_s(conc("g"), ri2).expr == HP.number(1)


def test_phi_drift_branch_is_alpha_sum(ri2):
    # single drift child contracts to sum(alpha) * h = h
    assert TB.phi_s(conc("(t)"), ri2).expr == HP.h_power(2)


def test_phi_rejects_non_root_trees(ri2):
    with pytest.raises(ValueError):
        TB.phi_s(T.parse_tree("t"), ri2)
    with pytest.raises(ValueError):
        TB.phi_s(conc("(s_7)"), ri2)  # index out of range


def test_phi_child_order_irrelevant(ri2):
    a = TB.phi_s(T.parse_tree("(s_1,[s_2],s_2)"), ri2).expr
    b = TB.phi_s(T.parse_tree("(s_2,s_1,[s_2])"), ri2).expr
    assert a == b


def test_phi_zero_for_pure_deterministic_scheme():
    # B and stochastic weights all zero: any tree with a stochastic node dies
    spec = {
        "name": "det-rk",
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
    it = TB.instantiate(TB.Tableau(spec), 1)
    assert TB.phi_s(conc("(s_1)"), it).expr.is_zero()
    assert TB.phi_s(conc("(s_1,[s_1])"), it).expr.is_zero()
    assert TB.phi_s(conc("([t])"), it).expr == HP.h_power(4, Fraction(1, 2))


def test_phi_expectations_match_worked_values(ri2):
    cases = {
        "(s_1,s_1)": HP.h_power(2),
        "(s_1,s_2)": HP.zero(),
        "(s_1,s_1,s_1,s_1)": HP.h_power(4, 3),
        "(s_1,s_1,s_2,s_2)": HP.h_power(4),
        "(s_1,s_2,{s_2}_1)": HP.h_power(4, Fraction(1, 2)),
        "(s_1,[s_1])": HP.h_power(4, Fraction(1, 2)),
        "(s_1,s_1,{s_2}_2)": HP.zero(),
    }
    for text, expected in cases.items():
        value = R.expect(TB.phi_s(conc(text), ri2).expr, ri2.model)
        assert value == expected, text


def test_phi_expectation_brute_force_small_sample():
    it1 = TB.instantiate(TB.load_scheme("ri1wm"), 1)
    for text in ["(s_1,s_1)", "(s_1,{t}_1)", "({s_1}_1)", "(s_1,[s_1])", "([t])"]:
        w = TB.phi_s(conc(text), it1)
        assert R.expect(w.expr, it1.model) == R.expect_brute_force(w.expr, it1.model)


def test_scheme_model_sections_match_builtin_constants():
    # the rv sections shipped inside scheme files mirror the library models
    assert TB.load_scheme("ri1wm").spec["rv_model"] == R.RI1WM_MODEL
    assert TB.load_scheme("rs1wm").spec["rv_model"] == R.RS1WM_MODEL
    assert TB.load_scheme("euler").spec["rv_model"] == R.EULER_THREE_POINT_MODEL
