import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modelgen import random_source
from pepafluid import PepaSyntaxError, parse_model, pretty_print, validate_model
from pepafluid.errors import ModelError
from pepafluid.rates import RateValue, rate_min
from pepafluid.syntax import Cooperation, Hiding, analyze_structure, leaves


def codes(src):
    return {i.code for i in validate_model(parse_model(src)).issues}


def test_model1_ast(model1):
    st_ = analyze_structure(model1)
    assert len(st_.types) == 2
    assert sum(len(t.derivatives) for t in st_.types) == 4
    assert isinstance(model1.system, Cooperation)
    assert set(model1.system.actions) == {"task1"}
    assert model1.init_counts() == {"User1": 1, "Provider1": 1}


def test_model2_ast(model2):
    assert set(model2.system.actions) == {"action1", "action2"}
    st_ = analyze_structure(model2)
    assert sum(len(t.derivatives) for t in st_.types) == 6
    assert model2.init_counts() == {"X1": 1, "X2": 1, "Y1": 5, "Y4": 5}


@pytest.mark.parametrize("src,msg", [
    ("A = (a, 1.0).A;\nA[1]", "self-loop"),
    ("A = (a, 1.0).B;\nA[1]", "unresolved constant"),
    ("A = (a, 0).B; B = (b, 1).A;\nA[1]", "non-positive rate"),
    ("A = (a, 1).B; B = (b, 1).A;\nA[1] <a B[1]", "expected"),
    ("A = (a, 1).B; B = (b, 1).A;\nA[0]", "positive integer"),
])
def test_parse_errors(src, msg):
    with pytest.raises((PepaSyntaxError, ModelError), match=msg):
        parse_model(src)


def test_syntax_error_position():
    with pytest.raises(PepaSyntaxError) as ei:
        parse_model("A = (a, 1).B;\nB = (b, 1).A;\nC = (c, ).A;\nA[1]")
    assert (ei.value.line, ei.value.col) == (3, 9)
    assert "number" in ei.value.expected


def test_validation_models_clean(model1, model2, nonsync):
    for m in (model1, model2, nonsync):
        assert validate_model(m).issues == ()


@pytest.mark.parametrize("src,code", [
    ("A = (a, 1).B; B = (b, 1).A;\nA[1] <c> A[2]", "absent-cooperation"),
    ("A = (a, 1).B; B = (b, 1).A; C = (c, 1).A;\nA[1]", "dead-derivative"),
    ("A = (a, infty).B; B = (b, 1).A;\nA[1]", "passive-individual"),
    ("A = (a, infty).B; B = (b, 1).A; C = (a, infty).D; D = (d, 1).C;\nA[1] <a> C[1]",
     "all-passive"),
    ("A = (a, infty).B + (a, 1).B; B = (b, 1).A; C = (a, 1).D; D = (d, 1).C;\nA[1] <a> C[1]",
     "mixed-passive"),
    ("A = (tau, 1).B; B = (b, 1).A; C = (tau, 1).D; D = (d, 1).C;\nA[1] <tau> C[1]",
     "tau-cooperation"),
])
def test_validation_codes(src, code):
    assert code in codes(src)


def test_hiding_renames_to_tau():
    m = parse_model("A = (a, 1).B; B = (b, 2).A;\nA[3]/{a}")
    assert isinstance(m.system, Hiding)
    eff = analyze_structure(m).prefixes
    assert eff["A"][0][0] == "tau"


def test_pretty_print_roundtrip_fixtures(model1, model2, nonsync):
    for m in (model1, model2, nonsync):
        assert parse_model(pretty_print(m)) == m


def test_pretty_print_passive():
    m = parse_model("A = (a, 2*infty).B; B = (b, 1).A; C = (a, 1).D; D = (d, 1).C;\n"
                    "A[1] <a> C[1]")
    assert "2*infty" in pretty_print(m)
    assert parse_model(pretty_print(m)) == m


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_roundtrip_generated(seed):
    m = parse_model(random_source(np.random.default_rng(seed)))
    assert parse_model(pretty_print(m)) == m


def test_identifiers_resolve_on_generated():
    rng = np.random.default_rng(7)
    for _ in range(50):
        m = parse_model(random_source(rng))
        names = {d.name for d in m.definitions}
        assert all(s.target in names for d in m.definitions for s in d.summands)
        assert all(l.name in names for l in leaves(m.system))


def test_rate_arithmetic_grid():
    fin = [RateValue.finite(v) for v in (0.5, 1.0, 3.0)]
    pas = [RateValue.infty(w) for w in (1, 2, 5)]
    for f, p in itertools.product(fin, pas):
        assert f < p and not p < f
    for p, q in itertools.product(pas, pas):
        assert (p < q) == (p.value < q.value)
        assert (p + q) == RateValue.infty(p.value + q.value)
        assert p.ratio(q) == pytest.approx(p.value / q.value)
    for p in pas:
        assert p.scale(0) == 0.0
        with pytest.raises(ValueError):
            p + fin[0]
        # min{A infty, r B} = r B when A > 0, 0 when A = 0
        assert rate_min([p.scale(2.0), fin[1].scale(3.0)]) == RateValue.finite(3.0)
        assert rate_min([p.scale(0.0), fin[1].scale(3.0)]) == 0.0
    with pytest.raises(ValueError):
        RateValue.finite(0)


def test_with_params(model1):
    m = model1.with_params({"a": 2.0})
    assert m.param_values["a"] == 2.0
    with pytest.raises(ModelError):
        model1.with_params({"zz": 1.0})
    with pytest.raises(ModelError):
        model1.with_params({"a": -1.0})
