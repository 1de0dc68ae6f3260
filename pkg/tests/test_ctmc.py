import numpy as np
import pytest
import scipy.sparse as sp

from pepafluid import bundled_model, numeric_model, parse_model
from pepafluid.ctmc import (CtmcModel, expected_state, explore_state_space, is_irreducible,
                            poisson_window, scale_family, singleton_ctmc, steady_state,
                            transient_distribution)
from pepafluid.errors import ModelError, ReducibleChainError, StateSpaceCapError
from pepafluid.numeric import transition_rate

S1 = {(1, 0, 1, 0), (0, 1, 0, 1), (1, 0, 0, 1), (0, 1, 1, 0)}
S2 = {(2, 0, 2, 0), (1, 1, 1, 1), (1, 1, 2, 0), (1, 1, 0, 2), (0, 2, 1, 1), (2, 0, 1, 1),
      (0, 2, 0, 2), (0, 2, 2, 0), (2, 0, 0, 2)}


def two_state(a, b):
    return explore_state_space(parse_model(f"A = (u, {a}).B; B = (v, {b}).A;\nA[1]"))


def states(c):
    return {tuple(int(v) for v in s) for s in c.states}


def test_model1_state_spaces(model1):
    assert states(explore_state_space(model1, [1, 0, 1, 0])) == S1
    assert states(explore_state_space(model1, [2, 0, 2, 0])) == S2
    c = explore_state_space(model1, [2, 0, 2, 0])
    assert c.n == 9 and len(states(c)) == 9


@pytest.mark.parametrize("M,N", [(1, 1), (2, 3), (5, 5), (4, 1)])
def test_model1_size(model1, M, N):
    assert explore_state_space(model1, [M, 0, N, 0]).n == (M + 1) * (N + 1)


def test_frozen_single_state():
    # A only enables s, C only enables t, both are synchronised: deadlock
    m = parse_model("A = (s, 1).B; B = (t, 1).A; C = (t, 1).D; D = (s, 1).C;\nA[1] <s, t> C[1]")
    c = explore_state_space(m)
    assert c.n == 1 and c.m == 0.0
    assert np.array_equal(steady_state(c), [1.0])


def test_generator_invariants(model2):
    c = explore_state_space(model2)
    Q = c.Q.toarray()
    assert np.allclose(Q.sum(axis=1), 0, atol=1e-12)
    off = Q - np.diag(np.diag(Q))
    assert np.all(off >= 0)
    assert is_irreducible(c)
    K = np.eye(c.n) + Q / c.m
    assert np.all(K >= -1e-15) and np.allclose(K.sum(axis=1), 1)
    for t in (0.3, 2.0):
        H = transient_distribution(c, t, np.eye(c.n))
        assert np.allclose(H.sum(axis=1), 1, atol=1e-10) and np.all(H >= -1e-14)


def test_cap(model1):
    with pytest.raises(StateSpaceCapError) as ei:
        explore_state_space(model1, [10, 0, 10, 0], cap=20)
    assert ei.value.cap == 20 and ei.value.frontier > 0


def test_cap_env(model1, monkeypatch):
    monkeypatch.setenv("PEPAFLUID_STATE_CAP", "5")
    with pytest.raises(StateSpaceCapError):
        explore_state_space(model1, [2, 0, 2, 0])


def test_invalid_start(model1):
    with pytest.raises(ValueError):
        explore_state_space(model1, [1.5, 0, 1, 0])
    with pytest.raises(ValueError):
        explore_state_space(model1, [1, 0, 1])


@pytest.mark.parametrize("a,b", [(1.0, 3.0), (2.0, 2.0), (0.5, 4.0)])
def test_two_state_steady(a, b):
    c = two_state(a, b)
    assert np.allclose(steady_state(c), [b / (a + b), a / (a + b)], atol=1e-14)
    assert np.allclose(steady_state(c, method="power"), [b / (a + b), a / (a + b)], atol=1e-10)


def test_model1_steady_residual(model1):
    c = explore_state_space(model1, [1, 0, 1, 0])
    pi = steady_state(c)
    assert np.max(np.abs(c.Q.T @ pi)) < 1e-12 and pi.sum() == pytest.approx(1, abs=1e-12)
    c8 = explore_state_space(model1, [8, 0, 8, 0])
    assert np.allclose(steady_state(c8, "dense"), steady_state(c8, "power"), atol=1e-9)


def test_reducible():
    Q = sp.csr_matrix(np.array([[-1.0, 1.0], [0.0, 0.0]]))
    c = CtmcModel(np.array([[1, 0], [0, 1]]), Q, 0, (), (), ("A", "B"))
    assert not is_irreducible(c)
    with pytest.raises(ReducibleChainError):
        steady_state(c)


def test_transient(model1):
    c = two_state(1.0, 1.0)
    assert np.array_equal(transient_distribution(c, 0.0), [1.0, 0.0])
    assert transient_distribution(c, 1.0)[0] == pytest.approx((1 + np.exp(-2)) / 2, abs=1e-12)
    c1 = explore_state_space(model1, [1, 0, 1, 0])
    assert np.allclose(transient_distribution(c1, 200.0), steady_state(c1), atol=1e-9)
    with pytest.raises(ValueError):
        transient_distribution(c, -1.0)


def test_poisson_window():
    lo, hi, w = poisson_window(50.0)
    assert 1 - w.sum() < 1e-12 and lo > 0


def test_singleton():
    m = parse_model("U1 = (task1, 2).U2; U2 = (task2, 3).U1;\nU1[1]")
    c = singleton_ctmc(m, "U")
    assert np.allclose(c.Q.toarray(), [[-2, 2], [3, -3]])
    k = 5
    cyc = " ".join(f"C{i} = (t{i}, 1.5).C{(i + 1) % k};" for i in range(k))
    cc = singleton_ctmc(parse_model(cyc + "\nC0[1]"), "C")
    Q = cc.Q.toarray()
    for i in range(k):
        assert np.allclose(np.roll(Q[0], i), Q[i])
    with pytest.raises(ModelError):
        singleton_ctmc(bundled_model("model1"), "User")


def test_singleton_branches():
    br = parse_model("P1 = (a, 2).P2 + (b, 3).P3; P2 = (q, 1).P1; P3 = (r, 1).P1;\nP1[1]")
    Q = singleton_ctmc(br, "P").Q.toarray()
    assert Q[0, 0] == -5.0 and Q[0, 1] == 2.0 and Q[0, 2] == 3.0


def test_scale_family(model1):
    fam = scale_family(model1, [1, 0, 1, 0], levels=(1, 2, 3))
    base = explore_state_space(model1, [1, 0, 1, 0])
    assert states(fam[0]) == states(base)
    c2 = fam[1]
    i, j = c2.index()[(2, 0, 2, 0)], c2.index()[(1, 1, 1, 1)]
    assert c2.Q[i, j] == pytest.approx(2.0)
    nm = numeric_model(model1)
    for c, n in zip(fam, (1, 2, 3)):
        src, dst, lab, rate = c.edges
        for s, t, l, r in zip(src, dst, lab, rate):
            x = c.states[s]
            assert np.array_equal(c.states[t], x + np.array(nm.labels[l].vector))
            assert r == pytest.approx(n * transition_rate(x / n, nm.labels[l]), rel=1e-12)


def test_expected_state_bounded(model2):
    c = explore_state_space(model2)
    e = expected_state(c, steady_state(c))
    assert np.all(e >= 0) and np.all(e <= np.max(c.states[0]))
