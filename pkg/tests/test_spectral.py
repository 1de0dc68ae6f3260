import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.linalg import expm

from pepafluid import bundled_model, parse_model
from pepafluid.ctmc import CtmcModel, explore_state_space, steady_state, transient_distribution
from pepafluid.spectral import (adjoint, condition_report, decay_envelope, kernel,
                                level_report, logsobolev_bounds, logsobolev_numeric,
                                ratio_trend, reversibilization, spectral_gap)


def chain(Q):
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    return CtmcModel(np.eye(n, dtype=np.int64), sp.csr_matrix(Q), 0, (), (),
                     tuple(f"s{i}" for i in range(n)))


def two_state(a=1.0, b=1.0):
    return explore_state_space(parse_model(f"A = (u, {a}).B; B = (v, {b}).A;\nA[1]"))


def test_kernel_two_state():
    c = chain([[-1, 1], [1, -1]])
    assert c.m == 1.0
    assert np.array_equal(kernel(c), [[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        kernel(chain([[0.0]]))


def test_kernel_semigroup(model1):
    c = explore_state_space(model1, [1, 0, 1, 0])
    K = kernel(c)
    assert np.all((K >= 0) & (K <= 1)) and np.allclose(K.sum(axis=1), 1)
    m, t = c.m, 1.0
    H = expm(-t * (np.eye(c.n) - K))
    assert np.allclose(H, expm((t / m) * c.Q.toarray()), atol=1e-10)


def test_adjoint():
    c = two_state(1.0, 3.0)
    pi = steady_state(c)
    assert np.allclose(adjoint(c, pi).toarray(), c.Q.toarray())
    cyc = chain([[-1, 1, 0], [0, -1, 1], [1, 0, -1]])
    pi = np.full(3, 1 / 3)
    A = adjoint(cyc, pi).toarray()
    assert np.allclose(A, cyc.Q.toarray().T)
    rng = np.random.default_rng(0)
    R = rng.uniform(0.1, 2, (5, 5))
    np.fill_diagonal(R, 0)
    c5 = chain(R - np.diag(R.sum(axis=1)))
    pi = steady_state(c5)
    Qs = adjoint(c5, pi)
    assert np.allclose(np.asarray(Qs.sum(axis=1)).ravel(), 0, atol=1e-12)
    assert np.allclose(adjoint(Qs, pi).toarray(), c5.Q.toarray(), atol=1e-12)
    with pytest.raises(ValueError):
        adjoint(c5, np.array([0.5, 0.5, 0, 0, 0]))


def test_two_state_gap():
    lam, sigma = spectral_gap(two_state())
    assert lam == pytest.approx(2.0, abs=1e-12) and sigma == pytest.approx(2.0, abs=1e-12)


def test_gap_scaling(model1):
    c1 = explore_state_space(model1, [1, 0, 1, 0])
    c3 = explore_state_space(model1.with_params({"a": 3, "b": 3, "d": 3}), [1, 0, 1, 0])
    l1, s1 = spectral_gap(c1)
    l3, s3 = spectral_gap(c3)
    assert s3 == pytest.approx(3 * s1, rel=1e-10)
    assert l3 == pytest.approx(l1, rel=1e-10)
    assert s1 == pytest.approx(c1.m * l1, rel=1e-10)


def test_sigma_dense_oracle(model1):
    c = explore_state_space(model1, [1, 0, 1, 0])
    pi = steady_state(c)
    Q = c.Q.toarray()
    Qs = (Q.T * pi[None, :]) / pi[:, None]
    G = -(Q + Qs) / 2
    D = np.diag(np.sqrt(pi))
    ev = np.sort(np.linalg.eigvals(D @ G @ np.linalg.inv(D)).real)
    assert spectral_gap(c, pi)[1] == pytest.approx(ev[1], abs=1e-10)


def test_symmetrization_psd(model1):
    c = explore_state_space(model1, [2, 0, 2, 0])
    pi = steady_state(c)
    S = reversibilization(c, pi)
    assert np.allclose(S, S.T, atol=1e-12)
    assert np.linalg.eigvalsh(S).min() > -1e-12


def test_sparse_route_matches_dense(model1, monkeypatch):
    import pepafluid.spectral as spc
    c = explore_state_space(model1, [6, 0, 6, 0])
    dense = spectral_gap(c)
    monkeypatch.setattr(spc, "DENSE_EIG", 10)
    assert np.allclose(spectral_gap(c), dense, rtol=1e-8)


def test_reducible_gap():
    Q = np.zeros((4, 4))
    Q[0, 1] = Q[1, 0] = Q[2, 3] = Q[3, 2] = 1.0
    Q -= np.diag(Q.sum(axis=1))
    from pepafluid.errors import ReducibleChainError
    with pytest.raises(ReducibleChainError):
        spectral_gap(chain(Q), np.full(4, 0.25))


def test_logsobolev_bounds():
    b = logsobolev_bounds(2.0, 0.25)
    assert b.lower == pytest.approx(1 / math.log(3), abs=1e-12) and b.upper == 1.0
    lo, up = b
    assert (lo, up) == (b.lower, b.upper) and not b.boundary
    half = logsobolev_bounds(2.0, 0.5)
    assert half.boundary and half.lower == half.upper == 1.0
    near = logsobolev_bounds(2.0, 0.5 - 1e-7)
    assert near.lower == pytest.approx(1.0, rel=1e-5)


def test_logsobolev_numeric_two_point():
    assert logsobolev_numeric(two_state()) == pytest.approx(1.0, abs=1e-3)


FIXTURES = [("model1", [1, 0, 1, 0]), ("model1", [2, 0, 2, 0]), ("model1", [1, 0, 3, 0]),
            ("nonsync", [3, 0]), ("model2", [1, 0, 1, 0, 0, 1])]


@pytest.mark.parametrize("name,x0", FIXTURES)
def test_bracket(name, x0):
    c = explore_state_space(bundled_model(name), x0)
    r = level_report(c)
    assert r.alpha_lower - 1e-6 <= r.alpha_numeric <= r.lam / 2 + 1e-6
    assert r.alpha_upper == pytest.approx(r.lam / 2)
    assert 0 < r.pi_star <= 1 / r.states + 1e-15


def test_numeric_cap(model1):
    c = explore_state_space(model1, [8, 0, 8, 0])
    with pytest.raises(ValueError):
        logsobolev_numeric(c)
    assert level_report(c).alpha_numeric is None


def test_condition_report(model1):
    reps = condition_report(model1, levels=(1, 2, 3, 4), numeric_alpha=False)
    assert [r.n for r in reps] == [1, 2, 3, 4]
    for r in reps:
        assert r.condition_ratio == pytest.approx(math.log(1 / r.pi_star) ** 2 / r.sigma)
        assert r.sigma > 0
    assert ratio_trend(reps) in {"non-increasing", "non-decreasing", "constant", "mixed"}
    single = level_report(explore_state_space(
        parse_model("A = (s, 1).B; B = (t, 1).A; C = (t, 1).D; D = (s, 1).C;\n"
                    "A[1] <s, t> C[1]")))
    assert single.pi_star == 1.0 and single.condition_ratio == 0.0


def test_decay_envelope(model1):
    c = explore_state_space(model1, [1, 0, 1, 0])
    pi = steady_state(c)
    for t in np.linspace(0, 10, 41):
        P = transient_distribution(c, t, np.eye(c.n))
        env = decay_envelope(c, t, pi)
        assert np.all(np.abs(P - pi[None, :]) <= env[None, :] + 1e-12)
