import numpy as np
import pytest

from modelgen import random_models
from pepafluid import bundled_model, numeric_model, parse_model
from pepafluid.errors import EquilibriumError
from pepafluid.fluid import Trajectory, build_fluid_system, integrate
from pepafluid.numeric import build_activity_matrices
from pepafluid.simulation import gillespie_trace
from pepafluid.structural import (PiecewiseLinearSystem, block_structure_check,
                                  convergence_certificate, decompose_regions, dominating_region,
                                  eigen_check, find_invariants, fluid_limit, integer_null_space,
                                  linear_form, predict_equilibrium, sample_region_consistency,
                                  sync_equilibrium_curve, zero_projection)


def model1_Q(a, b, d):
    Q1 = np.array([[-a, b, 0, 0], [a, -b, 0, 0], [-a, 0, 0, d], [a, 0, 0, -d]])
    Q2 = np.array([[0, b, -a, 0], [0, -b, a, 0], [0, 0, -a, d], [0, 0, a, -d]])
    return Q1, Q2


def model2_Q(a1, a2, c1, c2, c3, c4):
    Q1 = np.array([[-a1, a2, 0, 0, 0, 0],
                   [a1, -a2, 0, 0, 0, 0],
                   [-a1, 0, -c1, c2, 0, 0],
                   [0, a2, c1, -c2, 0, 0],
                   [a1, 0, 0, 0, -c3, c4],
                   [0, -a2, 0, 0, c3, -c4]])
    Q2 = np.array([[-a1, 0, 0, 0, 0, a2],
                   [a1, 0, 0, 0, 0, -a2],
                   [-a1, 0, -c1, c2, 0, 0],
                   [0, 0, c1, -c2, 0, a2],
                   [a1, 0, 0, 0, -c3, c4],
                   [0, 0, 0, 0, c3, -(c4 + a2)]])
    Q3 = np.array([[0, a2, -a1, 0, 0, 0],
                   [0, -a2, a1, 0, 0, 0],
                   [0, 0, -a1 - c1, c2, 0, 0],
                   [0, a2, c1, -c2, 0, 0],
                   [0, 0, a1, 0, -c3, c4],
                   [0, -a2, 0, 0, c3, -c4]])
    Q4 = np.array([[0, 0, -a1, 0, 0, a2],
                   [0, 0, a1, 0, 0, -a2],
                   [0, 0, -a1 - c1, c2, 0, 0],
                   [0, 0, c1, -c2, 0, a2],
                   [0, 0, a1, 0, -c3, c4],
                   [0, 0, 0, 0, c3, -a2 - c4]])
    return Q1, Q2, Q3, Q4


def q3_closed_form(a1, a2, c1, c2, c3, c4):
    s = -(a1 + a2 + c1 + c2) / 2
    r = np.sqrt(complex((a1 - a2 + c1 + c2) ** 2 - 4 * a1 * c2)) / 2
    return [0, 0, 0, -c3 - c4, s + r, s - r]


M2_RATES = ("a1", "a2", "c1", "c2", "c3", "c4")


def match_eigs(got, want, tol):
    got, want = list(got), [complex(w) for w in want]
    for g in got:
        k = int(np.argmin([abs(g - w) for w in want]))
        assert abs(g - want[k]) < tol, (got, want)
        want.pop(k)
    assert not want


# invariants ------------------------------------------------------------------

def test_invariants_model2(model2):
    inv = find_invariants(numeric_model(model2).matrices)
    assert inv.rank == 3
    target = np.array([0, -1, 0, 0, 1, 1])
    assert any(np.linalg.matrix_rank(np.vstack([v, target])) == 1 for v in inv.vectors)
    rows = {tuple(v) for v in inv.component_vectors}
    assert rows == {(1, 1, 0, 0, 0, 0), (0, 0, 1, 1, 1, 1)}
    assert "Y3 + Y4 - X2" in inv.describe()


def test_invariants_model1(model1):
    inv = find_invariants(numeric_model(model1).matrices)
    assert inv.rank == 2 and inv.extra_vectors.shape[0] == 0


def test_invariants_empty():
    inv = find_invariants(build_activity_matrices((), d=3))
    assert np.array_equal(inv.vectors, np.eye(3, dtype=np.int64))


def test_integer_null_space_exact():
    A = np.array([[2, -4, 6], [1, -2, 3]])
    N = integer_null_space(A)
    assert N.dtype.kind == "i" and np.all(N @ A.T == 0) and N.shape[0] == 2
    assert linear_form([0, -1, 1], ["a", "b", "c"]) == "c - b"


@pytest.mark.parametrize("m,src", random_models(25, seed=21))
def test_invariants_random(m, src):
    nm = numeric_model(m)
    inv = find_invariants(nm.matrices)
    assert np.all(inv.vectors @ nm.matrices.C == 0)
    assert np.linalg.matrix_rank(inv.vectors) == inv.rank
    assert inv.rank == nm.d - np.linalg.matrix_rank(nm.matrices.C)


def test_invariant_drift(model2):
    nm = numeric_model(model2)
    inv = find_invariants(nm.matrices)
    tr = integrate(build_fluid_system(nm), nm.x0, 100.0)
    vals = inv.values(tr.states)
    assert np.max(np.abs(vals - vals[0])) < 1e-6
    for seed in range(20):
        s = gillespie_trace(nm, nm.x0 * 3, 10.0, seed).states
        v = s @ inv.vectors.T
        assert np.all(v == v[0])


# regions ---------------------------------------------------------------------

def test_regions_model1(model1):
    rates = {"a": 1.3, "b": 0.7, "d": 2.1}
    pls = decompose_regions(build_fluid_system(model1, rates))
    Q1, Q2 = model1_Q(1.3, 0.7, 2.1)
    assert pls.n_regions == 2
    assert np.allclose(pls.regions[0], Q1, atol=1e-15)
    assert np.allclose(pls.regions[1], Q2, atol=1e-15)
    assert pls.describe_region(0) == "User1 <= Provider1"
    assert pls.describe_region(1) == "Provider1 < User1"


def test_regions_model2(model2, rng):
    r = rng.uniform(0.3, 3.0, 6)
    pls = decompose_regions(build_fluid_system(model2, dict(zip(M2_RATES, r))))
    for rid, Q in enumerate(model2_Q(*r)):
        assert np.allclose(pls.regions[rid], Q, atol=1e-14)
        assert pls.feasible[rid]
    assert pls.describe_region(1) == "X1 <= Y1, Y4 < X2"


def test_regions_nonsync(nonsync):
    from pepafluid.ctmc import singleton_ctmc
    pls = decompose_regions(build_fluid_system(nonsync))
    assert pls.n_regions == 1
    assert np.allclose(pls.regions[0], singleton_ctmc(nonsync, "O").Q.toarray().T)


@pytest.mark.parametrize("name", ["model1", "model2"])
def test_region_consistency(name):
    pls = decompose_regions(build_fluid_system(bundled_model(name)))
    res = sample_region_consistency(pls, samples=10_000, seed=1)
    for rid, (count, err) in res.items():
        assert count > 0 and err < 1e-10


# eigenvalues -----------------------------------------------------------------

def test_eigen_model1(model1):
    a, b, d = 1.0, 2.0, 3.0
    pls = decompose_regions(build_fluid_system(model1, {"a": a, "b": b, "d": d}))
    e1, e2 = eigen_check(pls.regions[0]), eigen_check(pls.regions[1])
    assert e1.passed and e2.passed and e1.zero_count == 2
    match_eigs(e1.eigenvalues, [0, 0, -d, -(a + b)], 1e-9)
    match_eigs(e2.eigenvalues, [0, 0, -b, -(a + d)], 1e-9)


def test_eigen_q3_all_ones(model2):
    pls = decompose_regions(build_fluid_system(model2))
    ec = eigen_check(pls.regions[2])
    assert ec.passed and ec.zero_count == 3
    match_eigs(ec.eigenvalues, q3_closed_form(*[1.0] * 6), 1e-9)


def test_eigen_q3_random(model2, rng):
    for _ in range(10):
        r = rng.uniform(0.3, 3.0, 6)
        pls = decompose_regions(build_fluid_system(model2, dict(zip(M2_RATES, r))))
        ec = eigen_check(pls.regions[2])
        assert ec.passed
        match_eigs(ec.eigenvalues, q3_closed_form(*r), 1e-8)


def test_eigen_fail_witness():
    ec = eigen_check(np.array([[0.5, 0.0], [0.0, -1.0]]))
    assert not ec.passed and ec.witnesses == (0.5 + 0j,)
    rot = eigen_check(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert not rot.passed


# block structure -------------------------------------------------------------

def test_block_structure(model1, model2):
    pls = decompose_regions(build_fluid_system(model1, {"a": 1.5, "b": 0.5, "d": 2.0}))
    rep = block_structure_check(pls)
    assert rep.applicable and rep.passed, rep.violations
    skip = block_structure_check(decompose_regions(build_fluid_system(model2)))
    assert not skip.applicable and skip.note.startswith("skipped")
    bad = dict(pls.regions)
    Q = np.array(bad[0])
    Q[0, 2] = 0.25
    bad[0] = Q
    rep = block_structure_check(PiecewiseLinearSystem(pls.system, pls.min_terms, bad,
                                                      pls.feasible))
    assert not rep.passed and any("Q1" in v for v in rep.violations)


def test_h_beta_monotone(model1):
    a, b = 1.5, 0.5
    pls = decompose_regions(build_fluid_system(model1, {"a": a, "b": b}))
    betas = np.linspace(0, 1, 21)
    h = sync_equilibrium_curve(pls, betas, "X", population=2.0)
    assert np.all(np.diff(h[:, 0]) <= 1e-12)
    assert np.allclose(h[:, 0], b * 2.0 / (a * betas + b))


# equilibria ------------------------------------------------------------------

def test_dominating_region(model2):
    fs = build_fluid_system(model2)
    assert dominating_region(integrate(fs, [1, 1, 5, 0, 0, 5], 200.0)) == 0
    fs4 = build_fluid_system(model2, {"a1": 20, "a2": 20})
    assert dominating_region(integrate(fs4, [1, 1, 5, 0, 0, 5], 200.0)) == 3
    t = np.linspace(0, 10, 101)
    rids = (np.arange(101) // 7) % 2
    sw = t[1:][np.diff(rids) != 0]
    alt = Trajectory(t, np.zeros((101, 6)), rids, sw, len(sw), sw[-1], 0.1, 100, 400, 0, 0.0,
                     10.0)
    assert dominating_region(alt) is None


def test_predict_equilibrium_q1(model2):
    nm = numeric_model(model2)
    pls = decompose_regions(build_fluid_system(nm))
    inv = find_invariants(nm.matrices)
    h = predict_equilibrium(pls.regions[0], inv, [1, 1, 5, 0, 0, 5])
    assert np.allclose(h, [1, 1, 2, 3, 3, 2], atol=1e-12)
    assert np.max(np.abs(pls.regions[0] @ h)) < 1e-10
    assert np.allclose(inv.values(h), inv.values([1, 1, 5, 0, 0, 5]))


def test_predict_equilibrium_model1_q2(model1):
    nm = numeric_model(model1)
    fs = build_fluid_system(nm)
    pls = decompose_regions(fs)
    x0 = np.array([3.0, 0, 1.0, 0])
    h = predict_equilibrium(pls.regions[1], find_invariants(nm.matrices), x0)
    tr = integrate(fs, x0, 100.0)
    assert np.allclose(h, tr.final, atol=1e-6)


def test_predict_equilibrium_errors(model1):
    inv = find_invariants(numeric_model(model1).matrices)
    with pytest.raises(EquilibriumError) as ei:
        predict_equilibrium(-np.eye(4), inv, [1, 0, 1, 0])
    assert ei.value.kind == "overdetermined"
    with pytest.raises(EquilibriumError) as ei:
        predict_equilibrium(np.zeros((4, 4)), inv, [1, 0, 1, 0])
    assert ei.value.kind == "underdetermined"
    # zero space spanned by (2, 1); the constraint h1 - 3 h2 = 1 forces h = -(2, 1)
    Q = np.array([[-1.0, 2.0], [1.0, -2.0]])
    with pytest.raises(EquilibriumError) as ei:
        predict_equilibrium(Q, np.array([[1, -3]]), [1.0, 0.0])
    assert ei.value.kind == "negative"


def test_zero_projection(nonsync):
    fs = build_fluid_system(nonsync)
    Q = decompose_regions(fs).regions[0]
    assert np.allclose(zero_projection(Q, [10, 0]), integrate(fs, [10, 0], 50.0).final,
                       atol=1e-9)


# certificates ----------------------------------------------------------------

def corroborate(cert, m, x0, rates=None):
    lim = fluid_limit(build_fluid_system(m, rates), np.asarray(x0, dtype=float))
    assert lim is not None
    assert np.max(np.abs(lim - cert.predicted_limit)) < 1e-3


def test_certificate_pinned_q4(model2):
    c = convergence_certificate(model2, [5, 5, 1, 1, 1, 1])
    assert c.verdict == "certified" and c.region_name == "Q4" and c.switch_time == 0.0
    assert c.eigen.passed
    corroborate(c, model2, [5, 5, 1, 1, 1, 1])


def test_certificate_two_type(model1):
    # bM/(a+b) > N with a = b = 1: M = 10, N = 2
    c = convergence_certificate(model1, [10, 0, 2, 0])
    assert c.verdict == "certified" and c.region_name == "Q2"
    assert any("two-type dominance" in s for s in c.conditions)
    corroborate(c, model1, [10, 0, 2, 0])
    assert np.allclose(c.predicted_limit, [9, 1, 1, 1], atol=1e-9)


def test_certificate_xy_dominance(model2):
    c = convergence_certificate(model2, [1, 1, 6, 6, 0, 1])
    assert c.verdict == "certified" and c.region_name == "Q2"
    assert any("X-Y dominance" in s for s in c.conditions)
    corroborate(c, model2, [1, 1, 6, 6, 0, 1])


def test_certificate_conditional(model2):
    c = convergence_certificate(model2, [1, 1, 5, 0, 0, 5])
    assert c.verdict == "conditional" and c.region_name == "Q1"
    assert np.allclose(c.predicted_limit, [1, 1, 2, 3, 3, 2], atol=1e-6)
    d = c.as_dict()
    assert d["verdict"] == "conditional" and d["dominating_region"] == "Q1"


def test_certificate_nonsync(nonsync):
    c = convergence_certificate(nonsync)
    assert c.verdict == "certified"
    assert np.allclose(c.predicted_limit, [20 / 3, 10 / 3], atol=1e-9)
