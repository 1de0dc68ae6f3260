import numpy as np
import pytest

from pepafluid import bundled_model, numeric_model, parse_model
from pepafluid.ctmc import explore_state_space
from pepafluid.simulation import (CHUNK, expectation_curve, gillespie_trace, kurtz_error,
                                  steady_consistency, sup_error)
from pepafluid.fluid import build_fluid_system, integrate


def check_trace(nm, tr):
    vecs = np.array([l.vector for l in nm.labels])
    assert np.all(np.diff(tr.jump_times) > 0) and np.all(tr.jump_times > 0)
    for k, j in enumerate(tr.labels):
        x = tr.states[k]
        assert nm.rates(x)[j] > 0
        assert np.array_equal(tr.states[k + 1], x + vecs[j])
    for c in nm.components:
        sums = tr.states[:, list(c.indices)].sum(axis=1)
        assert np.all(sums == sums[0])
    assert np.all(tr.states >= 0)


def test_first_jump_task1(model1):
    nm = numeric_model(model1)
    for seed in range(20):
        tr = gillespie_trace(nm, [1, 0, 1, 0], 5.0, seed)
        assert nm.labels[tr.labels[0]].action == "task1"


def test_absorbing_trace():
    m = parse_model("A = (s, 1).B; B = (t, 1).A; C = (t, 1).D; D = (s, 1).C;\nA[1] <s, t> C[1]")
    tr = gillespie_trace(m, None, 10.0, 0)
    assert len(tr.states) == 1 and len(tr.jump_times) == 0 and tr.absorbed


def test_holding_time(model2):
    nm = numeric_model(model2)
    x = nm.x0
    R = nm.rates(x).sum()
    h = np.array([gillespie_trace(nm, x, 20.0 / R, s).jump_times[0]
                  for s in np.random.SeedSequence(5).spawn(10_000)])
    assert abs(h.mean() - 1 / R) < 3 * h.std(ddof=1) / np.sqrt(len(h))


def test_traces_valid(model1, model2, backend):
    for m, n in ((model1, 30), (model2, 4)):
        nm = numeric_model(m)
        for seed in range(10):
            tr = gillespie_trace(nm, nm.x0 * n, 10.0, seed, level=n, backend=backend)
            check_trace(nm, tr)
            s = tr.scaled()
            assert np.all(s <= np.max(nm.x0) * np.max([c.population for c in nm.components]))


def test_backends_same_path(model2):
    pytest.importorskip("pepafluid._ckernels")
    nm = numeric_model(model2)
    a = gillespie_trace(nm, nm.x0 * 20, 20.0, 3, backend="python")
    b = gillespie_trace(nm, nm.x0 * 20, 20.0, 3, backend="cython")
    assert np.array_equal(a.labels, b.labels)
    assert np.allclose(a.jump_times, b.jump_times, rtol=1e-13)


def test_long_trace_buffers(model1):
    # more jumps than one uniform chunk and one output buffer
    nm = numeric_model(model1)
    tr = gillespie_trace(nm, [200, 0, 200, 0], 50.0, 1, level=200)
    assert len(tr.labels) > CHUNK
    check_trace(nm, tr)


def test_kurtz_reproducible(model1):
    a = kurtz_error(model1, levels=(10, 20), t_end=2.0, reps=5, seed=9)
    b = kurtz_error(model1, levels=(10, 20), t_end=2.0, reps=5, seed=9, workers=3)
    assert a.as_dict() == b.as_dict()
    c = kurtz_error(model1, levels=(10,), t_end=2.0, reps=1, seed=9)
    d = kurtz_error(model1, levels=(10,), t_end=2.0, reps=1, seed=9)
    assert c.as_dict() == d.as_dict()
    assert all(g >= 0 for g in a.expectation_gap) and np.all(a.sup_mean >= 0)


def test_sup_error_zero_on_fixed_point(model1):
    fs = build_fluid_system(model1)
    x = np.array([0.0, 0.0, 0.0, 0.0])
    tr = gillespie_trace(model1, [0, 0, 0, 0], 1.0, 0)
    assert sup_error(tr, integrate(fs, x, 1.0)) == 0.0


def test_expectation_exact_vs_mc(model1):
    grid = [0.0, 0.5, 1.0, 3.0]
    ex, se0 = expectation_curve(model1, n=2, time_grid=grid, exact=True)
    mc, se = expectation_curve(model1, n=2, time_grid=grid, reps=4000, seed=1)
    assert se0 is None
    assert np.allclose(ex[0], [1, 0, 1, 0]) and np.allclose(mc[0], [1, 0, 1, 0])
    assert np.all(np.abs(mc - ex)[1:] < 4 * se[1:] + 1e-12)


def test_steady_nonsync(nonsync):
    rep = steady_consistency(nonsync, levels=(1, 2, 3))
    assert not rep.inconclusive
    assert max(rep.gaps) < 1e-9


def test_steady_single_state():
    m = parse_model("A = (s, 1).B; B = (t, 1).A; C = (t, 1).D; D = (s, 1).C;\nA[1] <s, t> C[1]")
    rep = steady_consistency(m, levels=(1, 2))
    assert max(rep.gaps) < 1e-12
    assert explore_state_space(m).n == 1
