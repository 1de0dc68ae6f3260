"""Stochastic simulation of the density-dependent family and the empirical
consistency harness (sup-error against the fluid limit, expectation curves,
steady-state gaps)."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .ctmc import _as_numeric, explore_state_space, expected_state, steady_state, transient_distribution
from .errors import PepaError
from .fluid import FluidSystem, integrate

CHUNK = 8192


@dataclass(frozen=True, eq=False)
class SimTrace:
    """One simulated path of ``X_n``.

    Attributes
    ----------
    jump_times : ndarray
        Strictly increasing jump epochs.
    states : ndarray, shape (len(jump_times) + 1, d)
        Counts before the first jump and after each jump.
    labels : ndarray of int
        Index of the labelled activity fired at each jump.
    seed : object
        Seed (int or SeedSequence) used.
    level : int
    t_end : float
    absorbed : bool
        True if the chain reached a state with total rate 0 before ``t_end``.
    """

    jump_times: np.ndarray
    states: np.ndarray
    labels: np.ndarray
    seed: object
    level: int
    t_end: float
    absorbed: bool = False

    def scaled(self):
        return self.states / float(self.level)

    def state_at(self, t):
        """Counts at times ``t`` (right-continuous path)."""
        k = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right")
        return self.states[k]


def _generator(seed):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(ss))


def gillespie_trace(m, x0=None, t_end=1.0, seed=0, level=1, backend=None):
    """Exact SSA path from ``x0`` up to ``t_end`` or absorption.

    Parameters
    ----------
    m : PepaModel or NumericModel
    x0 : array_like of int, optional
        Start counts (default: model initial counts times ``level``).
    seed : int or numpy.random.SeedSequence
    level : int
        Recorded concentration level used by :meth:`SimTrace.scaled`.
    backend : {"cython", "python"}, optional
    """
    nm = _as_numeric(m)
    x = (nm.x0 * level if x0 is None else np.asarray(x0)).astype(np.int64).copy()
    if np.any(x < 0):
        raise ValueError("start state must be nonnegative")
    start = x.copy()
    gen = _generator(seed)
    k = kernels.backend(backend)
    args = kernels.rate_args(nm.tables)
    times, labs = [], []
    t = 0.0
    u = gen.random(2 * CHUNK)
    pos = 0
    cap = CHUNK
    status = kernels.NEED_UNIFORMS
    while True:
        ot = np.empty(cap)
        ol = np.empty(cap, dtype=np.int64)
        n_ev, pos, t, status = k.ssa(x, t, float(t_end), u, pos, ot, ol, *args)
        times.append(ot[:n_ev])
        labs.append(ol[:n_ev])
        if status == kernels.NEED_UNIFORMS:
            u = gen.random(2 * CHUNK)
            pos = 0
        elif status == kernels.BUFFER_FULL:
            cap = min(cap * 2, 1 << 22)
        else:
            break
    jt = np.concatenate(times) if times else np.zeros(0)
    lb = np.concatenate(labs).astype(np.int64) if labs else np.zeros(0, np.int64)
    vecs = np.array([l.vector for l in nm.labels], dtype=np.int64).reshape(len(nm.labels), nm.d)
    states = np.vstack([start[None, :], start + np.cumsum(vecs[lb], axis=0)]) if len(lb) \
        else start[None, :].copy()
    return SimTrace(jt, states, lb, seed, int(level), float(t_end),
                    status == kernels.ABSORBED)


def sup_error(trace, fluid):
    """``sup_u ||X_n(u)/n - X(u)||_inf`` on the merged jump/sample grid.

    The fluid trajectory is linearly interpolated at jump times; both the
    pre-jump and post-jump states are compared there.
    """
    s = trace.scaled()
    g = fluid.times
    err = np.max(np.abs(s[np.searchsorted(trace.jump_times, g, side="right")] - fluid.states))
    if len(trace.jump_times):
        fj = fluid.at(trace.jump_times)
        err = max(err, np.max(np.abs(s[:-1] - fj)), np.max(np.abs(s[1:] - fj)))
    return float(err)


@dataclass
class ConvergenceReport:
    """Per-level Monte Carlo summary.

    Attributes
    ----------
    levels : list of int
    sup_mean, sup_stderr : ndarray
        Mean and standard error of the sup-error per level.
    sup_errors : list of ndarray
        Raw per-replication sup-errors.
    expectation_gap : ndarray or None
        ``||M_n(t) - X(t)||_inf`` (max over the fluid samples) per level.
    steady_gap : ndarray or None
    """

    levels: list
    sup_mean: np.ndarray
    sup_stderr: np.ndarray
    sup_errors: list
    expectation_gap: object = None
    steady_gap: object = None
    meta: dict = field(default_factory=dict)

    def as_dict(self):
        d = {"levels": [int(n) for n in self.levels],
             "sup_mean": [float(v) for v in self.sup_mean],
             "sup_stderr": [float(v) for v in self.sup_stderr]}
        if self.expectation_gap is not None:
            d["expectation_gap"] = [float(v) for v in self.expectation_gap]
        if self.steady_gap is not None:
            d["steady_gap"] = [None if v is None else float(v) for v in self.steady_gap]
        d.update(self.meta)
        return d


def _fluid_reference(nm, x0, t_end, step=None):
    sys = FluidSystem(nm)
    return integrate(sys, np.asarray(x0, dtype=float), t_end, step=step, max_samples=200_000)


def kurtz_error(m, x0=None, levels=(10, 100, 1000), t_end=10.0, reps=100, seed=0,
                workers=1, backend=None, fluid_step=None):
    """Empirical check of the fluid limit across concentration levels.

    For each ``n`` runs ``reps`` SSA paths of ``X_n`` from ``n * x0`` and
    reports the mean and standard error of the sup-error.  Replication seeds
    are spawned from ``seed`` per (level, replication), so results do not
    depend on ``workers``.
    """
    nm = _as_numeric(m)
    x0 = nm.x0 if x0 is None else np.asarray(x0, dtype=np.int64)
    fluid = _fluid_reference(nm, x0, t_end, fluid_step)
    level_seeds = np.random.SeedSequence(seed).spawn(len(levels))
    means, errs, raw, egap = [], [], [], []

    for n, lss in zip(levels, level_seeds):
        seeds = lss.spawn(reps)

        def one(ss, n=n):
            tr = gillespie_trace(nm, x0 * n, t_end, ss, level=n, backend=backend)
            return sup_error(tr, fluid), tr.scaled()[np.searchsorted(
                tr.jump_times, fluid.times, side="right")]

        if workers and workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                res = list(ex.map(one, seeds))
        else:
            res = [one(ss) for ss in seeds]
        e = np.array([r[0] for r in res])
        mean_path = np.mean([r[1] for r in res], axis=0)
        raw.append(e)
        means.append(e.mean())
        errs.append(e.std(ddof=1) / np.sqrt(len(e)) if len(e) > 1 else 0.0)
        egap.append(float(np.max(np.abs(mean_path - fluid.states))))
    return ConvergenceReport(list(levels), np.array(means), np.array(errs), raw,
                             np.array(egap),
                             meta={"t_end": float(t_end), "reps": int(reps),
                                   "seed": int(seed) if np.isscalar(seed) else str(seed)})


def expectation_curve(m, x0=None, n=1, time_grid=(0.0, 1.0), reps=100, seed=0, exact=False,
                      cap=None, backend=None):
    """``M_n(t) = E[X_n(t) / n]`` on a time grid.

    Returns
    -------
    mean : ndarray, shape (len(time_grid), d)
    stderr : ndarray or None
        Monte Carlo standard error (None in exact mode).
    """
    nm = _as_numeric(m)
    x0 = nm.x0 if x0 is None else np.asarray(x0, dtype=np.int64)
    grid = np.asarray(time_grid, dtype=float)
    if exact:
        c = explore_state_space(nm, n * x0, cap=cap, level=n)
        rows = [expected_state(c, transient_distribution(c, float(t))) for t in grid]
        return np.array(rows), None
    seeds = np.random.SeedSequence(seed).spawn(reps)
    samples = []
    for ss in seeds:
        tr = gillespie_trace(nm, n * x0, float(grid.max()), ss, level=n, backend=backend)
        samples.append(tr.scaled()[np.searchsorted(tr.jump_times, grid, side="right")])
    samples = np.array(samples)
    se = samples.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros_like(samples[0])
    return samples.mean(axis=0), se


@dataclass
class SteadyReport:
    levels: list
    gaps: list
    expectations: list
    fluid_limit: object
    inconclusive: bool = False
    note: str = ""

    def as_dict(self):
        return {"levels": [int(n) for n in self.levels],
                "steady_gap": [None if g is None else float(g) for g in self.gaps],
                "expectations": [None if e is None else [float(v) for v in e]
                                 for e in self.expectations],
                "fluid_limit": None if self.fluid_limit is None
                else [float(v) for v in self.fluid_limit],
                "inconclusive": self.inconclusive, "note": self.note}


def steady_consistency(m, x0=None, levels=(1, 2, 4, 8), cap=None):
    """Gap ``||M_n(inf) - X(inf)||_inf`` per level from exact steady states.

    ``X(inf)`` is the fluid equilibrium (refined by the region equilibrium
    solve when the integration has settled); if none is detected the report
    is marked inconclusive and gaps are None.
    """
    from .structural import fluid_limit

    nm = _as_numeric(m)
    x0 = nm.x0 if x0 is None else np.asarray(x0, dtype=np.int64)
    lim = fluid_limit(FluidSystem(nm), x0.astype(float))
    gaps, exps = [], []
    for n in levels:
        c = explore_state_space(nm, n * x0, cap=cap, level=n)
        e = expected_state(c, steady_state(c))
        exps.append(e)
        gaps.append(None if lim is None else float(np.max(np.abs(e - lim))))
    return SteadyReport(list(levels), gaps, exps, lim, lim is None,
                        "" if lim is not None else "no fluid equilibrium detected")
