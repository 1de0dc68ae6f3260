"""Fluid approximation: vector field, fixed-step RK4 integration, diagnostics."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import kernels
from .errors import IntegrationError
from .numeric import NumericModel, numeric_model
from .syntax import PepaModel

STEP_MIN, STEP_MAX = 1e-5, 1e-1
MAX_SWITCHES = 1 << 16


@dataclass(frozen=True, eq=False)
class FluidSystem:
    """Immutable ODE system ``dx/dt = C f(x)``.

    Attributes
    ----------
    numeric : NumericModel
    """

    numeric: NumericModel

    @property
    def matrices(self):
        return self.numeric.matrices

    @property
    def d(self):
        return self.numeric.d

    @property
    def names(self):
        return self.numeric.names

    @property
    def component_partition(self):
        return {c.name: c.indices for c in self.numeric.components}

    @property
    def min_terms(self):
        return self.numeric.min_terms

    @property
    def n_regions(self):
        n = 1
        for mt in self.numeric.min_terms:
            n *= len(mt.idx)
        return n

    @property
    def x0(self):
        return self.numeric.x0.astype(float)

    def rate_eval(self, x):
        return kernels.backend().label_rates(np.asarray(x, dtype=float),
                                             *kernels.rate_args(self.numeric.tables))

    def region_of(self, x):
        """Region id of one state (``-1`` never occurs; 0 without min terms)."""
        t = self.numeric.tables
        return int(kernels.backend().region_ids(np.asarray(x, dtype=float),
                                                *kernels.region_args(t))[0])

    def region_signature(self, rid):
        """Argmin index per min term for region id ``rid``."""
        sig = []
        for mt in reversed(self.numeric.min_terms):
            k = len(mt.idx)
            sig.append(rid % k)
            rid //= k
        return tuple(reversed(sig))

    def region_id(self, signature):
        rid = 0
        for mt, s in zip(self.numeric.min_terms, signature):
            rid = rid * len(mt.idx) + s
        return rid


def region_name(rid):
    """Display name ``Q1, Q2, ...`` of a region id."""
    return f"Q{int(rid) + 1}"


def build_fluid_system(m, rates=None):
    """Fluid system from a model.

    Parameters
    ----------
    m : PepaModel or NumericModel
    rates : dict, optional
        Parameter overrides (only with a PepaModel).
    """
    if isinstance(m, FluidSystem):
        return m
    if isinstance(m, PepaModel):
        m = numeric_model(m.with_params(rates))
    elif rates:
        raise ValueError("rate overrides need the PepaModel")
    return FluidSystem(m)


def evaluate_rhs(sys, x):
    """``F(x)``; entries of ``x`` below ``-1e-12`` are rejected."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.d,):
        raise ValueError(f"state must have length {sys.d}")
    if np.any(x < -1e-12):
        raise ValueError("negative state entry")
    return kernels.backend().rhs(np.maximum(x, 0.0), *kernels.rate_args(sys.numeric.tables))


def default_step(sys):
    """``1e-3 / maxBranchRate`` clamped to ``[1e-5, 1e-1]``."""
    r = sys.numeric.max_branch_rate
    if r <= 0:
        return STEP_MAX
    return min(max(1e-3 / r, STEP_MIN), STEP_MAX)


@dataclass(eq=False)
class Trajectory:
    """Sampled fluid trajectory.

    Attributes
    ----------
    times : ndarray
        Sample times (strictly increasing).
    states : ndarray, shape (n, d)
    region_ids : ndarray of int
        Region id at each sample.
    switch_times : ndarray
        Times of the first ``MAX_SWITCHES`` region changes.
    n_switches : int
        Total number of region changes.
    last_switch_time : float or None
    step : float
        Step size actually used.
    n_steps, n_rhs : int
    n_clipped : int
        Number of undershoots in ``[-1e-9, 0)`` reset to 0.
    min_preclip : float
        Most negative value seen before clipping (0 if none).
    """

    times: np.ndarray
    states: np.ndarray
    region_ids: np.ndarray
    switch_times: np.ndarray
    n_switches: int
    last_switch_time: object
    step: float
    n_steps: int
    n_rhs: int
    n_clipped: int
    min_preclip: float
    t_end: float = field(default=0.0)

    @property
    def final(self):
        return self.states[-1]

    def region_constant_since(self, fraction):
        """True if no region change happened in the trailing ``fraction``."""
        if self.n_switches == 0:
            return True
        return self.last_switch_time <= (1.0 - fraction) * self.t_end + 1e-12 * max(1.0, self.t_end)

    def at(self, t):
        """Linear interpolation of the sampled states at times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([np.interp(t, self.times, self.states[:, i])
                                for i in range(self.states.shape[1])])


def integrate(sys, x0=None, t_end=1.0, step=None, record_every=None, max_samples=20000,
              backend=None):
    """Classical fixed-step RK4 integration.

    Parameters
    ----------
    sys : FluidSystem
    x0 : array_like, optional
        Nonnegative start state; defaults to the model's initial counts.
    t_end : float
        Final time (``>= 0``).
    step : float, optional
        Nominal step; defaults to :func:`default_step`.  It is shrunk so an
        integer number of steps lands exactly on ``t_end``.
    record_every : int, optional
        Sampling stride in steps; by default chosen to keep at most
        ``max_samples`` samples.  The final step is always recorded.
    backend : {"cython", "python"}, optional

    Raises
    ------
    IntegrationError
        Non-finite state or undershoot below ``-1e-9``.
    """
    sys = build_fluid_system(sys)
    x0 = sys.x0 if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (sys.d,):
        raise ValueError(f"x0 must have length {sys.d}")
    if np.any(x0 < 0):
        raise ValueError("x0 must be nonnegative")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    h_nom = default_step(sys) if step is None else float(step)
    if t_end == 0:
        rid = sys.region_of(x0)
        return Trajectory(np.zeros(1), x0[None, :].copy(), np.array([rid]), np.zeros(0), 0,
                          None, h_nom, 0, 0, 0, 0.0, 0.0)
    nsteps = max(1, math.ceil(t_end / h_nom - 1e-9))
    h = t_end / nsteps
    stride = record_every or max(1, math.ceil(nsteps / max_samples))
    t = sys.numeric.tables
    k = kernels.backend(backend)
    (steps, states, regions, sw, n_sw, last_sw, n_clip, min_pre, status,
     fail) = k.rk4(np.ascontiguousarray(x0), h, nsteps, stride, *kernels.rate_args(t),
                   t.mt_ptr, t.mt_idx, t.mt_rate, MAX_SWITCHES)
    if status == kernels.NONFINITE:
        raise IntegrationError(f"non-finite state at t={fail * h:g}")
    if status == kernels.NEGATIVE:
        raise IntegrationError(f"undershoot {min_pre:.3e} below -1e-9 at t={fail * h:g}")
    return Trajectory(steps * h, states, regions, np.asarray(sw) * h, int(n_sw),
                      None if last_sw < 0 else last_sw * h, h, nsteps, 4 * nsteps,
                      int(n_clip), float(min_pre), float(t_end))


def detect_equilibrium(traj, sys, tol_f=None, tail=0.1):
    """Final state if it is numerically stationary.

    Returns the last state when ``||F(x)||_inf < tol_f`` (default
    ``1e-8 * maxBranchRate * population``) and the region did not change over
    the trailing ``tail`` fraction of the run; otherwise None.
    """
    sys = build_fluid_system(sys)
    x = traj.final
    if tol_f is None:
        pop = float(np.sum(traj.states[0]))
        tol_f = 1e-8 * max(sys.numeric.max_branch_rate, 1e-300) * max(pop, 1.0)
    fx = evaluate_rhs(sys, np.maximum(x, 0.0))
    if np.max(np.abs(fx), initial=0.0) >= tol_f:
        return None
    if not traj.region_constant_since(tail):
        return None
    return x.copy()


def check_conservation(traj, sys):
    """Per component type, max over samples of the drift of its population."""
    sys = build_fluid_system(sys)
    out = {}
    for name, idx in sys.component_partition.items():
        s = traj.states[:, list(idx)].sum(axis=1)
        out[name] = float(np.max(np.abs(s - s[0]))) if len(s) else 0.0
    return out


def _min_term_for(sys, action):
    hits = [mt for mt in sys.numeric.min_terms if mt.action == action]
    if not hits:
        raise ValueError(f"{action} is not a shared activity with finite cooperands")
    if len(hits) > 1:
        raise ValueError(f"{action} has several synchronisation groups")
    return hits[0]


def sync_fraction_series(traj, sys, action, side=0):
    """Synchronisation fractions ``alpha(t)`` and running averages ``beta(t)``.

    ``alpha(t) = min_i r_i x_i(t) / (r_s x_s(t))`` for the driving argument
    ``s = side`` of the min term of ``action`` (1 where ``x_s = 0``);
    ``beta(t) = (1/t) int_0^t alpha`` by the trapezoid rule on the samples,
    with ``beta(0) = alpha(0)``.  Both are clipped to ``[0, 1]``.

    Returns
    -------
    alpha, beta : ndarray
    """
    sys = build_fluid_system(sys)
    mt = _min_term_for(sys, action)
    vals = traj.states[:, list(mt.idx)] * np.asarray(mt.rates)
    drive = vals[:, side]
    mn = vals.min(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(drive > 0, mn / np.where(drive > 0, drive, 1.0), 1.0)
    alpha = np.clip(alpha, 0.0, 1.0)
    integral = cumulative_trapezoid(alpha, traj.times, initial=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(traj.times > 0, integral / np.where(traj.times > 0, traj.times, 1.0),
                        alpha[0])
    return alpha, np.clip(beta, 0.0, 1.0)


def lipschitz_bound(sys):
    """Global Lipschitz constant of ``F`` in the infinity norm.

    ``sum_l ||l||_inf * factor_l * max_i r_alpha(P_i)`` over finite arguments.
    Passive arguments enter only through an indicator and are not covered.
    """
    sys = build_fluid_system(sys)
    total = 0.0
    for l in sys.numeric.labels:
        finite = [a.value for a in l.apparent if not a.passive]
        if not finite:
            continue
        total += max(abs(v) for v in l.vector) * l.factor * max(finite)
    return total
