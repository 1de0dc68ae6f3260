"""Explicit aggregated CTMC: state-space exploration, steady state, transients."""

import os
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.stats import poisson

from . import kernels
from .errors import ModelError, ReducibleChainError, StateSpaceCapError
from .numeric import NumericModel, numeric_model
from .syntax import PepaModel, analyze_structure

DEFAULT_CAP = 50_000
DENSE_LIMIT = 10_000
CAP_ENV = "PEPAFLUID_STATE_CAP"


def default_cap():
    """State cap from ``$PEPAFLUID_STATE_CAP`` or 50,000."""
    v = os.environ.get(CAP_ENV)
    return int(v) if v else DEFAULT_CAP


@dataclass(frozen=True, eq=False)
class CtmcModel:
    """Finite CTMC over numerical state vectors.

    Attributes
    ----------
    states : ndarray, shape (n, d)
        Discrete states in BFS discovery order.
    Q : scipy.sparse.csr_matrix
        Generator, ``Q[x, x+l] = f(x, l)`` summed over labels with the same
        target.
    start : int
    edges : tuple of ndarray
        ``(src, dst, label, rate)`` per labelled transition, for DOT output.
    labels : tuple of str
        Label names (``edges[2]`` indexes into this).
    names : tuple of str
        Coordinate names of ``states``.
    level : int
        Concentration level ``n`` (start state ``n * x0``).
    """

    states: np.ndarray
    Q: sp.csr_matrix
    start: int
    edges: tuple
    labels: tuple
    names: tuple
    level: int = 1

    @property
    def n(self):
        return self.states.shape[0]

    @property
    def m(self):
        """Uniformisation rate ``max_i (-Q_ii)``."""
        if self.n == 0:
            return 0.0
        return float(max(-self.Q.diagonal().min(), 0.0))

    def index(self):
        return {tuple(int(v) for v in s): i for i, s in enumerate(self.states)}

    def scaled_states(self):
        return self.states / float(self.level)


def _as_numeric(m, rates=None):
    if isinstance(m, NumericModel):
        if rates:
            return numeric_model(m.model.with_params(rates))
        return m
    if isinstance(m, PepaModel):
        return numeric_model(m.with_params(rates))
    raise TypeError("expected PepaModel or NumericModel")


def explore_state_space(m, x0=None, cap=None, rates=None, level=1):
    """Breadth-first construction of the reachable CTMC.

    Parameters
    ----------
    m : PepaModel or NumericModel
    x0 : array_like of int, optional
        Start state; defaults to the model's initial counts.
    cap : int, optional
        Maximum number of states (default :func:`default_cap`).

    Raises
    ------
    StateSpaceCapError
        When more than ``cap`` states are discovered.
    """
    nm = _as_numeric(m, rates)
    cap = default_cap() if cap is None else int(cap)
    x0 = nm.x0 if x0 is None else np.asarray(x0)
    if np.any(x0 != np.round(x0)) or np.any(x0 < 0):
        raise ValueError("start state must be a nonnegative integer vector")
    x0 = tuple(int(v) for v in x0)
    if len(x0) != nm.d:
        raise ValueError(f"start state must have length {nm.d}")
    t = nm.tables
    args = kernels.rate_args(t)
    rate_fn = kernels.backend().label_rates
    vecs = np.array([l.vector for l in nm.labels], dtype=np.int64).reshape(len(nm.labels), nm.d)
    index = {x0: 0}
    order = [x0]
    queue = deque([x0])
    src, dst, lab, rate = [], [], [], []
    while queue:
        x = queue.popleft()
        i = index[x]
        xa = np.array(x, dtype=float)
        f = rate_fn(xa, *args)
        for j in np.nonzero(f > 0)[0]:
            y = tuple(int(v) for v in np.add(x, vecs[j]))
            k = index.get(y)
            if k is None:
                if len(order) >= cap:
                    raise StateSpaceCapError(cap, len(order), len(queue) + 1)
                k = len(order)
                index[y] = k
                order.append(y)
                queue.append(y)
            src.append(i)
            dst.append(k)
            lab.append(int(j))
            rate.append(float(f[j]))
    n = len(order)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    rate = np.asarray(rate, dtype=float)
    off = sp.coo_matrix((rate, (src, dst)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    out = np.asarray(off.sum(axis=1)).ravel()
    Q = (off - sp.diags(out)).tocsr()
    Q.sort_indices()
    return CtmcModel(np.array(order, dtype=np.int64).reshape(n, nm.d), Q, 0,
                     (src, dst, np.asarray(lab, dtype=np.int64), rate),
                     tuple(l.name for l in nm.labels), nm.names, int(level))


def is_irreducible(c):
    if c.n <= 1:
        return True
    ncomp, _ = connected_components(c.Q, directed=True, connection="strong")
    return ncomp == 1


def steady_state(c, method=None, tol=1e-12, max_iter=10_000_000):
    """Stationary distribution ``pi Q = 0``, ``sum pi = 1``.

    Dense LU on the constrained system up to 10,000 states, power iteration
    on the (lazy) uniformised kernel beyond that.

    Parameters
    ----------
    method : {"dense", "power"}, optional
        Force a solver.

    Raises
    ------
    ReducibleChainError
        If the positive-rate digraph is not strongly connected.
    """
    if c.n == 1:
        return np.ones(1)
    if not is_irreducible(c):
        raise ReducibleChainError(f"chain with {c.n} states is not irreducible")
    method = method or ("dense" if c.n <= DENSE_LIMIT else "power")
    if method == "dense":
        A = c.Q.T.toarray()
        A[-1, :] = 1.0
        b = np.zeros(c.n)
        b[-1] = 1.0
        pi = np.linalg.solve(A, b)
    elif method == "power":
        m = c.m * 1.05  # laziness keeps the kernel aperiodic
        K = (sp.identity(c.n, format="csr") + c.Q / m).T.tocsr()
        pi = np.full(c.n, 1.0 / c.n)
        scale = c.m
        for it in range(max_iter):
            nxt = K @ pi
            nxt /= nxt.sum()
            if it % 64 == 0 and np.max(np.abs(c.Q.T @ nxt)) < tol * scale:
                pi = nxt
                break
            pi = nxt
        else:
            raise ArithmeticError("power iteration did not converge")
    else:
        raise ValueError(f"unknown method {method!r}")
    pi = np.where(pi < 0, 0.0, pi)
    return pi / pi.sum()


def poisson_window(mt, tol=1e-12):
    """Truncation points ``(L, R)`` and weights of ``Poisson(mt)`` with total
    neglected mass below ``tol``."""
    if mt == 0:
        return 0, 0, np.ones(1)
    lo = int(poisson.ppf(tol / 4, mt))
    lo = max(lo - 1, 0)
    hi = int(poisson.isf(tol / 4, mt)) + 1
    k = np.arange(lo, hi + 1)
    w = poisson.pmf(k, mt)
    return lo, hi, w


def transient_distribution(c, t, p0=None, tol=1e-12):
    """``p0 exp(tQ)`` by uniformisation.

    Parameters
    ----------
    p0 : array_like, optional
        Initial distribution (or a 2-D array of them, one per row); the
        point mass at the start state by default.
    """
    if p0 is None:
        p0 = np.zeros(c.n)
        p0[c.start] = 1.0
    v = np.array(p0, dtype=float)
    if t < 0:
        raise ValueError("t must be nonnegative")
    m = c.m
    if t == 0 or m == 0:
        return v
    lo, hi, w = poisson_window(m * t, tol)
    KT = (sp.identity(c.n, format="csr") + c.Q / m).T.tocsr()
    vt = v.T
    acc = np.zeros_like(vt)
    for k in range(hi + 1):
        if k >= lo:
            acc += w[k - lo] * vt
        if k < hi:
            vt = KT @ vt
    acc /= w.sum()
    return acc.T


def singleton_ctmc(m, type_name, rates=None):
    """Chain of one instance of a nonsynchronised component type.

    ``q_ij = sum_l r_l^{C_i -> C_j}`` and ``q_ii = -sum_j q_ij``.

    Raises
    ------
    ModelError
        If the type synchronises on any action.
    """
    nm = _as_numeric(m, rates)
    comp = next((c for c in nm.components if c.name == type_name), None)
    if comp is None:
        raise KeyError(type_name)
    st = analyze_structure(nm.model)
    ti = [c.name for c in nm.components].index(type_name)
    for act, groups in st.groups.items():
        for members, _ in groups:
            if ti in members:
                raise ModelError(f"{type_name} synchronises on {act}")
    idx = list(comp.indices)
    pos = {g: k for k, g in enumerate(idx)}
    k = len(idx)
    Q = np.zeros((k, k))
    for l in nm.labels:
        if l.pre[0] in pos:
            Q[pos[l.pre[0]], pos[l.post[0]]] += l.branch_rates[0].value
    Q -= np.diag(Q.sum(axis=1))
    start = next((pos[i] for i in idx if nm.x0[i] > 0), 0)
    names = tuple(nm.names[i] for i in idx)
    return CtmcModel(np.eye(k, dtype=np.int64), sp.csr_matrix(Q), start,
                     (np.zeros(0, np.int64),) * 3 + (np.zeros(0),), (), names, 1)


def scale_family(m, x0=None, levels=(1,), cap=None, rates=None):
    """Density-dependent family: one chain per level ``n`` from ``n * x0``."""
    nm = _as_numeric(m, rates)
    x0 = nm.x0 if x0 is None else np.asarray(x0, dtype=np.int64)
    return [explore_state_space(nm, n * x0, cap=cap, level=n) for n in levels]


def expected_state(c, dist):
    """``sum_x (x / n) pi(x)`` on the scaled space."""
    return np.asarray(dist) @ c.scaled_states()
