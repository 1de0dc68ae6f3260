"""Markov-kernel machinery: uniformised kernel, adjoint, additive
reversibilisation, spectral gap, Log-Sobolev bounds and the per-level
condition report."""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .ctmc import _as_numeric, explore_state_space, steady_state
from .errors import ReducibleChainError

ZERO_REL = 1e-9
DENSE_EIG = 4000
NUMERIC_ALPHA_CAP = 64


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def kernel(c, sparse=False):
    """Row-stochastic kernel ``K = I + Q/m`` with ``m = max_i(-Q_ii)``.

    Raises
    ------
    ValueError
        If ``m = 0`` (no transitions).
    """
    m = c.m
    if m <= 0:
        raise ValueError("chain has no transitions (m = 0)")
    K = sp.identity(c.n, format="csr") + c.Q / m
    return K.tocsr() if sparse else _dense(K)


def adjoint(c_or_Q, pi):
    """Adjoint generator ``Q*(y, x) = Q(x, y) pi(x) / pi(y)``.

    Accepts a CtmcModel or a generator (dense or sparse).  The result has
    zero row sums whenever ``pi Q = 0``.

    Raises
    ------
    ValueError
        If ``pi`` has a nonpositive entry.
    """
    Q = c_or_Q.Q if hasattr(c_or_Q, "Q") else c_or_Q
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0):
        raise ValueError("adjoint needs a strictly positive distribution")
    D = sp.diags(pi)
    Dinv = sp.diags(1.0 / pi)
    out = Dinv @ sp.csr_matrix(Q).T @ D
    return out.tocsr() if sp.issparse(Q) else out.toarray()


def _sym(M, pi):
    """``D^{1/2} M D^{-1/2}`` symmetrised (exactly symmetric in theory)."""
    s = np.sqrt(pi)
    if sp.issparse(M):
        S = sp.diags(s) @ M @ sp.diags(1.0 / s)
        return ((S + S.T) * 0.5).tocsr()
    S = (s[:, None] * M) / s[None, :]
    return 0.5 * (S + S.T)


def reversibilization(c, pi):
    """``M = I - (K + K*)/2``, similarity-symmetrised by ``pi``."""
    K = kernel(c, sparse=c.n > DENSE_EIG)
    Kstar = adjoint(K, pi)
    I = sp.identity(c.n, format="csr") if sp.issparse(K) else np.eye(c.n)
    return _sym(I - 0.5 * (K + Kstar), pi)


def _smallest_two(S):
    if not sp.issparse(S):
        return np.linalg.eigvalsh(S)
    rho = float(abs(S).sum(axis=1).max())
    vals = eigsh(S, k=min(3, S.shape[0] - 1), sigma=-1e-6 * rho, which="LM",
                 return_eigenvectors=False)
    return np.sort(vals)


def _gap(ev, what):
    ev = np.sort(np.asarray(ev, dtype=float))
    rho = max(float(np.max(np.abs(ev))), 1e-300)
    thr = ZERO_REL * rho
    zero = np.abs(ev) < thr
    if zero.sum() > 1:
        raise ReducibleChainError(f"{what} has {int(zero.sum())} zero eigenvalues")
    pos = ev[~zero]
    return float(pos.min()) if len(pos) else 0.0


def spectral_gap(c, pi=None):
    """Spectral gap ``lambda`` of the kernel and ``sigma`` of the generator.

    ``lambda`` is the smallest nonzero eigenvalue of ``I - (K + K*)/2`` and
    ``sigma`` the smallest nonzero eigenvalue of ``-(Q + Q*)/2``, both
    computed on their ``pi``-symmetrised forms; ``sigma = m * lambda``.

    Returns
    -------
    (lambda, sigma) : tuple of float
        ``(0.0, 0.0)`` for a single-state chain.

    Raises
    ------
    ReducibleChainError
        More than one numerically zero eigenvalue.
    """
    if c.n == 1:
        return 0.0, 0.0
    pi = steady_state(c) if pi is None else np.asarray(pi, dtype=float)
    lam = _gap(_smallest_two(reversibilization(c, pi)), "I - (K+K*)/2")
    big = c.n > DENSE_EIG
    Q = c.Q if big else _dense(c.Q)
    G = -0.5 * (Q + adjoint(Q, pi))
    sigma = _gap(_smallest_two(_sym(sp.csr_matrix(G) if big else G, pi)), "-(Q+Q*)/2")
    return lam, sigma


@dataclass(frozen=True)
class LogSobolevBounds:
    """``lower <= alpha <= upper``; ``boundary`` marks ``pi* = 1/2`` where the
    lower bound is the continuous extension ``lambda / 2``."""

    lower: float
    upper: float
    boundary: bool = False

    def __iter__(self):
        return iter((self.lower, self.upper))


def logsobolev_bounds(lam, pi_star):
    """Bracket ``lambda (1 - 2 pi*) / log(1/pi* - 1) <= alpha <= lambda / 2``.

    Raises
    ------
    ValueError
        If ``pi_star`` is outside ``(0, 1/2]``.
    """
    if not 0 < pi_star <= 0.5 + 1e-15:
        raise ValueError("pi* must lie in (0, 1/2]")
    upper = lam / 2.0
    if abs(pi_star - 0.5) < 1e-12:
        return LogSobolevBounds(upper, upper, True)
    return LogSobolevBounds(lam * (1.0 - 2.0 * pi_star) / math.log(1.0 / pi_star - 1.0), upper)


def _xlogx_excess(u):
    """``(1 + u) log(1 + u) - u`` without cancellation for small ``u``."""
    out = np.empty_like(u)
    small = np.abs(u) < 1e-3
    us = u[small]
    out[small] = us * us * (0.5 - us * (1.0 / 6.0 - us * (1.0 / 12.0 - us / 20.0)))
    ub = u[~small]
    out[~small] = (1.0 + ub) * np.log1p(ub) - ub
    return out


def _ratios(F, W, pi):
    """``E / L`` and its gradient for each column of ``F`` (``F >= 0``).

    ``E = 1/2 sum_{x,y} W(x, y) (f(x) - f(y))^2`` in difference form and
    ``L = N sum pi ((1+u) log(1+u) - u)`` with ``u = f^2/N - 1`` (also in
    difference form), both accurate near constant ``f``.
    """
    diff = F[:, None, :] - F[None, :, :]
    E = 0.5 * np.einsum("xy,xys->s", W, diff * diff)
    gE = 2.0 * np.einsum("xy,xys->xs", W, diff)
    N = pi @ (F * F)
    # f(x)^2 - N = sum_y pi(y) (f(x) - f(y)) (f(x) + f(y)), free of cancellation
    u = np.einsum("y,xys->xs", pi, diff * (F[:, None, :] + F[None, :, :])) / N
    L = N * (pi @ _xlogx_excess(u))
    with np.errstate(divide="ignore"):
        lg = np.where(F > 0, np.log1p(u), 0.0)
    gL = 2.0 * pi[:, None] * F * lg
    ok = L > 1e-300
    R = np.where(ok, E / np.where(ok, L, 1.0), np.inf)
    G = (gE - R * gL) / np.where(ok, L, 1.0)
    return R, np.where(ok, G, 0.0)


def logsobolev_numeric(c, pi=None, starts=32, iters=4000, seed=0):
    """Numeric Log-Sobolev constant ``min E(f, f) / L(f)``.

    ``E(f, f) = 1/2 sum (f(x) - f(y))^2 K(x, y) pi(x)`` and
    ``L(f) = sum f^2 log(f^2 / ||f||^2) pi``.  Projected gradient descent
    with backtracking on the unit ``pi``-sphere (``f >= 0`` is enough since
    ``E(|f|) <= E(f)``), run on ``starts`` random and indicator-shaped
    starts at once.  Near-constant functions approach ``lambda / 2``, so
    the returned value is ``min(best, lambda / 2)``.

    Raises
    ------
    ValueError
        More than 64 states.
    """
    if c.n > NUMERIC_ALPHA_CAP:
        raise ValueError(f"numeric Log-Sobolev constant is capped at {NUMERIC_ALPHA_CAP} states")
    if c.n == 1:
        return 0.0
    pi = steady_state(c) if pi is None else np.asarray(pi, dtype=float)
    K = kernel(c)
    W = pi[:, None] * K
    W = 0.5 * (W + W.T)
    np.fill_diagonal(W, 0.0)
    lam, _ = spectral_gap(c, pi)
    n = c.n
    rng = np.random.default_rng(seed)
    F = rng.random((n, max(starts, 1))) ** 3 + 1e-3
    for k in range(min(n, F.shape[1] // 2)):
        F[:, k] = 0.05
        F[k, k] = 1.0
    F /= np.sqrt(pi @ (F * F))
    R, G = _ratios(F, W, pi)
    step = np.ones(F.shape[1])
    active = np.isfinite(R)
    for _ in range(iters):
        if not active.any():
            break
        PF = pi[:, None] * F
        G = G - (np.sum(G * PF, axis=0) / np.sum(PF * PF, axis=0)) * PF
        gn2 = np.sum(G * G, axis=0)
        H = np.abs(F - step * G)
        H /= np.sqrt(pi @ (H * H))
        Rh, Gh = _ratios(H, W, pi)
        acc = active & (Rh <= R - 1e-4 * step * gn2)
        tiny = acc & (R - Rh <= 1e-15 * np.maximum(1.0, np.abs(R)))
        F[:, acc], R[acc], G[:, acc] = H[:, acc], Rh[acc], Gh[:, acc]
        step = np.where(acc, step * 2.0, step * 0.5)
        active &= (step > 1e-14) & (gn2 > 1e-24) & ~tiny
    best = float(np.min(R)) if np.isfinite(R).any() else np.inf
    return float(min(best, lam / 2.0))


@dataclass(frozen=True)
class SpectralReport:
    """Spectral summary of one concentration level.

    ``condition_ratio = log(1/pi*)^2 / sigma`` (0 for a single state).
    """

    n: int
    states: int
    m: float
    lam: float
    sigma: float
    pi_star: float
    alpha_lower: object
    alpha_upper: object
    alpha_numeric: object
    condition_ratio: float
    note: str = ""

    def as_dict(self):
        f = lambda v: None if v is None else float(v)
        return {"n": self.n, "states": self.states, "m": f(self.m), "lambda": f(self.lam),
                "sigma": f(self.sigma), "pi_star": f(self.pi_star),
                "alpha_lower": f(self.alpha_lower), "alpha_upper": f(self.alpha_upper),
                "alpha_numeric": f(self.alpha_numeric),
                "condition_ratio": f(self.condition_ratio), "note": self.note}


def level_report(c, n=None, numeric_alpha=True):
    """:class:`SpectralReport` of one chain."""
    n = c.level if n is None else n
    if c.n == 1:
        return SpectralReport(n, 1, c.m, 0.0, 0.0, 1.0, None, None, None, 0.0,
                              "single state")
    pi = steady_state(c)
    lam, sigma = spectral_gap(c, pi)
    ps = float(pi.min())
    b = logsobolev_bounds(lam, ps)
    an = logsobolev_numeric(c, pi) if numeric_alpha and c.n <= NUMERIC_ALPHA_CAP else None
    note = "pi* = 1/2: lower bound by continuity" if b.boundary else ""
    return SpectralReport(n, c.n, c.m, lam, sigma, ps, b.lower, b.upper, an,
                          math.log(1.0 / ps) ** 2 / sigma, note)


def condition_report(m, x0=None, levels=(1, 2, 3, 4), cap=None, numeric_alpha=True):
    """Per-level spectral reports of the density-dependent family."""
    nm = _as_numeric(m)
    base = nm.x0 if x0 is None else np.asarray(x0, dtype=np.int64)
    out = []
    for n in levels:
        c = explore_state_space(nm, n * base, cap=cap, level=n)
        out.append(level_report(c, n, numeric_alpha))
    return out


def ratio_trend(reports):
    """``"non-increasing"``, ``"non-decreasing"``, ``"constant"`` or
    ``"mixed"`` for the condition ratios (reported, never asserted)."""
    r = [rep.condition_ratio for rep in reports]
    d = np.diff(r)
    tol = 1e-12 * max(1.0, max(map(abs, r), default=1.0))
    if len(d) == 0 or np.all(np.abs(d) <= tol):
        return "constant"
    if np.all(d <= tol):
        return "non-increasing"
    if np.all(d >= -tol):
        return "non-decreasing"
    return "mixed"


def decay_envelope(c, t, pi=None, lam=None, alpha=None):
    """Bound ``pi(y) exp(2 + (lambda/alpha) log log(1/pi*)) exp(-m lambda t)``
    on ``|P_t(x, y) - pi(y)|``.

    ``alpha`` defaults to the Log-Sobolev lower bound, which makes the
    envelope the most conservative of the admissible ones.

    Returns
    -------
    ndarray
        One bound per target state ``y``.
    """
    pi = steady_state(c) if pi is None else np.asarray(pi, dtype=float)
    if lam is None:
        lam, _ = spectral_gap(c, pi)
    ps = float(pi.min())
    if alpha is None:
        alpha = logsobolev_bounds(lam, ps).lower
    pref = math.exp(2.0 + (lam / alpha) * math.log(math.log(1.0 / ps)))
    return pi * pref * math.exp(-c.m * lam * t)
