"""Structural and analytic convergence machinery.

Invariants of the activity matrix, the piecewise-linear region decomposition
of the fluid vector field, eigenvalue and block-structure checks,
equilibrium prediction and convergence certificates.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog, minimize_scalar

from .errors import EquilibriumError
from .fluid import (FluidSystem, build_fluid_system, default_step, detect_equilibrium,
                    evaluate_rhs, integrate, region_name)

# ---------------------------------------------------------------------------
# invariants


@dataclass(frozen=True, eq=False)
class InvariantBasis:
    """Integer basis of ``{v : v^T C = 0}``.

    Attributes
    ----------
    vectors : ndarray of int64, shape (k, d)
        Basis rows (component rows first, then extra rows).
    component_vectors : ndarray of int64
        Indicator row of each component type.
    extra_vectors : ndarray of int64
        Rows beyond component conservation, each zero at the first
        derivative of every type.
    names : tuple of str
        Coordinate names.
    """

    vectors: np.ndarray
    component_vectors: np.ndarray
    extra_vectors: np.ndarray
    names: tuple

    @property
    def rank(self):
        return self.vectors.shape[0]

    def values(self, x):
        """``V x`` for a state (or states as rows)."""
        return np.asarray(x, dtype=float) @ self.vectors.T.astype(float)

    def describe(self):
        """Human-readable linear forms, one per basis row."""
        return [linear_form(v, self.names) for v in self.vectors]


def linear_form(v, names):
    """``(0, -1, 1)`` over ``(a, b, c)`` -> ``"c - b"`` (positive terms first)."""
    pos = [(int(c), n) for c, n in zip(v, names) if c > 0]
    neg = [(int(-c), n) for c, n in zip(v, names) if c < 0]
    out = ""
    for k, (c, n) in enumerate(pos + neg):
        term = n if c == 1 else f"{c}*{n}"
        if k == 0:
            out = term if k < len(pos) else "-" + term
        else:
            out += (" + " if k < len(pos) else " - ") + term
    return out or "0"


def _primitive(row):
    g = 0
    for v in row:
        g = math.gcd(g, int(v))
    return [int(v) // g for v in row] if g > 1 else [int(v) for v in row]


def _int_rref(rows, ncols):
    """Fraction-free reduced row echelon form of an integer matrix.

    Rows are kept primitive (gcd 1) after each elimination step.  Returns the
    nonzero rows and their pivot columns.
    """
    A = [[int(v) for v in r] for r in rows]
    pivots = []
    r = 0
    for c in range(ncols):
        p = next((i for i in range(r, len(A)) if A[i][c] != 0), None)
        if p is None:
            continue
        A[r], A[p] = A[p], A[r]
        if A[r][c] < 0:
            A[r] = [-v for v in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c] != 0:
                a, b = A[r][c], A[i][c]
                A[i] = _primitive([a * vi - b * vr for vi, vr in zip(A[i], A[r])])
        A[r] = _primitive(A[r])
        pivots.append(c)
        r += 1
        if r == len(A):
            break
    return A[:r], pivots


def integer_null_space(A):
    """Integer basis of the right null space of an integer matrix ``A``."""
    A = np.asarray(A)
    m, n = A.shape
    R, piv = _int_rref(A.tolist(), n) if m else ([], [])
    free = [c for c in range(n) if c not in piv]
    lcm = 1
    for r, c in zip(R, piv):
        lcm = lcm * abs(r[c]) // math.gcd(lcm, abs(r[c]))
    basis = []
    for f in free:
        v = [0] * n
        v[f] = lcm
        for r, c in zip(R, piv):
            v[c] = -r[f] * lcm // r[c]
        basis.append(_primitive(v))
    return np.array(basis, dtype=np.int64).reshape(len(basis), n)


def _readable_sign(row):
    pos = sum(1 for v in row if v > 0)
    neg = sum(1 for v in row if v < 0)
    return [-v for v in row] if neg > pos else list(row)


def find_invariants(mats):
    """Conservation laws of the fluid and stochastic dynamics.

    The left null space of ``C`` is computed with exact integer elimination.
    Component rows are the per-type indicators; every other basis vector is
    reduced to be zero at the first derivative of each type, then put in
    canonical echelon form with the sign giving fewer negative entries.

    Parameters
    ----------
    mats : ActivityMatrices
    """
    C = np.asarray(mats.C, dtype=np.int64)
    d = C.shape[0]
    names = tuple(dv.name for dv in mats.derivatives) or tuple(f"x{i}" for i in range(d))
    groups = {}
    for dv in mats.derivatives:
        groups.setdefault(dv.component, []).append(dv.index)
    comp = np.zeros((len(groups), d), dtype=np.int64)
    for k, idx in enumerate(groups.values()):
        comp[k, idx] = 1
    firsts = [idx[0] for idx in groups.values()]

    if C.shape[1] == 0:
        null = np.eye(d, dtype=np.int64)
    else:
        null = integer_null_space(C.T)
    reduced = []
    for v in null:
        w = v.copy()
        for k, f in enumerate(firsts):
            w = w - w[f] * comp[k]
        if np.any(w):
            reduced.append(w)
    extra, _ = _int_rref(reduced, d) if reduced else ([], [])
    extra = np.array([_readable_sign(r) for r in extra], dtype=np.int64).reshape(len(extra), d)
    if C.shape[1] == 0:
        vectors = np.eye(d, dtype=np.int64)
    else:
        vectors = np.vstack([comp, extra]) if len(extra) else comp.copy()
    for a in (vectors, comp, extra):
        a.setflags(write=False)
    return InvariantBasis(vectors, comp, extra, names)


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True, eq=False)
class PiecewiseLinearSystem:
    """``F(x) = Q_sigma x`` on each region of the min-branch decomposition.

    Attributes
    ----------
    system : FluidSystem
    min_terms : tuple of MinTerm
    regions : dict
        Region id -> coefficient matrix ``Q_sigma`` (d x d).
    feasible : dict
        Region id -> True if the region has interior points in the
        nonnegative orthant (False regions are unreachable in the interior).
    """

    system: FluidSystem
    min_terms: tuple
    regions: dict
    feasible: dict

    @property
    def n_regions(self):
        return len(self.regions)

    def signature(self, rid):
        return self.system.region_signature(rid)

    def region_id(self, signature):
        return self.system.region_id(signature)

    def current_region(self, x):
        return self.system.region_of(x)

    def describe_region(self, rid):
        """Inequalities defining region ``rid`` as text."""
        names = self.system.names
        parts = []
        for mt, k in zip(self.min_terms, self.signature(rid)):
            # a common rate cancels from every comparison
            rates = [1.0] * len(mt.idx) if len(set(mt.rates)) == 1 else mt.rates
            lhs = _mono(rates[k], names[mt.idx[k]])
            for j in range(len(mt.idx)):
                if j != k:
                    op = "<" if j < k else "<="
                    parts.append(f"{lhs} {op} {_mono(rates[j], names[mt.idx[j]])}")
        return ", ".join(parts) if parts else "all states"

    def matrix(self, rid):
        return self.regions[rid]


def _mono(r, name):
    return name if r == 1 else f"{r:.12g}*{name}"


def _region_matrix(nm, signature):
    Q = np.zeros((nm.d, nm.d))
    for l, mti in zip(nm.labels, nm.label_min_term):
        finite = [(i, a.value) for i, a in zip(l.pre, l.apparent) if not a.passive]
        if mti >= 0:
            mt = nm.min_terms[mti]
            k = signature[mti]
            i, r = mt.idx[k], mt.rates[k]
        else:
            i, r = finite[0]
        Q[:, i] += np.asarray(l.vector, dtype=float) * l.factor * r
    return Q


def _region_feasible(nm, signature):
    d = nm.d
    A, b = [], []
    # variables: x (d), eps; maximise eps
    for mt, k in zip(nm.min_terms, signature):
        for j in range(len(mt.idx)):
            if j == k:
                continue
            row = np.zeros(d + 1)
            row[mt.idx[k]] += mt.rates[k]
            row[mt.idx[j]] -= mt.rates[j]
            row[d] = 1.0
            A.append(row)
            b.append(0.0)
    if not A:
        return True
    Aeq = np.zeros((1, d + 1))
    Aeq[0, :d] = 1.0
    c = np.zeros(d + 1)
    c[d] = -1.0
    res = linprog(c, A_ub=np.array(A), b_ub=np.array(b), A_eq=Aeq, b_eq=[1.0],
                  bounds=[(0, None)] * d + [(None, 1.0)], method="highs")
    return bool(res.status == 0 and -res.fun > 1e-12)


def decompose_regions(sys):
    """Coefficient matrix of every branch signature.

    Substitutes the chosen argument of each min term into the rate
    functions; passive indicators are taken as 1 (the region matrices
    describe the interior of the orthant).

    Parameters
    ----------
    sys : FluidSystem or PepaModel or NumericModel
    """
    sys = build_fluid_system(sys)
    nm = sys.numeric
    regions, feas = {}, {}
    for rid in range(sys.n_regions):
        sig = sys.region_signature(rid)
        Q = _region_matrix(nm, sig)
        Q.setflags(write=False)
        regions[rid] = Q
        feas[rid] = _region_feasible(nm, sig)
    return PiecewiseLinearSystem(sys, nm.min_terms, regions, feas)


def sample_region_consistency(pls, samples=10_000, seed=0, scale=None):
    """Max ``||Q_sigma x - F(x)||_inf`` over random states sorted by region.

    Returns
    -------
    dict
        Region id -> (number of samples landing there, max error).
    """
    sys = pls.system
    rng = np.random.default_rng(seed)
    scale = float(max(sys.numeric.population, 1)) if scale is None else scale
    X = rng.random((samples, sys.d)) * scale
    from . import kernels
    rids = kernels.backend().region_ids(X, *kernels.region_args(sys.numeric.tables))
    out = {rid: [0, 0.0] for rid in pls.regions}
    for x, rid in zip(X, rids):
        e = float(np.max(np.abs(pls.regions[int(rid)] @ x - evaluate_rhs(sys, x)), initial=0.0))
        out[int(rid)][0] += 1
        out[int(rid)][1] = max(out[int(rid)][1], e)
    return {k: tuple(v) for k, v in out.items()}


# ---------------------------------------------------------------------------
# eigenvalues


@dataclass(frozen=True)
class EigenCheck:
    """Result of :func:`eigen_check`.

    Attributes
    ----------
    passed : bool
        Every eigenvalue is numerically zero or has negative real part.
    eigenvalues : tuple of complex
        Eigenvalues with near-coincident clusters replaced by their mean,
        sorted by (real, imag) descending.
    zero_count : int
    witnesses : tuple of complex
        Eigenvalues violating the condition.
    threshold : float
    """

    passed: bool
    eigenvalues: tuple
    zero_count: int
    witnesses: tuple
    threshold: float


def cluster_eigenvalues(ev, tol):
    """Replace each single-linkage cluster (distance < ``tol``) by its mean.

    Defective eigenvalues split by roughly ``eps^(1/k)`` for a Jordan block
    of size ``k``; averaging the cluster recovers them to rounding accuracy.
    """
    ev = np.asarray(ev, dtype=complex)
    n = len(ev)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(ev[i] - ev[j]) < tol:
                parent[find(i)] = find(j)
    out = ev.copy()
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    for members in groups.values():
        out[members] = ev[members].mean()
    return out


def eigen_check(Q, rel_threshold=1e-9, cluster_rel=1e-4):
    """Check that all eigenvalues of ``Q`` are zero or in the open left
    half-plane.

    The zero threshold is ``rel_threshold * rho(Q)`` (at least
    ``rel_threshold``); eigenvalues within ``cluster_rel * max(1, rho)`` of
    each other are averaged first.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.size == 0:
        return EigenCheck(True, (), 0, (), 0.0)
    ev = np.linalg.eigvals(Q)
    rho = float(np.max(np.abs(ev)))
    ev = cluster_eigenvalues(ev, cluster_rel * max(1.0, rho))
    thr = rel_threshold * max(rho, 1.0)
    ev = np.where(np.abs(ev.imag) < thr, ev.real + 0j, ev)
    ev = np.where(np.abs(ev) < thr, 0j, ev)
    order = np.lexsort((-ev.imag, -ev.real))
    ev = ev[order]
    zero = np.abs(ev) < thr
    bad = ~zero & (ev.real >= -thr)
    return EigenCheck(not bool(bad.any()), tuple(complex(v) for v in ev), int(zero.sum()),
                      tuple(complex(v) for v in ev[bad]), thr)


# ---------------------------------------------------------------------------
# block structure (two types, one synchronisation)


@dataclass
class BlockReport:
    """Outcome of :func:`block_structure_check`.

    ``applicable`` is False (with ``note``) when the model does not have the
    two-type/one-synchronisation shape; ``violations`` lists every failed
    structural condition.
    """

    applicable: bool
    passed: bool
    violations: list = field(default_factory=list)
    note: str = ""
    roles: dict = field(default_factory=dict)


def _two_type_roles(nm):
    if len(nm.components) != 2 or len(nm.min_terms) != 1:
        return None, "needs exactly two component types and one synchronisation"
    mt = nm.min_terms[0]
    if len(mt.idx) != 2:
        return None, "the synchronisation must have two cooperands"
    owner = {}
    for ci, c in enumerate(nm.components):
        for i in c.indices:
            owner[i] = ci
    cx, cy = owner[mt.idx[0]], owner[mt.idx[1]]
    if cx == cy:
        return None, "both cooperands belong to one type"
    shared = [l for l in nm.labels if l.shared]
    if any(l.action != mt.action for l in shared):
        return None, "other shared activities are present"
    return {"X": list(nm.components[cx].indices), "Y": list(nm.components[cy].indices),
            "x1": mt.idx[0], "y1": mt.idx[1], "r": mt.rates[0], "s": mt.rates[1]}, ""


def _is_gen_transpose(G, tol):
    off = G - np.diag(np.diag(G))
    return bool(np.all(off >= -tol) and np.all(np.abs(G.sum(axis=0)) <= tol))


def block_structure_check(pls, m=None, tol=1e-12):
    """Verify the block structure of both region matrices for a two-type,
    one-synchronisation model.

    In the region where ``X`` drives the synchronisation (``Q1``) the matrix
    must be block lower-triangular in ``(X, Y)`` order, the ``X`` block must
    be a transposed generator, the coupling block ``W`` must be nonzero only
    in the column of the synchronising ``X`` derivative with a negative
    entry at the synchronising ``Y`` derivative and zero column sum, and
    folding that column into the ``Y`` block must give a transposed
    generator.  The region where ``Y`` drives (``Q2``) is checked
    symmetrically.

    Parameters
    ----------
    pls : PiecewiseLinearSystem
        Region matrices (may be perturbed copies for fault injection).
    m : ignored
        Accepted for API symmetry; roles are read from ``pls``.
    """
    nm = pls.system.numeric
    roles, note = _two_type_roles(nm)
    if roles is None:
        return BlockReport(False, False, [], "skipped: " + note)
    names = nm.names
    viol = []
    scale = max(1.0, max(float(np.max(np.abs(Q))) for Q in pls.regions.values()))
    t = tol * scale
    for rid, (A, B, a1, b1) in ((0, ("X", "Y", "x1", "y1")), (1, ("Y", "X", "y1", "x1"))):
        Q = np.asarray(pls.regions[rid])
        I, J = roles[A], roles[B]
        ia, jb = roles[a1], roles[b1]
        tag = region_name(rid)
        if np.any(np.abs(Q[np.ix_(I, J)]) > t):
            viol.append(f"{tag}: block ({A} rows, {B} columns) is not zero")
        if not _is_gen_transpose(Q[np.ix_(I, I)], t):
            viol.append(f"{tag}: {A} block is not a transposed generator")
        W = Q[np.ix_(J, I)]
        col = I.index(ia)
        others = [k for k in range(len(I)) if k != col]
        if others and np.any(np.abs(W[:, others]) > t):
            viol.append(f"{tag}: coupling block has entries outside column {names[ia]}")
        w = W[:, col]
        row = J.index(jb)
        if not w[row] < -t:
            viol.append(f"{tag}: coupling entry at {names[jb]} is not negative")
        if np.any(np.delete(w, row) < -t):
            viol.append(f"{tag}: coupling column has negative off entries")
        if abs(w.sum()) > t:
            viol.append(f"{tag}: coupling column does not sum to zero")
        P = Q[np.ix_(J, J)].copy()
        P[:, row] += w
        if not _is_gen_transpose(P, t):
            viol.append(f"{tag}: folded {B} block is not a transposed generator")
    return BlockReport(True, not viol, viol, "", roles)


def sync_equilibrium_curve(pls, betas, side="X", population=None):
    """Equilibrium of one type's subsystem under a partial synchronisation
    share ``beta``.

    For ``side="X"`` the subsystem matrix is ``f(beta) = E + beta (Q1_X -
    E)``, where ``Q1_X`` is the ``X`` block of the region where ``X`` drives
    and ``E`` the ``X`` block where ``Y`` drives; its zero vector scaled to
    the ``X`` population is ``h(beta)``.  ``side="Y"`` swaps the roles.

    Returns
    -------
    ndarray, shape (len(betas), k)
        ``h(beta)`` per beta (NaN rows where the zero space is not
        one-dimensional).
    """
    nm = pls.system.numeric
    roles, note = _two_type_roles(nm)
    if roles is None:
        raise ValueError(note)
    idx = roles[side]
    drive, other = (0, 1) if side == "X" else (1, 0)
    A1 = np.asarray(pls.regions[drive])[np.ix_(idx, idx)]
    E = np.asarray(pls.regions[other])[np.ix_(idx, idx)]
    pop = float(sum(nm.x0[i] for i in idx)) if population is None else float(population)
    out = np.full((len(betas), len(idx)), np.nan)
    for k, b in enumerate(betas):
        ns = null_space(E + b * (A1 - E))
        if ns.shape[1] == 1:
            v = ns[:, 0]
            out[k] = pop * v / v.sum()
    return out


def _inf_h1(pls, side, pop):
    roles, _ = _two_type_roles(pls.system.numeric)
    first = roles[side].index(roles["x1" if side == "X" else "y1"])

    def h1(b):
        v = sync_equilibrium_curve(pls, [b], side, 1.0)[0, first]
        return np.inf if np.isnan(v) else v

    grid = np.linspace(0.0, 1.0, 101)
    vals = np.array([h1(b) for b in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(h1, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return float(min(vals[k], res.fun))


# ---------------------------------------------------------------------------
# equilibria


def dominating_region(traj, tail=0.25):
    """Region id holding over the trailing ``tail`` of the run, else None."""
    if len(traj.region_ids) == 0:
        return None
    if not traj.region_constant_since(tail):
        return None
    rid = traj.region_ids[-1]
    k = int(np.searchsorted(traj.times, (1.0 - tail) * traj.t_end))
    if np.any(traj.region_ids[k:] != rid):
        return None
    return int(rid)


def _inv_matrix(inv):
    return np.asarray(inv.vectors if isinstance(inv, InvariantBasis) else inv, dtype=float)


def predict_equilibrium(Q, inv, x0):
    """Solve ``Q h = 0`` with ``V h = V x0`` for the invariant rows ``V``.

    Raises
    ------
    EquilibriumError
        ``kind="underdetermined"`` if the constraints do not fix ``h``,
        ``"overdetermined"`` if they are inconsistent (including when ``Q``
        has no zero eigenvalue and ``x0`` violates ``h = 0``), and
        ``"negative"`` if the solution leaves the orthant.
    """
    Q = np.asarray(Q, dtype=float)
    V = _inv_matrix(inv)
    x0 = np.asarray(x0, dtype=float)
    d = Q.shape[0]
    A = np.vstack([Q, V])
    b = np.concatenate([np.zeros(d), V @ x0])
    scale = max(1.0, float(np.max(np.abs(A))))
    sv = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(sv > 1e-9 * scale * max(A.shape)))
    if rank < d:
        raise EquilibriumError("underdetermined",
                               f"zero space not fixed by {V.shape[0]} invariants "
                               f"(rank {rank} < {d})")
    h, *_ = np.linalg.lstsq(A, b, rcond=None)
    pop = max(1.0, float(np.max(np.abs(x0))))
    if np.max(np.abs(A @ h - b)) > 1e-8 * scale * pop:
        raise EquilibriumError("overdetermined", "no state satisfies Q h = 0 and the invariants")
    if np.any(h < -1e-9 * pop):
        raise EquilibriumError("negative", f"predicted equilibrium has negative entry {h.min():.3g}")
    return np.maximum(h, 0.0)


def zero_projection(Q, x0):
    """``lim exp(tQ) x0`` via the spectral projector onto the zero space.

    Valid when every nonzero eigenvalue has negative real part and the zero
    eigenvalue is semisimple.  Returns None if the projector is singular.
    """
    Q = np.asarray(Q, dtype=float)
    R = null_space(Q, rcond=1e-10)
    L = null_space(Q.T, rcond=1e-10)
    if R.shape[1] != L.shape[1] or R.shape[1] == 0:
        return None if R.shape[1] else np.zeros_like(np.asarray(x0, dtype=float))
    G = L.T @ R
    if np.linalg.cond(G) > 1e10:
        return None
    return R @ np.linalg.solve(G, L.T @ np.asarray(x0, dtype=float))


def _settle(sys, x0, t_first=None, t_max=None, max_steps=50_000_000):
    """Integrate in doubling chunks until an equilibrium is detected.

    Returns
    -------
    (Trajectory, ndarray or None, float)
        Last chunk, detected equilibrium, total time integrated.
    """
    nm = sys.numeric
    rates = [b.value for l in nm.labels for b in l.branch_rates if not b.passive and b.value > 0]
    rmin = min(rates) if rates else 1.0
    t_first = 50.0 / rmin if t_first is None else t_first
    t_max = 1e4 / rmin if t_max is None else t_max
    h = default_step(sys)
    x = np.asarray(x0, dtype=float)
    total, chunk, steps = 0.0, t_first, 0
    while True:
        traj = integrate(sys, x, chunk, step=h)
        total += chunk
        steps += traj.n_steps
        eq = detect_equilibrium(traj, sys)
        if eq is not None or total >= t_max or steps >= max_steps:
            return traj, eq, total
        x = traj.final
        chunk *= 2.0


def fluid_limit(sys, x0=None, t_max=None):
    """Numerical ``lim_{t->inf} x(t)``, or None if no equilibrium is found.

    The detected equilibrium is polished by :func:`predict_equilibrium` in
    the final region when that solve succeeds and lands within ``1e-6``
    (relative to the population) of it.
    """
    sys = build_fluid_system(sys)
    x0 = sys.x0 if x0 is None else np.asarray(x0, dtype=float)
    if not sys.numeric.labels:
        return x0.copy()
    traj, eq, _ = _settle(sys, x0, t_max=t_max)
    if eq is None:
        return None
    rid = sys.region_of(eq)
    pls = decompose_regions(sys)
    inv = find_invariants(sys.matrices)
    try:
        h = predict_equilibrium(pls.regions[rid], inv, x0)
    except EquilibriumError:
        return eq
    pop = max(1.0, float(np.sum(x0)))
    return h if np.max(np.abs(h - eq)) <= 1e-6 * pop else eq


# ---------------------------------------------------------------------------
# certificates


@dataclass
class ConvergenceCertificate:
    """Verdict on convergence of the fluid solution.

    Attributes
    ----------
    verdict : {"certified", "conditional", "inconclusive"}
    dominating_region : int or None
        Region id (display name via :func:`fluid.region_name`).
    signature : tuple or None
    switch_time : float or None
        Time after which the region is constant, when known (0 for regions
        pinned from the start; the last observed switch for empirical
        verdicts; None when only existence is proven).
    conditions : list of str
        Tests applied, with their outcome.
    predicted_limit : ndarray or None
    eigen : EigenCheck or None
    """

    verdict: str
    dominating_region: object = None
    signature: object = None
    switch_time: object = None
    conditions: list = field(default_factory=list)
    predicted_limit: object = None
    eigen: object = None

    @property
    def region_name(self):
        return None if self.dominating_region is None else region_name(self.dominating_region)

    def as_dict(self):
        return {
            "verdict": self.verdict,
            "dominating_region": self.region_name,
            "signature": None if self.signature is None else [int(s) for s in self.signature],
            "switch_time": None if self.switch_time is None else float(self.switch_time),
            "conditions": list(self.conditions),
            "predicted_limit": None if self.predicted_limit is None
            else [float(v) for v in self.predicted_limit],
            "eigenvalues": None if self.eigen is None
            else [[float(e.real), float(e.imag)] for e in self.eigen.eigenvalues],
        }


def _lp_max(c, V, b, d):
    res = linprog(-np.asarray(c, dtype=float), A_eq=V, b_eq=b, bounds=[(0, None)] * d,
                  method="highs")
    if res.status != 0:
        return None
    return float(-res.fun)


def pinned_branch(nm, mt, V, b, tol):
    """Argument index of ``mt`` that is minimal on the whole invariant
    polytope ``{x >= 0, V x = b}``, or None."""
    d = nm.d
    for k in range(len(mt.idx)):
        ok = True
        for j in range(len(mt.idx)):
            if j == k:
                continue
            c = np.zeros(d)
            c[mt.idx[k]] += mt.rates[k]
            c[mt.idx[j]] -= mt.rates[j]
            v = _lp_max(c, V, b, d)
            if v is None or v > tol:
                ok = False
                break
        if ok:
            return k
    return None


def _match_xy(nm):
    """Roles of the two-type, two-synchronisation X-Y shape, or None.

    The shape is: ``X1 -(alpha1)-> X2 -(alpha2)-> X1``; on the Y side
    ``Y1 -(alpha1)-> Y3``, ``Y1 -(c1)-> Y2 -(c2)-> Y1``, ``Y3 -(c3)-> Y4``,
    ``Y4 -(alpha2)-> Y2`` and ``Y4 -(c4)-> Y3``, with equal apparent rates on
    both sides of each synchronisation.
    """
    if len(nm.components) != 2 or len(nm.min_terms) != 2:
        return None
    cx = next((c for c in nm.components if len(c.indices) == 2), None)
    cy = next((c for c in nm.components if len(c.indices) == 4), None)
    if cx is None or cy is None:
        return None
    A, B = nm.min_terms
    if len(A.idx) != 2 or len(B.idx) != 2:
        return None
    X, Y = set(cx.indices), set(cy.indices)

    def split(mt):
        (i, ri), (j, rj) = zip(mt.idx, mt.rates)
        if i in X and j in Y:
            return i, j, ri, rj
        if j in X and i in Y:
            return j, i, rj, ri
        return None

    sa, sb = split(A), split(B)
    if sa is None or sb is None:
        return None
    x1, y1, a1, a1y = sa
    x2, y4, a2, a2y = sb
    if x1 == x2 or y1 == y4 or not (np.isclose(a1, a1y) and np.isclose(a2, a2y)):
        return None
    if any(len(l.pre) == 1 and l.pre[0] in X for l in nm.labels):
        return None
    sh_a = [l for l in nm.labels if l.action == A.action]
    sh_b = [l for l in nm.labels if l.action == B.action]
    if len(sh_a) != 1 or len(sh_b) != 1:
        return None
    la, lb = sh_a[0], sh_b[0]
    pa = dict(zip(la.pre, la.post))
    pb = dict(zip(lb.pre, lb.post))
    if pa.get(x1) != x2 or pb.get(x2) != x1:
        return None
    y3, y2 = pa.get(y1), pb.get(y4)
    if y3 is None or y2 is None or len({y1, y2, y3, y4}) != 4:
        return None
    indiv = {}
    for l in nm.labels:
        if not l.shared:
            indiv[(l.pre[0], l.post[0])] = indiv.get((l.pre[0], l.post[0]), 0.0) \
                + l.branch_rates[0].value
    want = {(y1, y2), (y2, y1), (y3, y4), (y4, y3)}
    if set(indiv) != want:
        return None
    return {"x1": x1, "x2": x2, "y1": y1, "y2": y2, "y3": y3, "y4": y4,
            "a1": a1, "a2": a2, "c1": indiv[(y1, y2)], "c2": indiv[(y2, y1)],
            "c3": indiv[(y3, y4)], "c4": indiv[(y4, y3)],
            "M": float(sum(nm.x0[i] for i in cx.indices)),
            "N": float(sum(nm.x0[i] for i in cy.indices)),
            "terms": (A, B)}


def _xy_dominance(nm, pinned, x0):
    """Eventual argmin of the unpinned min term in the X-Y shape."""
    r = _match_xy(nm)
    if r is None:
        return None, []
    M, N = r["M"], r["N"]
    A, B = r["terms"]
    a1, a2, c1, c2, c3, c4 = (r[k] for k in ("a1", "a2", "c1", "c2", "c3", "c4"))
    karg = lambda mt, i: list(mt.idx).index(i)
    notes = []
    if pinned[1] is not None and pinned[0] is None and B.idx[pinned[1]] == r["y4"]:
        # y3 + y4 <= x2 for all t: y1 eventually exceeds M >= x1
        b1 = (2.0 + (a1 + c1) / c2) * M
        b2 = (2.0 * (c1 + c2) + a2) / c2 * M
        if N > M > 0 and (N > b1 or N > b2):
            notes.append(f"X-Y dominance: N={N:g} > min({b1:g}, {b2:g}) forces "
                         f"x1 < y1 eventually")
            return (karg(A, r["x1"]), pinned[1]), notes
        notes.append(f"X-Y dominance: N={N:g} does not exceed {min(b1, b2):g}")
    if pinned[0] is not None and pinned[1] is None and A.idx[pinned[0]] == r["y1"]:
        b1 = (2.0 + (a2 + c4) / c3) * M
        b2 = (2.0 * (c3 + c4) + a1) / c3 * M
        if N > M > 0 and (N > b1 or N > b2):
            notes.append(f"X-Y dominance: N={N:g} > min({b1:g}, {b2:g}) forces "
                         f"x2 < y4 eventually")
            return (pinned[0], karg(B, r["x2"])), notes
        notes.append(f"X-Y dominance: N={N:g} does not exceed {min(b1, b2):g}")
    return None, notes


def _two_type_dominance(pls, x0):
    """Eventual region for two two-state types sharing one action."""
    nm = pls.system.numeric
    roles, _ = _two_type_roles(nm)
    if roles is None:
        return None, []
    if len(roles["X"]) != 2 or len(roles["Y"]) != 2:
        return None, ["two-type dominance: needs two derivatives per type"]
    M = float(sum(x0[i] for i in roles["X"]))
    N = float(sum(x0[i] for i in roles["Y"]))
    r, s = roles["r"], roles["s"]
    notes = []
    if M > 0:
        cX = _inf_h1(pls, "X", M)
        if r * cX * M > s * N:
            notes.append(f"two-type dominance: r*inf h1 = {r * cX * M:.6g} > s*N = {s * N:.6g}")
            return 1, notes
        notes.append(f"two-type dominance: r*inf h1 = {r * cX * M:.6g} <= s*N = {s * N:.6g}")
    if N > 0:
        cY = _inf_h1(pls, "Y", N)
        if s * cY * N > r * M:
            notes.append(f"two-type dominance: s*inf g1 = {s * cY * N:.6g} > r*M = {r * M:.6g}")
            return 0, notes
        notes.append(f"two-type dominance: s*inf g1 = {s * cY * N:.6g} <= r*M = {r * M:.6g}")
    return None, notes


def _predict(Q, inv, x0, pinned_from_start):
    if pinned_from_start:
        h = zero_projection(Q, x0)
        if h is not None:
            return h, None
    try:
        return predict_equilibrium(Q, inv, x0), None
    except EquilibriumError as e:
        return None, str(e)


def convergence_certificate(m, x0=None, rates=None, t_max=None):
    """Certify (or not) convergence of the fluid solution and its limit.

    Tests, in order:

    1. invariant pinning: each min term whose branch is fixed on the whole
       invariant polytope of ``x0`` (linear programs); if all are pinned the
       region holds for all ``t`` and the limit is the zero-space
       projection of ``x0``;
    2. population dominance for the X-Y shape (explicit inequalities on
       ``N``, ``M`` and the rates) and for two two-state types with one
       shared action (``r inf h1 > s N`` and its mirror);
    3. empirical: integrate until steady, take the region dominating the
       trailing quarter and check its eigenvalues (``conditional``).

    A ``certified`` verdict always carries a passed eigenvalue check.
    """
    sys = build_fluid_system(m, rates) if not isinstance(m, FluidSystem) else m
    nm = sys.numeric
    x0 = sys.x0 if x0 is None else np.asarray(x0, dtype=float)
    pls = decompose_regions(sys)
    inv = find_invariants(sys.matrices)
    V = inv.vectors.astype(float)
    b = V @ x0
    tol = 1e-9 * max(1.0, float(np.max(np.abs(x0))))
    cond = []

    pinned = [pinned_branch(nm, mt, V, b, tol) for mt in nm.min_terms]
    for mt, k in zip(nm.min_terms, pinned):
        if k is not None:
            cond.append(f"invariant pinning: {mt.describe(nm.names)} attains its minimum at "
                        f"{nm.names[mt.idx[k]]} for all t")
        else:
            cond.append(f"invariant pinning: {mt.describe(nm.names)} not pinned")

    sig, switch, from_start = None, None, False
    if all(k is not None for k in pinned):
        sig, switch, from_start = tuple(pinned), 0.0, True
    else:
        s2, notes = _xy_dominance(nm, pinned, x0)
        cond += notes
        if s2 is not None:
            sig = s2
        else:
            rid2, notes = _two_type_dominance(pls, x0)
            cond += notes
            if rid2 is not None:
                sig = sys.region_signature(rid2)

    if sig is not None:
        rid = sys.region_id(sig)
        ec = eigen_check(pls.regions[rid])
        cond.append(f"eigenvalue check of {region_name(rid)}: "
                    + ("passed" if ec.passed else f"failed {ec.witnesses}"))
        if ec.passed:
            h, err = _predict(pls.regions[rid], inv, x0, from_start)
            if err:
                cond.append(f"equilibrium prediction: {err}")
            if h is not None:
                return ConvergenceCertificate("certified", rid, sig, switch, cond, h, ec)

    traj, eq, total = _settle(sys, x0, t_max=t_max)
    rid = dominating_region(traj, 0.25)
    if rid is None:
        cond.append("empirical: no region dominates the trailing quarter of the run")
        return ConvergenceCertificate("inconclusive", conditions=cond,
                                      predicted_limit=None if eq is None else eq)
    ec = eigen_check(pls.regions[rid])
    cond.append(f"empirical: {region_name(rid)} dominates after t={total:g}; eigenvalue check "
                + ("passed" if ec.passed else "failed"))
    if not ec.passed:
        return ConvergenceCertificate("inconclusive", rid, sys.region_signature(rid), None,
                                      cond, eq, ec)
    h, err = _predict(pls.regions[rid], inv, x0, False)
    if err:
        cond.append(f"equilibrium prediction: {err}")
    if h is None:
        h = eq
    last = traj.last_switch_time
    switch = (total - traj.t_end + last) if last is not None else None
    return ConvergenceCertificate("conditional", rid, sys.region_signature(rid), switch, cond,
                                  h, ec)
