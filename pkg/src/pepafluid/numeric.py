"""Numerical vector form of a model.

Local derivatives, pre/post sets, labelled activities, activity matrices,
apparent rates and transition rate functions, plus flat rate tables consumed
by the compiled kernels.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

from .errors import ModelError
from .rates import RateValue
from .syntax import PepaModel, analyze_structure, validate_model


@dataclass(frozen=True)
class LocalDerivative:
    component: str
    name: str
    index: int


@dataclass(frozen=True)
class LabelledActivity:
    """One column of the activity matrix.

    Attributes
    ----------
    action : str
        Action type.
    edges : tuple of (str, str)
        ``(P_i, Q_i)`` per cooperand; a single edge for individual activities.
    pre, post : tuple of int
        Derivative indices of the ``P_i`` and ``Q_i``.
    branch_rates : tuple of RateValue
        ``r^{P_i -> Q_i}`` (parallel edges merged by summation).
    apparent : tuple of RateValue
        ``r_alpha(P_i)``.
    vector : tuple of int
        Transition vector over local derivatives.
    shared : bool
    """

    action: str
    edges: tuple
    pre: tuple
    post: tuple
    branch_rates: tuple
    apparent: tuple
    vector: tuple
    shared: bool

    @property
    def name(self):
        return f"{self.action}({','.join(f'{p}->{q}' for p, q in self.edges)})"

    @property
    def factor(self):
        """Product of branch probabilities ``r^{P->Q} / r_alpha(P)``."""
        f = 1.0
        for b, a in zip(self.branch_rates, self.apparent):
            f *= b.ratio(a)
        return f

    @property
    def pre_set(self):
        return frozenset(self.pre)

    @property
    def post_set(self):
        return frozenset(self.post)


@dataclass(frozen=True)
class ActivityMatrices:
    """Integer matrices of shape ``d x L``; column ``j`` is ``labels[j]``."""

    C: np.ndarray
    Cpre: np.ndarray
    Cpost: np.ndarray
    labels: tuple
    derivatives: tuple

    @property
    def label_names(self):
        return tuple(l.name for l in self.labels)


@dataclass(frozen=True)
class MinTerm:
    """``min_i r_i x[idx_i]`` shared by every label of one synchronisation."""

    action: str
    idx: tuple
    rates: tuple

    def describe(self, names):
        return "min(" + ", ".join(f"{_g(r)}*{names[i]}" for i, r in zip(self.idx, self.rates)) + ")"


def _g(v):
    return format(v, ".12g")


@dataclass(frozen=True)
class RateTables:
    """Flat arrays describing every transition rate function.

    ``f_j(x) = factor[j] * min_k arg_rate[k] * x[arg_idx[k]]`` over the finite
    arguments ``k`` in ``arg_ptr[j]:arg_ptr[j+1]``; passive arguments only
    contribute the indicator ``x[arg_idx[k]] > 0``.  Transition vectors are
    stored sparsely in ``chg_ptr/chg_idx/chg_val``.  Min terms with two or
    more finite arguments (region signature) are ``mt_ptr/mt_idx/mt_rate``.
    """

    d: int
    n_labels: int
    arg_ptr: np.ndarray
    arg_idx: np.ndarray
    arg_rate: np.ndarray
    arg_passive: np.ndarray
    factor: np.ndarray
    chg_ptr: np.ndarray
    chg_idx: np.ndarray
    chg_val: np.ndarray
    mt_ptr: np.ndarray
    mt_idx: np.ndarray
    mt_rate: np.ndarray


@dataclass(frozen=True)
class ComponentInfo:
    name: str
    indices: tuple
    population: int


@dataclass(frozen=True, eq=False)
class NumericModel:
    """Numerical representation of a validated model."""

    model: PepaModel
    derivatives: tuple
    components: tuple
    labels: tuple
    matrices: ActivityMatrices
    prepost: dict
    apparent_rates: dict
    min_terms: tuple
    label_min_term: tuple
    tables: RateTables
    x0: np.ndarray
    warnings: tuple = field(default=())

    @property
    def d(self):
        return len(self.derivatives)

    @property
    def names(self):
        return tuple(dv.name for dv in self.derivatives)

    def index(self, name):
        for dv in self.derivatives:
            if dv.name == name:
                return dv.index
        raise KeyError(name)

    @property
    def has_passive(self):
        return bool(self.tables.arg_passive.any())

    @property
    def max_branch_rate(self):
        rates = [b.value for l in self.labels for b in l.branch_rates if not b.passive]
        return max(rates) if rates else 0.0

    @property
    def population(self):
        return int(sum(c.population for c in self.components))

    def rates(self, x):
        """Vector of transition rates ``f(x, l)`` for every label."""
        x = np.asarray(x, dtype=float)
        out = np.empty(len(self.labels))
        t = self.tables
        for j in range(len(self.labels)):
            out[j] = _label_rate(x, t, j)
        return out


def _label_rate(x, t, j):
    lo, hi = t.arg_ptr[j], t.arg_ptr[j + 1]
    best = np.inf
    for k in range(lo, hi):
        v = x[t.arg_idx[k]]
        if t.arg_passive[k]:
            if v <= 0:
                return 0.0
        else:
            v = v * t.arg_rate[k]
            if v < best:
                best = v
    return t.factor[j] * best


def _as_numeric(m):
    return m if isinstance(m, NumericModel) else numeric_model(m)


@lru_cache(maxsize=128)
def numeric_model(m):
    """Build (and cache) the numerical representation of ``m``.

    Raises
    ------
    ModelError
        On any validation error, or an unsynchronised passive activity
        (its rate is undefined).
    """
    report = validate_model(m)
    report.raise_for_errors()
    st = analyze_structure(m)

    derivatives, comps = [], []
    for t in st.types:
        idx = []
        for name in t.derivatives:
            idx.append(len(derivatives))
            derivatives.append(LocalDerivative(t.name, name, len(derivatives)))
        comps.append((t, tuple(idx)))
    pos = {dv.name: dv.index for dv in derivatives}
    d = len(derivatives)

    counts = m.init_counts()
    x0 = np.zeros(d, dtype=np.int64)
    for name, c in counts.items():
        x0[pos[name]] += c
    components = tuple(ComponentInfo(t.name, idx, int(x0[list(idx)].sum()))
                       for t, idx in comps)

    # merged branch rates and apparent rates per (P, action)
    branches = {}
    for name, plist in st.prefixes.items():
        for act, rate, target in plist:
            key = (name, act)
            br = branches.setdefault(key, {})
            br[target] = br[target] + rate if target in br else rate
    apparent = {}
    for key, br in branches.items():
        tot = None
        for r in br.values():
            tot = r if tot is None else tot + r
        apparent[key] = tot

    prepost = {}
    for act in st.action_order:
        pre = tuple(dv.index for dv in derivatives if (dv.name, act) in branches)
        post = {dv.name: tuple(pos[q] for q in branches[(dv.name, act)])
                for dv in derivatives if (dv.name, act) in branches}
        prepost[act] = (pre, post)

    labels_by_action = []
    min_terms = []
    for act in st.action_order:
        in_group = {}
        for gi, (members, blocked) in enumerate(st.groups.get(act, [])):
            for t in members:
                in_group[t] = (gi, blocked)
        acts = []  # (edges, min term index or -1, shared)
        pre_all, _ = prepost[act]
        for i in pre_all:
            dv = derivatives[i]
            if st.type_of[dv.name] in in_group:
                continue
            if apparent[(dv.name, act)].passive:
                raise ModelError(f"{dv.name} performs {act} passively with no partner; "
                                 "its rate is undefined")
            for q in branches[(dv.name, act)]:
                acts.append((((dv.name, q),), -1, False))
        for members, blocked in st.groups.get(act, []):
            if blocked:
                continue
            pre = [i for i in pre_all if st.type_of[derivatives[i].name] in members]
            finite = [i for i in pre if not apparent[(derivatives[i].name, act)].passive]
            mt = -1
            if len(finite) >= 2:
                mt = len(min_terms)
                min_terms.append(MinTerm(act, tuple(finite), tuple(
                    apparent[(derivatives[i].name, act)].value for i in finite)))
            choices = [list(branches[(derivatives[i].name, act)]) for i in pre]
            for combo in product(*choices):
                edges = tuple((derivatives[i].name, q) for i, q in zip(pre, combo))
                acts.append((edges, mt, True))
        built = []
        for edges, mt, shared in acts:
            pre = tuple(pos[p] for p, _ in edges)
            post = tuple(pos[q] for _, q in edges)
            vec = [0] * d
            for p in pre:
                vec[p] -= 1
            for q in post:
                vec[q] += 1
            lab = LabelledActivity(
                act, edges, pre, post,
                tuple(branches[(p, act)][q] for p, q in edges),
                tuple(apparent[(p, act)] for p, _ in edges),
                tuple(vec), shared)
            built.append((lab.name, lab, mt))
        built.sort(key=lambda e: e[0])
        labels_by_action.extend(built)
    labels = tuple(b[1] for b in labels_by_action)
    label_mt = tuple(b[2] for b in labels_by_action)
    mats = build_activity_matrices(labels, d, tuple(derivatives))
    tables = _tables(labels, min_terms, d)
    return NumericModel(m, tuple(derivatives), components, labels, mats, prepost,
                        apparent, tuple(min_terms), label_mt, tables, x0,
                        report.warnings)


def _tables(labels, min_terms, d):
    arg_ptr, arg_idx, arg_rate, arg_pas, factor = [0], [], [], [], []
    chg_ptr, chg_idx, chg_val = [0], [], []
    for l in labels:
        for i, a in zip(l.pre, l.apparent):
            arg_idx.append(i)
            arg_rate.append(0.0 if a.passive else a.value)
            arg_pas.append(1 if a.passive else 0)
        arg_ptr.append(len(arg_idx))
        factor.append(l.factor)
        for i, v in enumerate(l.vector):
            if v:
                chg_idx.append(i)
                chg_val.append(float(v))
        chg_ptr.append(len(chg_idx))
    mt_ptr, mt_idx, mt_rate = [0], [], []
    for mt in min_terms:
        mt_idx.extend(mt.idx)
        mt_rate.extend(mt.rates)
        mt_ptr.append(len(mt_idx))
    i64 = lambda a: np.ascontiguousarray(a, dtype=np.int64)
    f64 = lambda a: np.ascontiguousarray(a, dtype=np.float64)
    return RateTables(d, len(labels), i64(arg_ptr), i64(arg_idx), f64(arg_rate),
                      np.ascontiguousarray(arg_pas, dtype=np.uint8), f64(factor),
                      i64(chg_ptr), i64(chg_idx), f64(chg_val),
                      i64(mt_ptr), i64(mt_idx), f64(mt_rate))


# ---------------------------------------------------------------------------
# operations


def enumerate_local_derivatives(m):
    """Local derivatives in global vector order (types by first leaf, then
    definition order within a type)."""
    return _as_numeric(m).derivatives


def compute_pre_post_sets(m):
    """Map action type -> (pre derivative indices, {P name: post indices})."""
    return _as_numeric(m).prepost


def derive_labelled_activities(m):
    """Labelled activities in column order."""
    return _as_numeric(m).labels


def build_activity_matrices(acts, d=None, derivatives=None):
    """Assemble C, Cpre and Cpost from labelled activities.

    Parameters
    ----------
    acts : sequence of LabelledActivity
    d : int, optional
        Number of local derivatives; inferred from the first vector if omitted.
    """
    acts = tuple(acts)
    if d is None:
        if not acts:
            raise ValueError("d is required when there are no activities")
        d = len(acts[0].vector)
    cpre = np.zeros((d, len(acts)), dtype=np.int64)
    cpost = np.zeros((d, len(acts)), dtype=np.int64)
    for j, l in enumerate(acts):
        for i in l.pre:
            cpre[i, j] = 1
        for i in l.post:
            cpost[i, j] = 1
    C = cpost - cpre
    for a in (C, cpre, cpost):
        a.setflags(write=False)
    return ActivityMatrices(C, cpre, cpost, acts, derivatives or ())


def apparent_rate(m, x, P, alpha):
    """Apparent rate ``x[P] * r_alpha(P)``.

    Returns
    -------
    RateValue or float
        ``0.0`` for zero population, otherwise the scaled RateValue.

    Raises
    ------
    ValueError
        If ``P`` does not enable ``alpha``.
    """
    nm = _as_numeric(m)
    name = P.name if isinstance(P, LocalDerivative) else P
    key = (name, alpha)
    if key not in nm.apparent_rates:
        raise ValueError(f"{name} does not enable {alpha}")
    return nm.apparent_rates[key].scale(float(x[nm.index(name)]))


def transition_rate(x, l):
    """Rate ``f(x, l)`` of a labelled activity at state ``x``."""
    best = np.inf
    for i, a in zip(l.pre, l.apparent):
        v = float(x[i])
        if v < 0:
            raise ValueError("state must be nonnegative")
        if a.passive:
            if v == 0:
                return 0.0
        else:
            best = min(best, v * a.value)
    return l.factor * best


def initial_state_vector(m):
    """Initial counts from the replications of the system equation."""
    return _as_numeric(m).x0.copy()


def rate_expression(l, names):
    """Text of ``f(x, l)``, e.g. ``"min(1*X1, 1*Y1)"`` or ``"0.5*a"``.

    Passive arguments appear as the indicator ``[x > 0]``.
    """
    finite = [f"{_g(a.value)}*{names[i]}" for i, a in zip(l.pre, l.apparent) if not a.passive]
    ind = ["[" + names[i] + " > 0]" for i, a in zip(l.pre, l.apparent) if a.passive]
    core = finite[0] if len(finite) == 1 else "min(" + ", ".join(finite) + ")"
    fac = l.factor
    expr = core if fac == 1 else f"{_g(fac)}*{core}"
    return "*".join([expr] + ind)
