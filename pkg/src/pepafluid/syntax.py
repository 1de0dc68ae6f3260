"""PEPA concrete syntax: lexer, parser, AST, validation and pretty printer.

Concrete syntax
---------------
::

    # comment to end of line
    a = 1.5;                              # rate parameter
    M = 300;                              # population parameter
    User1 = (task1, a).User2;             # sequential definition
    User2 = (task2, 2.0).User1 + (idle, infty).User1;
    Both = User1 + Other;                 # alias summands are allowed
    User1[M] <task1> Provider1[N]         # system equation (last, ';' optional)

System operators: ``P <a, b> Q`` cooperation, ``P || Q`` (or ``P <> Q``)
parallel, ``P/{a}`` hiding, ``Name[N]`` replication with ``N`` a positive
integer or a parameter, parentheses for grouping.  Cooperation is left
associative; hiding binds tighter than cooperation.  Passive rates are written
``infty`` or ``w*infty`` with a positive integer weight ``w``.
"""

import re
from dataclasses import dataclass, field

from .errors import ModelError, PepaSyntaxError
from .rates import RateValue

TAU = "tau"

# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Prefix:
    """``(action, rate).target``; ``rate`` is a RateValue or a parameter name."""

    action: str
    rate: object
    target: str


@dataclass(frozen=True)
class Definition:
    """``name = s1 + s2 + ...`` with each summand a Prefix or a constant name."""

    name: str
    summands: tuple


@dataclass(frozen=True)
class Leaf:
    """Sequential constant with an initial multiplicity (int or parameter)."""

    name: str
    count: object = 1


@dataclass(frozen=True)
class Cooperation:
    left: object
    right: object
    actions: tuple = ()


@dataclass(frozen=True)
class Hiding:
    child: object
    actions: tuple


@dataclass(frozen=True)
class PepaModel:
    """Parsed model.

    Attributes
    ----------
    params : tuple of (str, float)
        Named numeric parameters in declaration order.
    definitions : tuple of Definition
        Sequential definitions in declaration order.
    system : Leaf, Cooperation or Hiding
        The system equation.
    """

    params: tuple
    definitions: tuple
    system: object

    @property
    def param_values(self):
        return dict(self.params)

    def definition(self, name):
        for d in self.definitions:
            if d.name == name:
                return d
        raise KeyError(name)

    def rate_parameters(self):
        """Names of parameters used as rates, in declaration order."""
        used = {s.rate for d in self.definitions for s in d.summands
                if isinstance(s, Prefix) and isinstance(s.rate, str)}
        return tuple(n for n, _ in self.params if n in used)

    def with_params(self, overrides):
        """Return a copy with parameter values replaced.

        Raises
        ------
        ModelError
            If an override names an undeclared parameter or is non-positive.
        """
        if not overrides:
            return self
        known = self.param_values
        for k, v in overrides.items():
            if k not in known:
                raise ModelError(f"override for undeclared parameter {k!r}")
            if not float(v) > 0:
                raise ModelError(f"non-positive value for parameter {k!r}")
        params = tuple((n, float(overrides.get(n, v))) for n, v in self.params)
        m = PepaModel(params, self.definitions, self.system)
        for leaf in leaves(m.system):
            _leaf_count(m, leaf)
        return m

    def resolve_rate(self, rate):
        if isinstance(rate, RateValue):
            return rate
        return RateValue.finite(self.param_values[rate])

    def init_counts(self):
        """Map leaf constant -> summed initial multiplicity."""
        out = {}
        for leaf in leaves(self.system):
            out[leaf.name] = out.get(leaf.name, 0) + _leaf_count(self, leaf)
        return out


def leaves(node):
    """Leaves of a system tree, left to right."""
    if isinstance(node, Leaf):
        return [node]
    if isinstance(node, Cooperation):
        return leaves(node.left) + leaves(node.right)
    return leaves(node.child)


def _leaf_count(m, leaf):
    c = leaf.count
    if isinstance(c, str):
        v = m.param_values[c]
        if v != int(v) or v < 1:
            raise ModelError(f"multiplicity {c}={v!r} of {leaf.name} must be a positive integer")
        return int(v)
    return int(c)


# ---------------------------------------------------------------------------
# lexer

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<op>\|\||[=;(),.+<>\[\]/{}*\-])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(source):
    """Split source into tokens; raises PepaSyntaxError on stray characters."""
    toks = []
    pos, line, lstart = 0, 1, 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise PepaSyntaxError(f"unexpected character {source[pos]!r}",
                                  line, pos - lstart + 1)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            if kind == "ident" and text == "infty":
                kind = "infty"
            toks.append(_Tok(kind, text, line, pos - lstart + 1))
        nl = text.count("\n")
        if nl:
            line += nl
            lstart = pos + text.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - lstart + 1))
    return toks


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, source):
        self.toks = tokenize(source)
        self.i = 0

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg, expected=(), tok=None):
        t = tok or self.peek()
        raise PepaSyntaxError(msg, t.line, t.col, expected)

    def accept(self, text):
        t = self.peek()
        if t.kind == "op" and t.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text):
        t = self.peek()
        if not (t.kind == "op" and t.text == text):
            self.error(f"unexpected {t.text or 'end of input'!r}", (repr(text),))
        self.i += 1
        return t

    def ident(self):
        t = self.peek()
        if t.kind != "ident":
            self.error(f"unexpected {t.text or 'end of input'!r}", ("identifier",))
        self.i += 1
        return t

    def number(self):
        neg = self.accept("-")
        t = self.peek()
        if t.kind != "num":
            self.error(f"unexpected {t.text or 'end of input'!r}", ("number",))
        self.i += 1
        v = float(t.text)
        return -v if neg else v, t

    # model := stmt* system ';'? eof
    def parse(self):
        params, defs = [], []
        names = {}
        while True:
            t = self.peek()
            if t.kind == "ident" and self.peek(1).kind == "op" and self.peek(1).text == "=":
                name = self.ident()
                self.expect("=")
                if name.text in names:
                    self.error(f"duplicate definition of {name.text!r}", tok=name)
                nt = self.peek()
                if nt.kind == "num" or (nt.kind == "op" and nt.text == "-"):
                    v, vt = self.number()
                    if not v > 0:
                        self.error(f"non-positive value {v!r} for {name.text!r}", tok=vt)
                    params.append((name.text, v))
                    names[name.text] = ("param", name)
                else:
                    defs.append(Definition(name.text, self.body()))
                    names[name.text] = ("def", name)
                self.expect(";")
            else:
                break
        if self.peek().kind == "eof":
            self.error("missing system equation", ("system equation",))
        system = self.system()
        self.accept(";")
        if self.peek().kind != "eof":
            self.error(f"unexpected {self.peek().text!r} after system equation",
                       ("end of input",))
        model = PepaModel(tuple(params), tuple(defs), system)
        self.resolve(model, names)
        return model

    def body(self):
        out = [self.summand()]
        while self.accept("+"):
            out.append(self.summand())
        return tuple(out)

    def summand(self):
        t = self.peek()
        if t.kind == "ident":
            self.i += 1
            return t.text
        self.expect("(")
        act = self.ident().text
        self.expect(",")
        rate = self.rate()
        self.expect(")")
        self.expect(".")
        target = self.ident()
        return Prefix(act, rate, target.text), target

    def rate(self):
        t = self.peek()
        if t.kind == "infty":
            self.i += 1
            return RateValue.infty(1)
        if t.kind == "ident":
            self.i += 1
            return t.text
        v, vt = self.number()
        if self.accept("*"):
            it = self.peek()
            if it.kind != "infty":
                self.error(f"unexpected {it.text!r}", ("infty",))
            self.i += 1
            if v != int(v) or v < 1:
                self.error(f"passive weight must be a positive integer, got {v!r}", tok=vt)
            return RateValue.infty(v)
        if not v > 0:
            self.error(f"non-positive rate literal {v!r}", tok=vt)
        return RateValue.finite(v)

    # system := hide (coopop hide)*
    def system(self):
        node = self.hide()
        while True:
            if self.accept("||"):
                node = Cooperation(node, self.hide(), ())
            elif self.accept("<"):
                acts = ()
                if not self.accept(">"):
                    acts = self.actlist()
                    self.expect(">")
                node = Cooperation(node, self.hide(), acts)
            else:
                return node

    def actlist(self):
        acts = [self.ident().text]
        while self.accept(","):
            acts.append(self.ident().text)
        return tuple(sorted(set(acts)))

    def hide(self):
        node = self.atom()
        while self.accept("/"):
            self.expect("{")
            node = Hiding(node, self.actlist())
            self.expect("}")
        return node

    def atom(self):
        if self.accept("("):
            node = self.system()
            self.expect(")")
            return node
        t = self.ident()
        if self.accept("["):
            nt = self.peek()
            if nt.kind == "ident":
                self.i += 1
                count = nt.text
            else:
                v, vt = self.number()
                if v != int(v) or v < 1:
                    self.error(f"multiplicity must be a positive integer, got {v!r}", tok=vt)
                count = int(v)
            self.expect("]")
            return _LeafTok(t.text, count, t)
        return _LeafTok(t.text, 1, t)

    def resolve(self, model, names):
        # summands carry their target token until here for error positions
        clean = []
        for d in model.definitions:
            summ = []
            for s in d.summands:
                if isinstance(s, tuple):
                    p, tt = s
                    if names.get(p.target, ("",))[0] != "def":
                        raise PepaSyntaxError(f"unresolved constant {p.target!r}",
                                              tt.line, tt.col)
                    if p.target == d.name:
                        raise PepaSyntaxError(
                            f"self-loop: {d.name} = ({p.action}, ...).{d.name}",
                            tt.line, tt.col)
                    if isinstance(p.rate, str) and names.get(p.rate, ("",))[0] != "param":
                        raise PepaSyntaxError(f"unresolved rate parameter {p.rate!r}",
                                              tt.line, tt.col)
                    summ.append(p)
                else:
                    if names.get(s, ("",))[0] != "def":
                        tok = names[d.name][1]
                        raise PepaSyntaxError(f"unresolved constant {s!r} in {d.name}",
                                              tok.line, tok.col)
                    summ.append(s)
            clean.append(Definition(d.name, tuple(summ)))
        object.__setattr__(model, "definitions", tuple(clean))
        object.__setattr__(model, "system", self._clean_system(model.system, names, model))

    def _clean_system(self, node, names, model):
        if isinstance(node, _LeafTok):
            t = node.tok
            if names.get(node.name, ("",))[0] != "def":
                raise PepaSyntaxError(f"unresolved constant {node.name!r}", t.line, t.col)
            if isinstance(node.count, str):
                if names.get(node.count, ("",))[0] != "param":
                    raise PepaSyntaxError(f"unresolved multiplicity {node.count!r}",
                                          t.line, t.col)
                v = model.param_values[node.count]
                if v != int(v) or v < 1:
                    raise PepaSyntaxError(
                        f"multiplicity {node.count}={v!r} must be a positive integer",
                        t.line, t.col)
            return Leaf(node.name, node.count)
        if isinstance(node, Cooperation):
            return Cooperation(self._clean_system(node.left, names, model),
                               self._clean_system(node.right, names, model),
                               node.actions)
        return Hiding(self._clean_system(node.child, names, model), node.actions)


@dataclass(frozen=True)
class _LeafTok:
    name: str
    count: object
    tok: _Tok = field(compare=False)


def parse_model(source):
    """Parse model source text.

    Parameters
    ----------
    source : str
        Model text in the concrete syntax described in the module docstring.

    Returns
    -------
    PepaModel

    Raises
    ------
    PepaSyntaxError
        Syntax errors (with position and expected tokens), unresolved
        constants or parameters, non-positive rate literals and direct
        self-loops.
    """
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# pretty printer


def _fmt_num(v):
    if float(v) == int(v) and abs(v) < 1e15:
        return f"{int(v)}.0"
    return repr(float(v))


def _fmt_rate(r):
    if isinstance(r, str):
        return r
    if r.passive:
        return "infty" if r.value == 1 else f"{int(r.value)}*infty"
    return _fmt_num(r.value)


def _fmt_system(node):
    if isinstance(node, Leaf):
        return node.name if node.count == 1 else f"{node.name}[{node.count}]"
    if isinstance(node, Hiding):
        inner = _fmt_system(node.child)
        if isinstance(node.child, Cooperation):
            inner = f"({inner})"
        return f"{inner}/{{{', '.join(node.actions)}}}"
    left = _fmt_system(node.left)
    right = _fmt_system(node.right)
    if isinstance(node.right, Cooperation):
        right = f"({right})"
    op = " || " if not node.actions else f" <{', '.join(node.actions)}> "
    return left + op + right


def pretty_print(m):
    """Render a model as source text that parses back to an equal AST."""
    lines = [f"{n} = {_fmt_num(v)};" for n, v in m.params]
    if lines:
        lines.append("")
    for d in m.definitions:
        parts = [s if isinstance(s, str) else f"({s.action}, {_fmt_rate(s.rate)}).{s.target}"
                 for s in d.summands]
        lines.append(f"{d.name} = {' + '.join(parts)};")
    lines.append("")
    lines.append(_fmt_system(m.system))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# structure analysis shared by validation and the numerical representation


@dataclass(frozen=True)
class Issue:
    severity: str  # "error" | "warning"
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple = ()

    @property
    def errors(self):
        return tuple(i for i in self.issues if i.severity == "error")

    @property
    def warnings(self):
        return tuple(i for i in self.issues if i.severity == "warning")

    @property
    def ok(self):
        return not self.errors

    def raise_for_errors(self):
        if self.errors:
            raise ModelError("; ".join(f"[{i.code}] {i.message}" for i in self.errors))


def expand_definitions(m):
    """Resolve alias summands into flat prefix lists.

    Returns
    -------
    prefixes : dict
        name -> tuple of Prefix (rates still symbolic).
    cycles : list of tuple
        Alias cycles (unguarded recursion) found; members map to no prefixes.
    """
    defs = {d.name: d for d in m.definitions}
    out, cycles = {}, []
    state = {}

    def visit(name, stack):
        if name in out:
            return out[name]
        if state.get(name) == "active":
            cyc = tuple(stack[stack.index(name):])
            cycles.append(cyc)
            return ()
        state[name] = "active"
        stack.append(name)
        acc = []
        for s in defs[name].summands:
            if isinstance(s, Prefix):
                acc.append(s)
            else:
                acc.extend(visit(s, stack))
        stack.pop()
        state[name] = "done"
        out[name] = tuple(acc)
        return out[name]

    for d in m.definitions:
        visit(d.name, [])
    return out, cycles


@dataclass(frozen=True)
class ComponentType:
    """A sequential component type: connected derivatives and its leaves."""

    name: str
    derivatives: tuple
    leaves: tuple
    hidden: tuple = ()


@dataclass
class Structure:
    """Resolved structure of a model (types, effective prefixes, sync groups)."""

    types: list
    type_of: dict                 # derivative name -> type index
    prefixes: dict                # derivative name -> tuple of (action, RateValue, target)
    action_order: list            # action types by first appearance
    groups: dict                  # action -> list of (frozenset type idx, blocked)
    issues: list


def _common_prefix_name(names):
    if not names:
        return ""
    p = names[0]
    for n in names[1:]:
        while not n.startswith(p):
            p = p[:-1]
    return p.rstrip("0123456789_")


def analyze_structure(m):
    """Resolve component types and synchronisation groups.

    The returned Structure carries every legality issue found; callers decide
    whether errors are fatal.  Hiding renames an action to ``tau`` only for
    instances that do not synchronise on it below the hiding operator; a
    shared activity that is hidden after synchronising keeps its name (the
    dynamics are the same, outer cooperation on it is simply impossible).
    """
    issues = []
    prefixes, cycles = expand_definitions(m)
    for cyc in cycles:
        issues.append(Issue("error", "unguarded-recursion",
                            "unguarded recursion through " + " -> ".join(cyc + cyc[:1])))
    def_order = [d.name for d in m.definitions]
    rank = {n: i for i, n in enumerate(def_order)}

    def closure(name):
        seen, todo = {name}, [name]
        while todo:
            u = todo.pop()
            for p in prefixes[u]:
                if p.target not in seen:
                    seen.add(p.target)
                    todo.append(p.target)
        return seen

    leaf_list = []  # (leaf, total hidden set)

    def index_leaves(node, hidden):
        if isinstance(node, Leaf):
            leaf_list.append((node, frozenset(hidden)))
        elif isinstance(node, Hiding):
            index_leaves(node.child, hidden | set(node.actions))
        else:
            index_leaves(node.left, hidden)
            index_leaves(node.right, hidden)

    index_leaves(m.system, set())

    # component types: union leaves whose closures intersect
    closures = [closure(l.name) for l, _ in leaf_list]
    parent = list(range(len(leaf_list)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner = {}
    for i, cl in enumerate(closures):
        for dname in cl:
            if dname in owner:
                a, b = find(owner[dname]), find(i)
                if a != b:
                    parent[max(a, b)] = min(a, b)
            else:
                owner[dname] = i
    roots = []
    for i in range(len(leaf_list)):
        if find(i) not in roots:
            roots.append(find(i))
    types, type_of, used_names = [], {}, set()
    leaf_type = [0] * len(leaf_list)
    for ti, r in enumerate(roots):
        members = [i for i in range(len(leaf_list)) if find(i) == r]
        ders = sorted(set().union(*(closures[i] for i in members)), key=rank.__getitem__)
        hides = {leaf_list[i][1] for i in members}
        if len(hides) > 1:
            issues.append(Issue("error", "inconsistent-hiding",
                                f"instances of {ders[0]} are hidden inconsistently"))
        name = _common_prefix_name(ders) or leaf_list[members[0]][0].name
        base, k = name, 2
        while name in used_names:
            name, k = f"{base}{k}", k + 1
        used_names.add(name)
        types.append(ComponentType(name, tuple(ders),
                                   tuple(leaf_list[i][0] for i in members),
                                   tuple(sorted(min(hides, key=sorted)))))
        for dn in ders:
            type_of[dn] = ti
        for i in members:
            leaf_type[i] = ti
    for dname in def_order:
        if dname not in type_of:
            issues.append(Issue("warning", "dead-derivative",
                                f"{dname} is unreachable from the system equation"))

    enables = [set() for _ in types]
    for dname, ti in type_of.items():
        for p in prefixes[dname]:
            enables[ti].add(p.action)

    # synchronisation: union-find over (action, type) keyed at cooperation nodes
    sync_parent, blocked = {}, set()
    sigs = [[] for _ in leaf_list]
    counter = [0, 0]  # [node id, next leaf index]

    def sfind(key):
        while sync_parent[key] != key:
            key = sync_parent[key]
        return key

    def walk(node):
        if isinstance(node, Leaf):
            i = counter[1]
            counter[1] += 1
            return [(i, frozenset())]
        if isinstance(node, Hiding):
            return [(i, h | set(node.actions)) for i, h in walk(node.child)]
        left, right = walk(node.left), walk(node.right)
        nid = counter[0]
        counter[0] += 1
        for act in node.actions:
            if act == TAU:
                issues.append(Issue("error", "tau-cooperation",
                                    "tau may not appear in a cooperation set"))
                continue
            sides = []
            for s_i, lst in enumerate((left, right)):
                ts = []
                for i, h in lst:
                    t = leaf_type[i]
                    if act not in h and act in enables[t]:
                        sigs[i].append((nid, act, s_i))
                        if t not in ts:
                            ts.append(t)
                sides.append(ts)
            for t in set(sides[0]) & set(sides[1]):
                issues.append(Issue("error", "self-cooperation",
                                    f"instances of {types[t].name} cooperate with each other on {act}"))
            if not sides[0] or not sides[1]:
                which = "either side" if not sides[0] and not sides[1] else (
                    "the left side" if not sides[0] else "the right side")
                issues.append(Issue("warning", "absent-cooperation",
                                    f"cooperation on {act} which {which} never enables"))
            members = sides[0] + sides[1]
            for t in members:
                sync_parent.setdefault((act, t), (act, t))
            for t in members[1:]:
                ra, rb = sfind((act, members[0])), sfind((act, t))
                if ra != rb:
                    sync_parent[max(ra, rb)] = min(ra, rb)
            if members and (not sides[0] or not sides[1]):
                blocked.add((act, members[0]))
        return left + right

    walk(m.system)
    for ti, t in enumerate(types):
        if len({tuple(sigs[i]) for i in range(len(leaf_list)) if leaf_type[i] == ti}) > 1:
            issues.append(Issue("error", "inconsistent-sync",
                                f"instances of {t.name} synchronise inconsistently"))

    grouped = {}
    for key in sync_parent:
        grouped.setdefault(key[0], {}).setdefault(sfind(key), set()).add(key[1])
    blocked_roots = {sfind(b) for b in blocked}
    synced = {(act, t) for act, t in sync_parent}

    # effective prefixes: hidden, unsynchronised actions become tau
    eff, action_order = {}, []
    for dname in def_order:
        if dname not in type_of:
            continue
        ti = type_of[dname]
        hidden = set(types[ti].hidden)
        lst = []
        for p in prefixes[dname]:
            act = TAU if (p.action in hidden and (p.action, ti) not in synced) else p.action
            if p.target == dname:
                issues.append(Issue("error", "self-loop",
                                    f"{dname} reaches itself through one {p.action} activity"))
                continue
            lst.append((act, m.resolve_rate(p.rate), p.target))
            if act not in action_order:
                action_order.append(act)
        eff[dname] = tuple(lst)
    for dname, lst in eff.items():
        kinds = {}
        for act, rate, _ in lst:
            kinds.setdefault(act, set()).add(rate.passive)
        for act, ks in kinds.items():
            if len(ks) > 1:
                issues.append(Issue("error", "mixed-passive",
                                    f"{dname} has both finite and passive {act} branches"))

    groups = {}
    for act in action_order:
        lst = [(frozenset(mem), root in blocked_roots)
               for root, mem in grouped.get(act, {}).items()]
        lst.sort(key=lambda g: min(g[0]))
        groups[act] = lst
        in_group = set()
        for members, blk in lst:
            in_group |= members
            if blk:
                issues.append(Issue("warning", "blocked-activity",
                                    f"{act} can never occur for "
                                    + ", ".join(types[t].name for t in sorted(members))))
                continue
            kinds = {r.passive for t in members for dn in types[t].derivatives
                     for a, r, _ in eff.get(dn, ()) if a == act}
            if kinds == {True}:
                issues.append(Issue("error", "all-passive",
                                    f"every cooperand of shared {act} is passive"))
        for dname, plist in eff.items():
            if type_of[dname] not in in_group and any(a == act and r.passive for a, r, _ in plist):
                issues.append(Issue("warning", "passive-individual",
                                    f"{dname} performs {act} passively without a partner"))
    return Structure(types, type_of, eff, action_order, groups, issues)


def validate_model(m):
    """Check legality constraints.

    Returns
    -------
    ValidationReport
        Errors: unguarded recursion, self-loops through aliases, mixed
        finite/passive branches, all-passive shared activities, instances of
        one type cooperating with each other or synchronising non-uniformly,
        tau in a cooperation set.  Warnings: cooperation on an action one side
        never enables, passive activities without a partner, dead derivatives.
    """
    s = analyze_structure(m)
    seen, issues = set(), []
    for i in s.issues:
        if i not in seen:
            seen.add(i)
            issues.append(i)
    return ValidationReport(tuple(issues))
