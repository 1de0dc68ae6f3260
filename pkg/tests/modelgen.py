"""Random valid models for property tests.

Each type has two to four local derivatives on a ring ``A1 -> A2 -> ... -> A1``
plus random extra edges.  Every shared action is enabled by exactly two types,
each on one derivative; optionally one side is passive.
"""

import numpy as np

from pepafluid import parse_model

TYPES = "ABC"


def random_source(rng, max_types=3, max_derivs=4, max_syncs=2, allow_passive=True):
    """Source text of a random model (int-valued populations, rates in [0.2, 3])."""
    nt = int(rng.integers(1, max_types + 1))
    sizes = [int(rng.integers(2, max_derivs + 1)) for _ in range(nt)]
    # a shared action needs two types; pick pairs along a chain so the
    # system equation can nest them left to right
    ns = 0 if nt == 1 else int(rng.integers(0, min(max_syncs, nt - 1) + 1))
    pairs = [(k, k + 1) for k in range(ns)]
    edges = {t: {i: [] for i in range(sizes[t])} for t in range(nt)}
    params = []

    def rate():
        name = f"r{len(params)}"
        params.append((name, round(float(rng.uniform(0.2, 3.0)), 3)))
        return name

    for t, k in enumerate(sizes):
        for i in range(k):
            edges[t][i].append((f"l{TYPES[t]}{i + 1}", rate(), (i + 1) % k))
        for _ in range(int(rng.integers(0, k + 1))):
            i, j = (int(v) for v in rng.integers(0, k, size=2))
            if i != j:
                edges[t][i].append((f"e{TYPES[t]}{i + 1}{j + 1}", rate(), j))
    for s, (ta, tb) in enumerate(pairs):
        act = f"s{s + 1}"
        passive = int(rng.integers(0, 3))  # 0: none, 1: ta passive, 2: tb passive
        if not allow_passive:
            passive = 0
        for side, t in enumerate((ta, tb)):
            i = int(rng.integers(0, sizes[t]))
            for _ in range(int(rng.integers(1, 3))):
                j = (i + int(rng.integers(1, sizes[t]))) % sizes[t]
                r = f"{int(rng.integers(1, 3))}*infty" if passive == side + 1 else rate()
                edges[t][i].append((act, r, j))
    lines = [f"{n} = {v};" for n, v in params]
    for t, k in enumerate(sizes):
        for i in range(k):
            summ = " + ".join(f"({a}, {r}).{TYPES[t]}{j + 1}" for a, r, j in edges[t][i])
            lines.append(f"{TYPES[t]}{i + 1} = {summ};")
    leaves = []
    for t, k in enumerate(sizes):
        parts = [f"{TYPES[t]}1[{int(rng.integers(1, 6))}]"]
        if k > 1 and rng.random() < 0.5:
            j = int(rng.integers(2, k + 1))
            parts.append(f"{TYPES[t]}{j}[{int(rng.integers(1, 6))}]")
        leaves.append("(" + " || ".join(parts) + ")")
    eq = leaves[0]
    for t in range(1, nt):
        acts = [f"s{s + 1}" for s, (_, tb) in enumerate(pairs) if tb == t]
        eq = f"({eq} <{', '.join(acts)}> {leaves[t]})"
    return "\n".join(lines + [eq]) + "\n"


def random_model(rng, **kw):
    """Parse a random model (retrying until numeric_model accepts it)."""
    from pepafluid import numeric_model
    from pepafluid.errors import ModelError

    while True:
        src = random_source(rng, **kw)
        m = parse_model(src)
        try:
            numeric_model(m)
        except ModelError:
            continue
        return m, src


def random_models(count, seed=0, **kw):
    rng = np.random.default_rng(seed)
    return [random_model(rng, **kw) for _ in range(count)]
