"""Command-line entry point: ``pepafluid <subcommand> MODEL [options]``.

Exit status is 0 on success, 1 on syntax/validation/input errors and 2 when
the explicit state space exceeds its cap.
"""

import argparse
import hashlib
import os
import sys

import numpy as np

from . import __version__
from .errors import PepaError, StateSpaceCapError
from .report import emit_report, metadata, write_artifact

EXT = {"json": "json", "csv": "csv", "dot": "dot", "text": "pepa"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _kv_list(s):
    out = {}
    for part in filter(None, (p.strip() for p in s.split(","))):
        if "=" not in part:
            raise argparse.ArgumentTypeError(f"expected name=value, got {part!r}")
        k, v = part.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise argparse.ArgumentTypeError(f"value of {k!r} is not a number") from None
    return out


def _int_list(s):
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _load(args):
    from .syntax import parse_model
    with open(args.model, encoding="utf-8") as fh:
        src = fh.read()
    args._sha = hashlib.sha256(src.encode()).hexdigest()
    m = parse_model(src)
    if args.rates:
        m = m.with_params(args.rates)
    return m


def _nm(m):
    from .numeric import numeric_model
    return numeric_model(m)


def _start(args, nm):
    if args.start is None:
        return nm.x0.copy()
    x0 = np.asarray(args.start, dtype=np.int64)
    if x0.shape != (nm.d,):
        raise ValueError(f"--start needs {nm.d} counts ({', '.join(nm.names)})")
    if np.any(x0 < 0):
        raise ValueError("--start counts must be nonnegative")
    return x0


def _fmt(v):
    return format(float(v), ".6g")


# ---------------------------------------------------------------------------
# subcommands: each returns an ordered list of (name, fmt, data)


def cmd_parse(args):
    from .syntax import analyze_structure, pretty_print, validate_model
    m = _load(args)
    rep = validate_model(m)
    st = analyze_structure(m)
    info = {"ok": rep.ok,
            "errors": [f"{i.code}: {i.message}" for i in rep.errors],
            "warnings": [f"{i.code}: {i.message}" for i in rep.warnings],
            "types": {t.name: list(t.derivatives) for t in st.types},
            "parameters": dict(m.params)}
    arts = [("model", "text", pretty_print(m)), ("report", "json", info)]
    return arts, (0 if rep.ok else 1)


def cmd_matrix(args):
    from .numeric import rate_expression
    m = _load(args)
    nm = _nm(m)
    mats = nm.matrices
    labels = list(mats.label_names)
    data = {"derivatives": list(nm.names), "labels": labels,
            "C": mats.C, "Cpre": mats.Cpre, "Cpost": mats.Cpost,
            "rate_functions": {l.name: rate_expression(l, nm.names) for l in nm.labels},
            "min_terms": [mt.describe(nm.names) for mt in nm.min_terms]}
    table = {"header": ["derivative"] + labels,
             "rows": [[n] + [int(v) for v in row] for n, row in zip(nm.names, mats.C)]}
    return [("matrix", "json", data), ("matrix", "csv", table)], 0


def cmd_odes(args):
    from .numeric import rate_expression
    m = _load(args)
    nm = _nm(m)
    odes = {}
    for i, name in enumerate(nm.names):
        terms = []
        for l in nm.labels:
            v = l.vector[i]
            if v:
                e = rate_expression(l, nm.names)
                c = "" if abs(v) == 1 else f"{abs(v)}*"
                terms.append(("- " if v < 0 else "+ ") + c + e)
        s = " ".join(terms)
        odes[name] = (s[2:] if s.startswith("+ ") else "-" + s[2:]) if s else "0"
    table = {"header": ["derivative", "ode"], "rows": [[k, v] for k, v in odes.items()]}
    return [("odes", "json", {"odes": odes, "order": list(nm.names)}),
            ("odes", "csv", table)], 0


def cmd_solve(args):
    from .fluid import FluidSystem, check_conservation, detect_equilibrium, integrate, region_name
    from .structural import dominating_region
    m = _load(args)
    nm = _nm(m)
    sys_ = FluidSystem(nm)
    x0 = _start(args, nm).astype(float)
    traj = integrate(sys_, x0, args.tend, step=args.step)
    eq = detect_equilibrium(traj, sys_)
    dom = dominating_region(traj)
    data = {"names": list(nm.names), "t_end": args.tend, "step": traj.step,
            "n_steps": traj.n_steps, "final_state": traj.final,
            "equilibrium": eq, "equilibrium_detected": eq is not None,
            "dominating_region": None if dom is None else region_name(dom),
            "n_switches": traj.n_switches, "last_switch_time": traj.last_switch_time,
            "conservation_drift": check_conservation(traj, sys_),
            "n_clipped": traj.n_clipped, "min_preclip": traj.min_preclip}
    table = {"header": ["time"] + list(nm.names) + ["region"],
             "rows": [[t] + list(x) + [region_name(r)] for t, x, r in
                      zip(traj.times, traj.states, traj.region_ids)]}
    return [("equilibrium", "json", data), ("trajectory", "csv", table)], 0


def cmd_ctmc(args):
    from .ctmc import explore_state_space, expected_state, steady_state
    m = _load(args)
    nm = _nm(m)
    c = explore_state_space(nm, _start(args, nm), cap=args.cap)
    pi = steady_state(c) if args.steady else None
    label = lambda s: "(" + ",".join(str(int(v)) for v in s) + ")"
    data = {"names": list(nm.names), "n_states": c.n, "states": c.states,
            "n_transitions": int(len(c.edges[0]))}
    if pi is not None:
        data["steady_state"] = pi
        data["expected_state"] = expected_state(c, pi)
    header = ["index"] + list(nm.names) + (["steady_state"] if pi is not None else [])
    rows = [[i] + [int(v) for v in s] + ([pi[i]] if pi is not None else [])
            for i, s in enumerate(c.states)]
    src, dst, lab, rate = c.edges
    dot = {"name": os.path.splitext(os.path.basename(args.model))[0],
           "nodes": [(f"s{i}", label(s)) for i, s in enumerate(c.states)],
           "edges": [(f"s{a}", f"s{b}", f"{nm.labels[l].action} ({_fmt(r)})")
                     for a, b, l, r in zip(src, dst, lab, rate)]}
    return [("ctmc", "json", data), ("states", "csv", {"header": header, "rows": rows}),
            ("ctmc", "dot", dot)], 0


def cmd_simulate(args):
    from .simulation import kurtz_error
    m = _load(args)
    nm = _nm(m)
    rep = kurtz_error(nm, _start(args, nm), args.levels or [10, 100, 1000], args.tend,
                      args.reps, args.seed, workers=args.threads)
    rows = [[n, k, e] for n, errs in zip(rep.levels, rep.sup_errors) for k, e in enumerate(errs)]
    return [("convergence", "json", rep.as_dict()),
            ("sup_errors", "csv", {"header": ["level", "rep", "sup_error"], "rows": rows})], 0


def cmd_spectral(args):
    from .spectral import condition_report, ratio_trend
    m = _load(args)
    nm = _nm(m)
    reps = condition_report(nm, _start(args, nm), args.levels or [1, 2, 3, 4], cap=args.cap,
                            numeric_alpha=not args.no_alpha)
    cols = ["n", "states", "m", "lambda", "sigma", "pi_star", "alpha_lower", "alpha_upper",
            "alpha_numeric", "condition_ratio"]
    dicts = [r.as_dict() for r in reps]
    data = {"levels": dicts, "ratio_trend": ratio_trend(reps),
            "note": "empirical report; boundedness of the ratio is not asserted"}
    table = {"header": cols, "rows": [[d[c] for c in cols] for d in dicts]}
    return [("spectral", "json", data), ("spectral", "csv", table)], 0


def cmd_analyze(args):
    from .fluid import FluidSystem, region_name
    from .structural import (block_structure_check, convergence_certificate,
                             decompose_regions, eigen_check, find_invariants)
    m = _load(args)
    nm = _nm(m)
    sys_ = FluidSystem(nm)
    x0 = _start(args, nm).astype(float)
    inv = find_invariants(nm.matrices)
    comp = {tuple(r) for r in inv.component_vectors.tolist()}
    pls = decompose_regions(sys_)
    regions, rows = [], []
    for rid, Q in pls.regions.items():
        ec = eigen_check(Q)
        regions.append({"region": region_name(rid), "signature": list(pls.signature(rid)),
                        "condition": pls.describe_region(rid), "feasible": pls.feasible[rid],
                        "eigenvalues": [[e.real, e.imag] for e in ec.eigenvalues],
                        "eigen_check_passed": ec.passed, "matrix": Q})
        rows += [[region_name(rid), nm.names[i], nm.names[j], Q[i, j]]
                 for i in range(nm.d) for j in range(nm.d)]
    blk = block_structure_check(pls)
    cert = convergence_certificate(sys_, x0)
    data = {"names": list(nm.names),
            "invariants": [{"vector": v, "form": f,
                            "kind": "component" if tuple(v) in comp else "extra"}
                           for v, f in zip(inv.vectors.tolist(), inv.describe())],
            "regions": regions,
            "block_structure": {"applicable": blk.applicable, "passed": blk.passed,
                                "violations": blk.violations, "note": blk.note},
            "certificate": cert.as_dict()}
    table = {"header": ["region", "row", "column", "value"], "rows": rows}
    return [("analysis", "json", data), ("regions", "csv", table)], 0


COMMANDS = {"parse": cmd_parse, "matrix": cmd_matrix, "odes": cmd_odes, "solve": cmd_solve,
            "ctmc": cmd_ctmc, "simulate": cmd_simulate, "spectral": cmd_spectral,
            "analyze": cmd_analyze}
HELP = {"parse": "parse, validate and pretty-print a model",
        "matrix": "activity matrices and transition rate functions",
        "odes": "fluid ODEs, one per local derivative",
        "solve": "integrate the fluid ODEs and report the equilibrium",
        "ctmc": "explore the CTMC state space (optionally its steady state)",
        "simulate": "SSA traces and the fluid sup-error across levels",
        "spectral": "spectral gap and Log-Sobolev bounds per level",
        "analyze": "invariants, regions, eigenvalues and a convergence verdict"}


def build_parser():
    p = _Parser(prog="pepafluid", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pepafluid {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name, help=HELP[name], description=HELP[name])
        s.add_argument("model", help="model file")
        s.add_argument("--rates", type=_kv_list, default={},
                       help="parameter overrides, e.g. a1=1,c2=0.5")
        s.add_argument("--start", type=_int_list, help="start counts in derivative order")
        s.add_argument("--tend", type=float, default=10.0 if name == "simulate" else 100.0)
        s.add_argument("--step", type=float, help="RK4 step (default 1e-3/max rate)")
        s.add_argument("--levels", type=_int_list, help="concentration levels, e.g. 1,2,4")
        s.add_argument("--reps", type=int, default=100)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--cap", type=int, help="state-space cap (default $PEPAFLUID_STATE_CAP "
                                               "or 50000)")
        s.add_argument("--threads", type=int, default=1, help="replication workers")
        s.add_argument("--format", choices=sorted(EXT), help="artifact printed to stdout")
        s.add_argument("--out", help="output file, or a directory for every artifact")
        if name == "ctmc":
            s.add_argument("--dot", action="store_true", help="emit the DOT graph")
            s.add_argument("--steady", action="store_true", help="include the steady state")
        if name == "spectral":
            s.add_argument("--no-alpha", action="store_true",
                           help="skip the numeric Log-Sobolev constant")
    return p


def _config(args):
    skip = {"out", "threads", "format", "_sha"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    cfg["model"] = os.path.basename(args.model)
    cfg["model_sha256"] = getattr(args, "_sha", None)
    return cfg


def _render(fmt, data, meta):
    if fmt == "text":
        import json
        head = "# " + json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n"
        return (head + data).encode()
    return emit_report(data, fmt, meta)


def run(argv=None):
    """Parse ``argv``, dispatch, write artifacts; returns the exit status."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:  # usage errors (1), --help/--version (0)
        return e.code if isinstance(e.code, int) else 1
    if getattr(args, "dot", False):
        args.format = "dot"
    try:
        arts, status = COMMANDS[args.subcommand](args)
        meta = metadata(args.subcommand, _config(args), args.seed)
        if args.out and (os.path.isdir(args.out) or args.out.endswith(os.sep)):
            os.makedirs(args.out, exist_ok=True)
            for name, fmt, data in arts:
                path = os.path.join(args.out, f"{args.subcommand}_{name}.{EXT[fmt]}")
                write_artifact(_render(fmt, data, meta), path)
        else:
            want = args.format or arts[0][1]
            pick = next((a for a in arts if a[1] == want), None)
            if pick is None:
                raise ValueError(f"{args.subcommand} has no {want} output "
                                 f"(available: {', '.join(sorted({a[1] for a in arts}))})")
            write_artifact(_render(pick[1], pick[2], meta), args.out or "-")
        return status
    except StateSpaceCapError as e:
        print(f"{args.model}: {e}", file=sys.stderr)
        return 2
    except (PepaError, ValueError, OSError) as e:
        print(f"{args.model}: {e}", file=sys.stderr)
        return 1


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
