"""Command-line interface binding the library into reproducible pipelines.

Subcommands: partition, codelength, score, evaluate, generate. Standard
output carries only machine-parseable results; diagnostics go to standard
error. Exit codes: 0 success, 1 usage or partial errors, 2 I/O or input
data errors, 3 computation failures. Every run with --seed is
reproducible bit for bit in its primary output file. The MAPSIM_THREADS
environment variable caps worker parallelism (default: all cores).
"""

import argparse
import json
import sys

from .codingtree import (
    build_coding_tree,
    description_length,
    mapsim,
    parse_tree,
    parse_tree_paths,
    write_tree,
)
from .flow import ConvergenceError, FlowConfig, flow_for
from .graph import (
    ParseError,
    ValidationError,
    format_edge_list,
    generate_crossed_k_regular,
    largest_weakly_connected_component,
    parse_edge_list,
)
from .linkpred import EvalConfig, evaluate
from .mapeq import Partition, codelength
from .optimizer import optimize_two_level


class UsageError(Exception):
    """Bad flag combination or parameter value; exits with status 1."""


class InputDataError(Exception):
    """Unreadable or inconsistent input file contents; exits with status 2."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the CLI convention is 1.
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _sci(x: float) -> str:
    """Compact scientific notation: 0.25 -> '2.5e-1', 0.0 -> '0e0'."""
    if x == 0.0:
        return "0e0"
    mantissa, exponent = f"{x:.6e}".split("e")
    mantissa = mantissa.rstrip("0").rstrip(".")
    return f"{mantissa}e{int(exponent)}"


def _load_graph(path, directed):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return parse_edge_list(f, directed=directed)
    except (ParseError, ValidationError) as e:
        raise InputDataError(f"{path}: {e}") from e


def _components_flow(path, directed, teleport):
    """Parse edges, restrict to the largest (weakly) connected component, model flow."""
    g = _load_graph(path, directed)
    try:
        lwcc = largest_weakly_connected_component(g)
        flow = flow_for(lwcc, FlowConfig(teleport_probability=teleport))
    except ValidationError as e:
        raise InputDataError(f"{path}: {e}") from e
    return lwcc, flow


def cmd_partition(args) -> int:
    _, flow = _components_flow(args.edges, args.directed, args.teleport)
    part, bits = optimize_two_level(flow, seed=args.seed, trials=args.trials)
    tree = build_coding_tree(flow, part)
    with open(args.output, "w", encoding="utf-8") as f:
        write_tree(tree, f)
    print(f"codelength={bits:.6f} modules={part.top_module_count()}")
    return 0


def cmd_codelength(args) -> int:
    _, flow = _components_flow(args.edges, args.directed, args.teleport)
    try:
        with open(args.tree, "r", encoding="utf-8") as f:
            paths = parse_tree_paths(f)
        part = Partition(paths)
        bits = codelength(flow, part)
    except (ParseError, ValidationError) as e:
        raise InputDataError(f"{args.tree}: {e}") from e
    print(f"codelength={bits:.6f}")
    return 0


def cmd_score(args) -> int:
    _, flow = _components_flow(args.edges, args.directed, args.teleport)
    try:
        with open(args.tree, "r", encoding="utf-8") as f:
            tree = parse_tree(f, flow)
    except (ParseError, ValidationError) as e:
        raise InputDataError(f"{args.tree}: {e}") from e

    if args.pair is not None:
        pairs = [(args.pair[0], args.pair[1], 0)]
    else:
        pairs = []
        with open(args.pairs, "r", encoding="utf-8") as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                pairs.append((*line.split()[:2], lineno))

    had_error = False
    for u_text, v_text, lineno in pairs:
        where = f"pair {u_text} {v_text}" + (f" (line {lineno})" if lineno else "")
        try:
            u, v = int(u_text), int(v_text)
        except ValueError:
            print(f"error: {where}: non-numeric node id", file=sys.stderr)
            had_error = True
            continue
        try:
            sim = mapsim(tree, u, v)
            bits = description_length(tree, u, v)
        except (KeyError, ValidationError) as e:
            message = e.args[0] if e.args else e
            print(f"error: {where}: {message}", file=sys.stderr)
            had_error = True
            continue
        print(f"{u} {v} {_sci(sim)} {bits:.6f}")
    return 1 if had_error else 0


def cmd_evaluate(args) -> int:
    if args.folds < 2:
        raise UsageError(f"--folds must be at least 2, got {args.folds}")
    if args.trials < 1:
        raise UsageError(f"--trials must be at least 1, got {args.trials}")
    method = {"mapsim": "mapsim", "mapsim1": "mapsim_one_module"}.get(args.method)
    if method is None:
        raise UsageError(f"--method must be 'mapsim' or 'mapsim1', got {args.method!r}")
    g = _load_graph(args.edges, args.directed)
    cfg = EvalConfig(
        folds=args.folds,
        seed=args.seed,
        trials=args.trials,
        method=method,
        flow=FlowConfig(teleport_probability=args.teleport),
    )
    report = evaluate(g, cfg)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            json.dump(report.to_json(), f, indent=2)
            f.write("\n")
    print(
        f"auc={report.auc_mean:.6f}±{report.auc_std:.6f} "
        f"aupr={report.aupr_mean:.6f}±{report.aupr_std:.6f}"
    )
    return 0


def cmd_generate(args) -> int:
    n, k = args.nodes, args.degree
    if n % 2 != 0 or n < 4:
        raise UsageError(f"--nodes must be even and at least 4, got {n}")
    if k < 1 or k >= n // 2:
        raise UsageError(f"--degree must satisfy 1 <= k < n/2, got k={k}, n={n}")
    if (k * (n // 2)) % 2 != 0:
        raise UsageError(f"k*(n/2) must be even, got k={k}, n={n}")
    g = generate_crossed_k_regular(n, k, args.seed)
    with open(args.output, "w", encoding="utf-8") as f:
        f.write(format_edge_list(g))
    print(f"nodes={g.num_nodes} edges={g.num_edges}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="mapsim",
        description=(
            "Map-equation node similarities: community detection by codelength "
            "minimization, similarity scoring, and link-prediction evaluation. "
            "Computations run on the largest (weakly) connected component."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=True):
        p.add_argument("--directed", action="store_true", help="treat edges as directed")
        p.add_argument("--seed", type=int, default=1, help="master random seed")
        p.add_argument("--teleport", type=float, default=0.15, metavar="TAU",
                       help="teleport probability of the directed flow model")
        if trials:
            p.add_argument("--trials", type=int, default=100,
                           help="optimizer restarts; best codelength wins")

    p = sub.add_parser("partition", help="detect communities and write a tree file")
    p.add_argument("edges", help="edge-list file: 'src dst [weight]' per line")
    common(p)
    p.add_argument("-o", "--output", required=True, help="tree file to write")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("codelength", help="codelength of a tree file's partition")
    p.add_argument("edges")
    p.add_argument("tree", help="tree file; rates are rebuilt from the edges")
    common(p, trials=False)
    p.set_defaults(func=cmd_codelength)

    p = sub.add_parser("score", help="similarity and description length of node pairs")
    p.add_argument("edges")
    p.add_argument("tree")
    common(p, trials=False)
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--pairs", help="file of 'u v' lines")
    grp.add_argument("--pair", nargs=2, metavar=("U", "V"), help="a single pair")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="cross-validated link prediction")
    p.add_argument("edges")
    common(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--method", default="mapsim", help="mapsim | mapsim1")
    p.add_argument("-o", "--output", help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("generate", help="write a crossed k-regular random graph")
    p.add_argument("--nodes", type=int, required=True, metavar="N")
    p.add_argument("--degree", type=int, required=True, metavar="K")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"mapsim: error: {e}", file=sys.stderr)
        return 1
    except InputDataError as e:
        print(f"mapsim: input error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"mapsim: i/o error: {e}", file=sys.stderr)
        return 2
    except ConvergenceError as e:
        print(f"mapsim: computation failed: {e}", file=sys.stderr)
        return 3
    except ValidationError as e:
        print(f"mapsim: computation failed: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
