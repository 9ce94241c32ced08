"""Command-line interface: ``sigmaspace <command> ...``.

Exit codes
    0  success
    1  malformed input or bad usage
    2  incompatible trees or mismatched types
    3  enumeration bound exceeded
    4  a structural check failed
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io as sio
from .complex import (
    BoundExceededError,
    build_complex,
    census,
    check_cube_condition,
    find_3_cycles,
    leaf_map_types,
    link_graph,
    perfect_cospeciation_faces,
)
from .metric import (
    DIST_TOL,
    SigmaSpace,
    TypeMismatchError,
    cone_distance,
    forget,
    frechet_mean,
    sigma_coordinates,
    tree_from_sigma,
)
from .nesting import (
    IncompatibleError,
    LeafMap,
    TieError,
    annotated_nesting_sequence,
    canonical_nesting_sequence,
    cospeciation_events,
    is_maximally_coupled,
    nesting_sequence,
)
from .trees import TIME_TOL, NewickError, NonUltrametricError, tree_from_tau

EXIT_OK, EXIT_MALFORMED, EXIT_INCOMPATIBLE, EXIT_BOUND, EXIT_CHECK = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def num(x: float) -> str:
    return f"{x:.12g}"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_MALFORMED, f"{self.prog}: error: {message}\n")


def _emit(args, text: str, data) -> None:
    if args.json:
        print(json.dumps(data, indent=2, sort_keys=False))
    else:
        print(text)


def _leaf_map(args) -> LeafMap:
    hosts = args.hosts.split(",") if getattr(args, "hosts", None) else None
    return LeafMap.parse(args.map, host_labels=hosts)


def _types(args) -> list[LeafMap]:
    if args.map:
        return [_leaf_map(args)]
    if args.n is None or args.m is None:
        raise UsageError("give --map, or both -n and -m")
    return leaf_map_types(args.n, args.m)


def _tree_tol(args) -> float:
    # for dist and geodesic --tol is the distance tolerance
    if args.tol is None or args.func in (cmd_dist, cmd_geodesic):
        return TIME_TOL
    return args.tol


def _load(args, path: str):
    return sio.load_nested(path, _tree_tol(args))


# -- commands -------------------------------------------------------------------------


def cmd_validate(args) -> int:
    nested = _load(args, args.file)
    seq = canonical_nesting_sequence(nested)
    rep = cospeciation_events(nested)
    lm = nested.leaf_map
    text = "\n".join([
        f"compatible; sequence {seq}",
        f"host degree: {lm.host_degree}",
        f"parasite multiplicity: {lm.parasite_multiplicity}",
        f"cospeciations: {len(rep.realized)} realized, {len(rep.potential)} potential",
    ])
    _emit(args, text, {"compatible": True, "sequence": list(seq.labels),
                       "host_degree": lm.host_degree,
                       "parasite_multiplicity": lm.parasite_multiplicity,
                       "realized": list(rep.realized), "potential": list(rep.potential)})
    return EXIT_OK


def cmd_seq(args) -> int:
    nested = _load(args, args.file)
    if args.plain:
        seq = str(nesting_sequence(nested))
    elif args.annotated:
        seq = str(annotated_nesting_sequence(nested))
    else:
        seq = str(canonical_nesting_sequence(nested))
    _emit(args, seq, {"sequence": seq})
    return EXIT_OK


def _pair(args):
    a, b = _load(args, args.a), _load(args, args.b)
    if a.leaf_map != b.leaf_map:
        raise TypeMismatchError(f"leaf maps differ: {a.leaf_map.format()} vs {b.leaf_map.format()}")
    space = SigmaSpace(a.leaf_map, bound=args.bound)
    return space, sigma_coordinates(a), sigma_coordinates(b)


def cmd_dist(args) -> int:
    space, p, q = _pair(args)
    dist_tol = args.tol if args.tol is not None else DIST_TOL
    if args.method == "cone":
        d, exact = cone_distance(p, q), True
    else:
        path = space.geodesic(p, q, dist_tol)
        d, exact = path.length, path.exact
        if args.path:
            Path(args.path).write_text(json.dumps(sio.geodesic_to_json(path, space, args.samples),
                                                  indent=2) + "\n")
    _emit(args, num(d), {"distance": d, "method": args.method, "exact": exact})
    return EXIT_OK


def cmd_geodesic(args) -> int:
    space, p, q = _pair(args)
    path = space.geodesic(p, q, args.tol if args.tol is not None else DIST_TOL)
    data = sio.geodesic_to_json(path, space, args.samples)
    lines = [f"length {num(path.length)}" + ("" if path.exact else " (search capped)")]
    for b in path.breakpoints:
        lines.append(f"{b.orthant.annotated}  [{', '.join(num(x) for x in b.sigma)}]")
    _emit(args, "\n".join(lines), data)
    return EXIT_OK


def cmd_mean(args) -> int:
    trees = [_load(args, f) for f in args.files]
    pts = [sigma_coordinates(t) for t in trees]
    mean = frechet_mean(pts, seed=args.seed, restarts=args.restarts)
    nested = tree_from_sigma(mean.orthant, mean.sigma, _tree_tol(args))
    bundle = sio.Bundle.from_nested(nested, name="frechet mean")
    if args.output:
        sio.write_bundle(args.output, bundle)
    print(json.dumps(bundle.to_json(), indent=2))
    return EXIT_OK


def cmd_enumerate(args) -> int:
    rows, data = [], []
    for lm in _types(args):
        counts = census(lm, args.bound)
        total = sum(counts.values())
        parts = ", ".join(f"{s}×{c}" for s, c in sorted(counts.items(), reverse=True))
        line = f"{total} orthants: {parts}"
        rows.append(line if args.map else f"{lm.format()}  {line}")
        data.append({"leaf_map": lm.as_dict(), "orthants": total, "sequences": counts})
        if args.list:
            for o in sorted(build_complex(lm, bound=args.bound).orthants, key=lambda o: o.sequence,
                            reverse=True):
                rows.append("  " + o.describe())
    _emit(args, "\n".join(rows), data if len(data) > 1 else data[0])
    return EXIT_OK


def _link_summary(lm: LeafMap, bound):
    model = build_complex(lm, reduced=True, bound=bound)
    lg = link_graph(model)
    degrees: dict[str, list[int]] = {}
    for v in lg.vertices:
        degrees.setdefault(str(model.orthants[v].annotated), []).append(lg.degree(v))
    return model, lg, degrees


def cmd_link(args) -> int:
    lm = _leaf_map(args)
    model, lg, degrees = _link_summary(lm, args.bound)
    cycles = find_3_cycles(model)
    lines = [f"{len(lg.vertices)} vertices, {len(lg.edges)} edges",
             *(f"  {s}: {len(d)} vertices, degree {sorted(set(d))}" for s, d in sorted(degrees.items())),
             f"no 3-cycles: {'PASS' if not cycles else 'FAIL'}"]
    if args.svg:
        sio.link_to_svg(lg, args.svg, seed=args.seed)
    if args.dot:
        Path(args.dot).write_text(sio.link_to_dot(lg))
    if args.graphml:
        sio.link_to_graphml(lg, args.graphml)
    _emit(args, "\n".join(lines), {"vertices": len(lg.vertices), "edges": len(lg.edges),
                                   "degrees": degrees, "three_cycles": [list(c) for c in cycles]})
    return EXIT_OK if not cycles else EXIT_CHECK


def cmd_check(args) -> int:
    want_cube = args.cube or not args.three_cycle
    want_cycle = args.three_cycle or not args.cube
    lines, data, ok = [], [], True
    lms = _types(args)
    for lm in lms:
        model = build_complex(lm, reduced=True, bound=args.bound)
        entry = {"leaf_map": lm.as_dict()}
        prefix = "" if len(lms) == 1 else f"{lm.format()}  "
        if want_cycle:
            good = not find_3_cycles(model)
            entry["no_3_cycles"] = good
            lines.append(f"{prefix}no 3-cycles: {'PASS' if good else 'FAIL'}")
            ok &= good
        if want_cube:
            good = check_cube_condition(build_complex(lm, bound=args.bound))
            entry["cube_condition"] = good
            lines.append(f"{prefix}cube condition: {'PASS' if good else 'FAIL'}")
            ok &= good
        data.append(entry)
    _emit(args, "\n".join(lines), data if len(data) > 1 else data[0])
    return EXIT_OK if ok else EXIT_CHECK


def cmd_forget(args) -> int:
    nested = _load(args, args.file)
    th, tp = forget(sigma_coordinates(nested))
    host = tree_from_tau(th).to_newick()
    para = tree_from_tau(tp).to_newick()
    _emit(args, f"{host}\n{para}", {"host": host, "parasite": para})
    return EXIT_OK


def cmd_cospec(args) -> int:
    if args.file:
        nested = _load(args, args.file)
        rep = cospeciation_events(nested)
        coupled = is_maximally_coupled(nested)
        text = "\n".join([f"sequence {rep.labels}",
                          f"realized: {list(rep.realized)}",
                          f"potential: {list(rep.potential)}",
                          f"maximally coupled: {'yes' if coupled else 'no'}"])
        _emit(args, text, {"sequence": list(rep.labels.labels), "realized": list(rep.realized),
                           "potential": list(rep.potential), "maximally_coupled": coupled})
        return EXIT_OK
    lm = _leaf_map(args)
    model = build_complex(lm, reduced=True, bound=args.bound)
    faces = perfect_cospeciation_faces(model)
    dims = sorted(model.face_dim(f) for f in faces)
    _emit(args, f"{len(faces)} faces of perfect cospeciation, dimensions {dims}",
          {"faces": len(faces), "dimensions": dims})
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def global_flags(parser, defaults: bool) -> argparse.ArgumentParser:
        # subcommands repeat the flags without defaults so they never mask a value given earlier
        d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
        parser.add_argument("--tol", type=float, default=d(None),
                            help="tie tolerance for trees, distance tolerance for geodesics")
        parser.add_argument("--json", action="store_true", default=d(False), help="machine-readable output")
        parser.add_argument("--seed", type=int, default=d(0))
        parser.add_argument("--bound", type=int, default=d(None),
                            help="largest n+m to enumerate (default: $SIGMA_SPACE_BOUND or 9)")
        return parser

    common = global_flags(argparse.ArgumentParser(add_help=False), defaults=False)

    typ = argparse.ArgumentParser(add_help=False)
    typ.add_argument("--map", help='leaf map, e.g. "1:A,2:A,3:B"')
    typ.add_argument("--hosts", help="comma-separated host labels, for hosts without parasites")
    typ.add_argument("-n", type=int, help="number of host leaves")
    typ.add_argument("-m", type=int, help="number of parasite leaves")

    parser = global_flags(_Parser(prog="sigmaspace", description="Nested ultrametric trees and their space."),
                          defaults=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common], help="check a bundle and report its sequence")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("seq", parents=[common], help="nesting sequence of a bundle")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--canonical", action="store_true", help="canonical annotated form (default)")
    g.add_argument("--annotated", action="store_true", help="annotated, resolved trees only")
    g.add_argument("--plain", action="store_true", help="letters H and P only")
    p.add_argument("file")
    p.set_defaults(func=cmd_seq)

    for name, func, hlp in (("dist", cmd_dist, "distance between two bundles"),
                            ("geodesic", cmd_geodesic, "geodesic between two bundles")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("a")
        p.add_argument("b")
        p.add_argument("--samples", type=int, default=0, help="points sampled along the path")
        if name == "dist":
            p.add_argument("--method", choices=["exact", "cone"], default="exact")
            p.add_argument("--path", help="write the geodesic as JSON to this file")
        p.set_defaults(func=func)

    p = sub.add_parser("mean", parents=[common], help="Frechet mean of bundles of one type")
    p.add_argument("files", nargs="+")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_mean)

    p = sub.add_parser("enumerate", parents=[common, typ], help="orthants of a type")
    p.add_argument("--list", action="store_true", help="also list every orthant")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("link", parents=[common, typ], help="link graph of the reduced complex")
    p.add_argument("--svg")
    p.add_argument("--dot")
    p.add_argument("--graphml")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("check", parents=[common, typ], help="structural checks")
    p.add_argument("--cube", action="store_true", help="cube condition")
    p.add_argument("--3cycle", dest="three_cycle", action="store_true", help="no 3-cycles in the link")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("forget", parents=[common], help="host and parasite trees of a bundle")
    p.add_argument("file")
    p.set_defaults(func=cmd_forget)

    p = sub.add_parser("cospec", parents=[common, typ],
                       help="cospeciations of a bundle, or perfect-cospeciation faces of a type")
    p.add_argument("file", nargs="?")
    p.set_defaults(func=cmd_cospec)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IncompatibleError as exc:
        _fail(args, f"incompatible: {exc}", {"compatible": False, "pair": list(exc.pair or ()),
                                             "margin": exc.margin})
        return EXIT_INCOMPATIBLE
    except TypeMismatchError as exc:
        _fail(args, f"type mismatch: {exc}", {"error": "type mismatch"})
        return EXIT_INCOMPATIBLE
    except BoundExceededError as exc:
        _fail(args, str(exc), {"error": "bound exceeded"})
        return EXIT_BOUND
    except (sio.BundleError, NewickError) as exc:
        _fail(args, f"malformed input: {exc}", {"error": "malformed", "position": exc.position})
        return EXIT_MALFORMED
    except (NonUltrametricError, TieError, UsageError, ValueError, OSError) as exc:
        _fail(args, f"error: {exc}", {"error": str(exc)})
        return EXIT_MALFORMED


def _fail(args, text: str, data) -> None:
    if args.json:
        print(json.dumps(data))
    print(text, file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
