"""Reading and writing bundles, matrices, complexes, link graphs and geodesics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any

import networkx as nx
import numpy as np

from .complex import ComplexModel, LinkGraph, link_graph
from .metric import GeodesicPath, SigmaSpace
from .nesting import LeafMap, NestedTree
from .trees import TIME_TOL, UltrametricMatrix, parse_newick

PathLike = str | Path


class BundleError(ValueError):
    """A bundle file could not be read; ``position`` is a character offset when known."""

    def __init__(self, msg: str, position: int | None = None):
        super().__init__(msg if position is None else f"{msg} (at position {position})")
        self.position = position


@dataclass
class Bundle:
    host: str
    parasite: str
    leaf_map: dict[str, str]
    name: str | None = None
    units: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def to_nested(self, tol: float = TIME_TOL) -> NestedTree:
        host = parse_newick(self.host, tol)
        parasite = parse_newick(self.parasite, tol)
        missing = set(parasite.topology.labels) - set(self.leaf_map)
        if missing:
            raise BundleError(f"leaf map has no entry for parasites {sorted(missing)}")
        unknown = set(self.leaf_map) - set(parasite.topology.labels)
        if unknown:
            raise BundleError(f"leaf map names parasites not in the tree: {sorted(unknown)}")
        lm = LeafMap.from_dict(self.leaf_map, host_labels=host.topology.labels)
        return NestedTree(host, parasite, lm, tol)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"host": self.host, "parasite": self.parasite,
                               "leaf_map": dict(self.leaf_map)}
        if self.name is not None:
            out["name"] = self.name
        if self.units is not None:
            out["units"] = self.units
        out.update(self.extra)
        return out

    @classmethod
    def from_nested(cls, nested: NestedTree, name: str | None = None, units: str | None = None,
                    digits: int = 12) -> Bundle:
        return cls(nested.host.to_newick(digits), nested.parasite.to_newick(digits),
                   nested.leaf_map.as_dict(), name, units)


def parse_bundle(text: str) -> Bundle:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BundleError(f"malformed JSON: {exc.msg}", exc.pos) from None
    if not isinstance(data, dict):
        raise BundleError("bundle must be a JSON object")
    for key in ("host", "parasite", "leaf_map"):
        if key not in data:
            raise BundleError(f"bundle is missing {key!r}")
    lm = data["leaf_map"]
    if isinstance(lm, str):
        lm = LeafMap.parse(lm).as_dict() if lm.strip() else {}
    elif not isinstance(lm, dict):
        raise BundleError("leaf_map must be an object or a 'p:h,...' string")
    extra = {k: v for k, v in data.items() if k not in {"host", "parasite", "leaf_map", "name", "units"}}
    return Bundle(str(data["host"]), str(data["parasite"]), {str(k): str(v) for k, v in lm.items()},
                  data.get("name"), data.get("units"), extra)


def read_bundle(path: PathLike) -> Bundle:
    return parse_bundle(Path(path).read_text())


def load_nested(path: PathLike, tol: float = TIME_TOL) -> NestedTree:
    return read_bundle(path).to_nested(tol)


def write_bundle(path: PathLike, bundle: Bundle | NestedTree) -> None:
    if isinstance(bundle, NestedTree):
        bundle = Bundle.from_nested(bundle)
    Path(path).write_text(json.dumps(bundle.to_json(), indent=2) + "\n")


# -- tab-separated formats -----------------------------------------------------------


def read_leaf_map_tsv(path: PathLike, host_labels=None) -> LeafMap:
    """Two columns per line, parasite then host; '#' starts a comment."""
    mapping: dict[str, str] = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), 1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise BundleError(f"line {lineno}: expected 2 columns, got {len(row)}")
            p, h = (x.strip() for x in row)
            if p in mapping:
                raise BundleError(f"line {lineno}: parasite {p!r} mapped twice")
            mapping[p] = h
    return LeafMap.from_dict(mapping, host_labels)


def write_leaf_map_tsv(path: PathLike, leaf_map: LeafMap) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerows(leaf_map.as_dict().items())


def read_matrix_tsv(source: PathLike | IO[str]) -> UltrametricMatrix:
    """Square matrix with a header row of labels and the label in the first column."""
    fh = open(source, newline="") if isinstance(source, (str, Path)) else source
    try:
        rows = [r for r in csv.reader(fh, delimiter="\t") if r]
    finally:
        if isinstance(source, (str, Path)):
            fh.close()
    if not rows:
        raise BundleError("empty matrix file")
    header = [x.strip() for x in rows[0][1:]]
    body = rows[1:]
    if len(body) != len(header):
        raise BundleError(f"expected {len(header)} rows, got {len(body)}")
    d = np.zeros((len(header), len(header)))
    for i, row in enumerate(body):
        if row[0].strip() != header[i]:
            raise BundleError(f"row {i + 1} label {row[0]!r} does not match header {header[i]!r}")
        try:
            d[i] = [float(x) for x in row[1:]]
        except ValueError as exc:
            raise BundleError(f"row {i + 1}: {exc}") from None
    return UltrametricMatrix(tuple(header), d)


def write_matrix_tsv(target: PathLike | IO[str], m: UltrametricMatrix, digits: int = 12) -> None:
    own = isinstance(target, (str, Path))
    fh = open(target, "w", newline="") if own else target
    try:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["", *m.labels])
        for lab, row in zip(m.labels, m.d):
            w.writerow([lab, *(f"{x:.{digits}g}" for x in row)])
    finally:
        if own:
            fh.close()


def matrix_to_text(m: UltrametricMatrix, digits: int = 12) -> str:
    buf = io.StringIO()
    write_matrix_tsv(buf, m, digits)
    return buf.getvalue()


# -- complexes and link graphs ---------------------------------------------------------


def complex_to_json(model: ComplexModel) -> dict[str, Any]:
    lg = link_graph(model)
    facets = []
    for row in model.facets:
        for f in row:
            facets.append({"orthant": f.orthant, "index": f.index, "kind": f.kind,
                           "incident": list(f.incident)})
    return {
        "leaf_map": model.leaf_map.as_dict(),
        "host_labels": list(model.leaf_map.host_labels),
        "reduced": model.reduced,
        "orthants": [{"id": i, "sequence": str(o.annotated),
                      "host": [s.format(o.host.labels) for s in o.host.events],
                      "parasite": [s.format(o.parasite.labels) for s in o.parasite.events]}
                     for i, o in enumerate(model.orthants)],
        "facets": facets,
        "link_edges": [{"orthants": list(inc), "kind": lg.edge_kinds.get(k)}
                       for k, inc in lg.edges.items()],
    }


def link_to_graphml(lg: LinkGraph, path: PathLike) -> None:
    g = lg.to_networkx()
    nx.write_graphml(g, str(path))


def link_to_dot(lg: LinkGraph) -> str:
    """Graphviz text; shared facets of more than two orthants become small box nodes."""
    lines = ["graph link {", "  node [shape=circle];"]
    for v in lg.vertices:
        label = lg.labels[v] if v < len(lg.labels) else str(v)
        lines.append(f'  o{v} [label="{v}: {label}"];')
    for j, (key, inc) in enumerate(lg.edges.items()):
        kind = lg.edge_kinds.get(key, "")
        if len(inc) == 2:
            lines.append(f'  o{inc[0]} -- o{inc[1]} [label="{kind}"];')
        else:
            lines.append(f'  f{j} [shape=box, width=0.1, height=0.1, label="", xlabel="{kind}"];')
            lines.extend(f"  o{v} -- f{j};" for v in inc)
    lines.append("}")
    return "\n".join(lines) + "\n"


def link_to_svg(lg: LinkGraph, path: PathLike, seed: int = 0) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    g = lg.to_networkx()
    pos = nx.spring_layout(g, seed=seed)
    fig, ax = plt.subplots(figsize=(6, 6))
    orth = [n for n, d in g.nodes(data=True) if d.get("kind") == "orthant"]
    fac = [n for n in g.nodes if n not in orth]
    nx.draw_networkx_edges(g, pos, ax=ax, width=0.8)
    nx.draw_networkx_nodes(g, pos, nodelist=orth, node_size=260, node_color="#9ecae1", ax=ax)
    nx.draw_networkx_nodes(g, pos, nodelist=fac, node_size=30, node_color="#636363",
                           node_shape="s", ax=ax)
    nx.draw_networkx_labels(g, pos, labels={n: n[1:] for n in orth}, font_size=8, ax=ax)
    ax.set_axis_off()
    fig.savefig(str(path), format="svg", bbox_inches="tight")
    plt.close(fig)


# -- geodesics ---------------------------------------------------------------------------


def geodesic_to_json(path: GeodesicPath, space: SigmaSpace, samples: int = 0) -> dict[str, Any]:
    out: dict[str, Any] = {
        "length": path.length,
        "exact": path.exact,
        "breakpoints": [{"orthant": space.index[b.orthant], "sequence": str(b.orthant.annotated),
                         "sigma": list(b.sigma)} for b in path.breakpoints],
    }
    if samples:
        out["samples"] = [{"orthant": space.index[x.orthant], "sigma": list(x.sigma)}
                          for x in path.sample(samples)]
    return out
