"""The cube complex of nested ranked topologies for a fixed leaf map.

Every orthant is a resolved nested ranked topology; a face of an orthant is
given by the set of coordinates that vanish.  Faces of different orthants
are identified when they describe the same (possibly unresolved) nested
tree, which is decided by comparing :func:`face_key` values.
"""

from __future__ import annotations

import itertools
import os
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

from .nesting import (
    AnnotatedNestingSequence,
    LeafMap,
    NestingSequence,
    annotate,
    interleaved_sequence,
    is_admissible,
    letter_counts_ok,
)
from .trees import RankedTopology, Split, enumerate_ranked_topologies, lowest_bit

DEFAULT_BOUND = 9

LEAF_INTERVAL = "leaf-interval"
NNI_HOST = "nni-host"
RANK_HOST = "rank-host"
NNI_PARASITE = "nni-parasite"
RANK_PARASITE = "rank-parasite"
RANK_HP = "rank-hp"
COSPECIATION = "cospeciation-boundary"

EXPECTED_INCIDENCE = {
    LEAF_INTERVAL: 1,
    COSPECIATION: 1,
    RANK_HOST: 2,
    RANK_PARASITE: 2,
    RANK_HP: 2,
    NNI_HOST: 3,
    NNI_PARASITE: 3,
}


class BoundExceededError(ValueError):
    pass


def enumeration_bound(bound: int | None = None) -> int:
    if bound is not None:
        return bound
    return int(os.environ.get("SIGMA_SPACE_BOUND", DEFAULT_BOUND))


@dataclass(frozen=True)
class NestedRankedTopology:
    """A resolved nested ranked topology (one orthant of the complex)."""

    leaf_map: LeafMap
    host: RankedTopology
    parasite: RankedTopology
    sequence: str

    @cached_property
    def events(self) -> tuple[tuple[str, Split], ...]:
        h = iter(self.host.events)
        p = iter(self.parasite.events)
        return tuple((c, next(h) if c == "H" else next(p)) for c in self.sequence)

    @cached_property
    def annotated(self) -> AnnotatedNestingSequence:
        return annotate([k for k, _ in self.events], [s for _, s in self.events], self.leaf_map)

    @property
    def dimension(self) -> int:
        return len(self.sequence)

    def describe(self) -> str:
        return (f"{self.annotated}  host {self.host.describe()}  "
                f"parasite {self.parasite.describe()}")


def _simulate(kinds: Sequence[str], splits: Sequence[Split], leaf_map: LeafMap) -> bool:
    host_live = {1 << i for i in range(leaf_map.n)}
    para_live = {1 << i for i in range(leaf_map.m)}
    for kind, split in zip(kinds, splits):
        live = host_live if kind == "H" else para_live
        if any(b not in live for b in split.blocks):
            return False
        if kind == "P":
            homes = set()
            for b in split.blocks:
                img = leaf_map.image(b)
                home = [hl for hl in host_live if img & ~hl == 0]
                if not home:
                    return False
                homes.add(home[0])
            if len(homes) != 1:
                return False
        for b in split.blocks:
            live.discard(b)
        live.add(split.mask)
    return True


def is_valid_nrt(rt_host: RankedTopology, rt_parasite: RankedTopology, leaf_map: LeafMap,
                 seq: str | NestingSequence) -> bool:
    """Upward lineage simulation of the merged event order.

    Every parasite merge must join lineages sitting in a single live host
    lineage at that point of the sequence.
    """
    seq = str(seq)
    if rt_host.labels != leaf_map.host_labels or rt_parasite.labels != leaf_map.parasite_labels:
        raise ValueError("topology labels do not match the leaf map")
    if not letter_counts_ok(seq, leaf_map.n, leaf_map.m):
        raise ValueError(f"sequence {seq!r} does not match the topologies' event counts")
    if len(rt_host.events) != leaf_map.n - 1 or len(rt_parasite.events) != leaf_map.m - 1:
        raise ValueError("topologies must be fully resolved")
    h = iter(rt_host.events)
    p = iter(rt_parasite.events)
    splits = [next(h) if c == "H" else next(p) for c in seq]
    return _simulate(seq, splits, leaf_map)


def enumerate_orthants(leaf_map: LeafMap, bound: int | None = None) -> list[NestedRankedTopology]:
    """All resolved nested ranked topologies of the leaf map's type.

    Built by coalescing upward: each step merges two live host lineages or
    two live parasite lineages that share a host lineage.  Sorted by nesting
    sequence, then host events, then parasite events.
    """
    limit = enumeration_bound(bound)
    if leaf_map.n + leaf_map.m > limit:
        raise BoundExceededError(f"n+m={leaf_map.n + leaf_map.m} exceeds the enumeration bound {limit}")
    return list(_enumerate_cached(leaf_map))


@lru_cache(maxsize=64)
def _enumerate_cached(leaf_map: LeafMap) -> tuple[NestedRankedTopology, ...]:
    found: list[tuple[str, tuple[Split, ...], tuple[Split, ...]]] = []

    def rec(host_live, para_live, seq, hev, pev):
        if len(host_live) == 1 and len(para_live) == 1:
            found.append((seq, tuple(hev), tuple(pev)))
            return
        for a, b in itertools.combinations(host_live, 2):
            rest = sorted([x for x in host_live if x not in (a, b)] + [a | b], key=lowest_bit)
            rec(rest, para_live, seq + "H", hev + [Split.of(a, b)], pev)
        for a, b in itertools.combinations(para_live, 2):
            ia, ib = leaf_map.image(a), leaf_map.image(b)
            if any((ia | ib) & ~hl == 0 for hl in host_live):
                rest = sorted([x for x in para_live if x not in (a, b)] + [a | b], key=lowest_bit)
                rec(host_live, rest, seq + "P", hev, pev + [Split.of(a, b)])

    rec([1 << i for i in range(leaf_map.n)], [1 << i for i in range(leaf_map.m)], "", [], [])
    found.sort(key=lambda x: (x[0], [s.blocks for s in x[1]], [s.blocks for s in x[2]]))
    return tuple(
        NestedRankedTopology(leaf_map, RankedTopology(leaf_map.host_labels, h),
                             RankedTopology(leaf_map.parasite_labels, p), seq)
        for seq, h, p in found)


# -- faces -------------------------------------------------------------------------

FaceKey = tuple


def _group_part(splits: Iterable[Split]) -> frozenset:
    comp: dict[int, frozenset] = {}
    for s in splits:
        parts = [comp.pop(b) if b in comp else frozenset([b]) for b in s.blocks]
        comp[s.mask] = frozenset().union(*parts)
    return frozenset(comp.values())


def face_key(nrt: NestedRankedTopology, zeros: Iterable[int]) -> FaceKey:
    """Canonical description of the face where the 1-based ``zeros`` vanish.

    The key lists, per distinct event time, which host and which parasite
    lineages coalesce; a leading ``True`` marks a first timestep at time 0.
    """
    zeros = frozenset(zeros)
    groups: list[tuple[list[Split], list[Split]]] = []
    for i, (kind, split) in enumerate(nrt.events, start=1):
        if i == 1 or i not in zeros:
            groups.append(([], []))
        groups[-1][0 if kind == "H" else 1].append(split)
    return (1 in zeros,) + tuple((_group_part(h), _group_part(p)) for h, p in groups)


def host_projection(key: FaceKey) -> FaceKey:
    """Drop parasite information from a face key (tau-space face of the host)."""
    leaf_flag, *groups = key
    kept = [(hg, frozenset()) for hg, _ in groups if hg]
    first_kept_is_leaf = bool(groups) and leaf_flag and bool(groups[0][0])
    return (first_kept_is_leaf,) + tuple(kept)


def tau_face_key(rt: RankedTopology, zeros: Iterable[int]) -> FaceKey:
    zeros = frozenset(zeros)
    groups: list[list[Split]] = []
    for i, split in enumerate(rt.events, start=1):
        if i == 1 or i not in zeros:
            groups.append([])
        groups[-1].append(split)
    return (1 in zeros,) + tuple((_group_part(g), frozenset()) for g in groups)


@dataclass(frozen=True)
class Facet:
    orthant: int
    index: int  # 1-based vanishing coordinate
    kind: str
    key: FaceKey = field(repr=False)
    incident: tuple[int, ...]


@dataclass
class ComplexModel:
    """Face lattice of the complex for one leaf map.

    With ``reduced`` the first (leaf) interval is dropped, i.e. the model is
    of the factor that remains after splitting off that half-line.
    """

    leaf_map: LeafMap
    orthants: list[NestedRankedTopology]
    reduced: bool = False
    max_codim: int | None = None

    def __post_init__(self):
        self.index = {o: i for i, o in enumerate(self.orthants)}
        self._keys: dict[tuple[int, frozenset], FaceKey] = {}
        self.occurrences: dict[FaceKey, list[tuple[int, frozenset]]] = defaultdict(list)
        dim = self.ambient_dim
        coords = self.coordinates
        for o in range(len(self.orthants)):
            for r in range(len(coords) + 1):
                if self.max_codim is not None and r > self.max_codim and r != len(coords):
                    continue
                for z in itertools.combinations(coords, r):
                    self.occurrences[self.key(o, z)].append((o, frozenset(z)))
        self.occurrences = dict(self.occurrences)
        assert dim >= 0

    @property
    def n_coords(self) -> int:
        return self.leaf_map.n + self.leaf_map.m - 2

    @property
    def coordinates(self) -> tuple[int, ...]:
        """1-based coordinate indices that belong to the model."""
        start = 2 if self.reduced else 1
        return tuple(range(start, self.n_coords + 1))

    @property
    def ambient_dim(self) -> int:
        return len(self.coordinates)

    def key(self, orthant: int, zeros: Iterable[int]) -> FaceKey:
        z = frozenset(zeros)
        k = self._keys.get((orthant, z))
        if k is None:
            k = face_key(self.orthants[orthant], z)
            self._keys[(orthant, z)] = k
        return k

    def face_dim(self, key: FaceKey) -> int:
        o, z = self.occurrences[key][0]
        return self.ambient_dim - len(z)

    def faces_by_dim(self) -> dict[int, list[FaceKey]]:
        out: dict[int, list[FaceKey]] = defaultdict(list)
        for k in self.occurrences:
            out[self.face_dim(k)].append(k)
        return dict(sorted(out.items()))

    @property
    def cone_point(self) -> FaceKey:
        return self.key(0, self.coordinates)

    def orthants_containing(self, key: FaceKey) -> list[int]:
        return sorted({o for o, _ in self.occurrences[key]})

    def face_positions(self, orthant: int, key: FaceKey) -> list[int]:
        """1-based positive coordinates of face ``key`` in an orthant's chart."""
        for o, z in self.occurrences[key]:
            if o == orthant:
                return [i for i in self.coordinates if i not in z]
        raise KeyError("face is not a face of this orthant")

    @cached_property
    def facets(self) -> list[list[Facet]]:
        out = []
        for o, nrt in enumerate(self.orthants):
            row = []
            for i in self.coordinates:
                k = self.key(o, (i,))
                incident = tuple(sorted({oo for oo, z in self.occurrences[k] if len(z) == 1}))
                row.append(Facet(o, i, classify_facet(nrt, i, len(incident)), k, incident))
            out.append(row)
        return out

    @cached_property
    def common_faces(self) -> dict[tuple[int, int], list[FaceKey]]:
        """Maximal faces shared by two orthants (cone point excluded)."""
        per = defaultdict(set)
        for k, occ in self.occurrences.items():
            for o, _ in occ:
                per[o].add(k)
        out = {}
        cone = self.cone_point
        for a, b in itertools.combinations(range(len(self.orthants)), 2):
            common = (per[a] & per[b]) - {cone}
            if not common:
                continue
            zs = {k: dict(self.occurrences[k])[a] for k in common}
            maximal = [k for k in common
                       if not any(zs[j] < zs[k] for j in common if j != k)]
            maximal.sort(key=lambda k: len(zs[k]))
            out[(a, b)] = maximal
            out[(b, a)] = maximal
        return out


def classify_facet(nrt: NestedRankedTopology, index: int, incidence: int) -> str:
    """Kind of the facet where coordinate ``index`` (1-based) vanishes."""
    if index == 1:
        return LEAF_INTERVAL
    (k0, s0), (k1, s1) = nrt.events[index - 2], nrt.events[index - 1]
    if k0 == k1:
        nested = s0.mask in s1.blocks
        if k0 == "H":
            return NNI_HOST if nested else RANK_HOST
        return NNI_PARASITE if nested else RANK_PARASITE
    return COSPECIATION if incidence == 1 else RANK_HP


def facets_of(nrt: NestedRankedTopology, model: ComplexModel | None = None) -> list[Facet]:
    model = model or build_complex(nrt.leaf_map)
    return model.facets[model.index[nrt]]


@lru_cache(maxsize=64)
def _build_cached(leaf_map: LeafMap, max_codim: int | None, reduced: bool) -> ComplexModel:
    return ComplexModel(leaf_map, list(_enumerate_cached(leaf_map)), reduced, max_codim)


def build_complex(leaf_map: LeafMap, max_codim: int | None = None, reduced: bool = False,
                  bound: int | None = None) -> ComplexModel:
    enumerate_orthants(leaf_map, bound)  # bound check
    return _build_cached(leaf_map, max_codim, reduced)


# -- link of the cone point ----------------------------------------------------------


@dataclass(frozen=True)
class LinkGraph:
    """Orthants joined by shared internal facets.

    A facet shared by three orthants (an NNI) is a single hyperedge on all
    three, so ``degree`` counts shared facets rather than neighbours.
    """

    vertices: tuple[int, ...]
    edges: dict = field(hash=False)  # facet key -> incident orthants
    labels: tuple[str, ...] = ()
    edge_kinds: dict = field(default_factory=dict, hash=False)

    def degree(self, v: int) -> int:
        return sum(v in inc for inc in self.edges.values())

    def neighbours(self, v: int) -> set[int]:
        return {u for inc in self.edges.values() if v in inc for u in inc if u != v}

    def to_networkx(self):
        import networkx as nx

        g = nx.Graph()
        for v in self.vertices:
            g.add_node(f"o{v}", kind="orthant", label=self.labels[v] if self.labels else str(v))
        for j, (k, inc) in enumerate(sorted(self.edges.items(), key=lambda kv: kv[1])):
            name = f"f{j}"
            g.add_node(name, kind="facet", facet_kind=self.edge_kinds.get(k, ""))
            for v in inc:
                g.add_edge(f"o{v}", name)
        return g


def link_graph(model: ComplexModel) -> LinkGraph:
    edges: dict = {}
    kinds: dict = {}
    for row in model.facets:
        for f in row:
            if len(f.incident) >= 2 and f.index != 1:
                edges[f.key] = f.incident
                kinds[f.key] = f.kind
    labels = tuple(str(o.annotated) for o in model.orthants)
    return LinkGraph(tuple(range(len(model.orthants))), edges, labels, kinds)


def find_3_cycles(model: ComplexModel) -> list[tuple[int, int, int]]:
    """Triples of orthants pairwise sharing three distinct facets."""
    shared = defaultdict(set)
    for k, inc in link_graph(model).edges.items():
        for a, b in itertools.combinations(inc, 2):
            shared[(a, b)].add(k)
            shared[(b, a)].add(k)
    nbrs = defaultdict(set)
    for a, b in shared:
        nbrs[a].add(b)
    out = []
    for a in sorted(nbrs):
        for b in sorted(x for x in nbrs[a] if x > a):
            for c in sorted(x for x in nbrs[a] & nbrs[b] if x > b):
                fab, fbc, fca = shared[(a, b)], shared[(b, c)], shared[(c, a)]
                if any(len({x, y, z}) == 3 for x in fab for y in fbc for z in fca):
                    out.append((a, b, c))
    return out


def has_3_cycle(model: ComplexModel) -> bool:
    return bool(find_3_cycles(model))


def cube_condition_violations(model: ComplexModel) -> list[tuple[FaceKey, tuple]]:
    """Corners of three (k+2)-cubes around a k-cube that no (k+3)-cube fills.

    Works face by face: around a k-face K, the (k+1)-faces above K are the
    vertices and the (k+2)-faces are the edges of a graph; each triangle of
    it has to be the boundary of a (k+3)-face above K.
    """
    if model.max_codim is not None:
        raise ValueError("the cube condition needs the full face lattice (max_codim=None)")
    bad = []
    for K, occ in model.occurrences.items():
        edge_ends: dict[FaceKey, set] = defaultdict(set)
        fillers: list[set] = []
        for o, zk in occ:
            zs = sorted(zk)
            for a, b in itertools.combinations(zs, 2):
                e = model.key(o, zk - {a, b})
                edge_ends[e] |= {model.key(o, zk - {a}), model.key(o, zk - {b})}
            for a, b, c in itertools.combinations(zs, 3):
                fillers.append({model.key(o, zk - {a, b}), model.key(o, zk - {a, c}),
                                model.key(o, zk - {b, c})})
        if any(len(v) != 2 for v in edge_ends.values()):
            bad.append((K, ("inconsistent-edge",)))
            continue
        adj: dict[FaceKey, dict[FaceKey, list]] = defaultdict(lambda: defaultdict(list))
        for e, ends in edge_ends.items():
            u, v = tuple(ends)
            adj[u][v].append(e)
            adj[v][u].append(e)
        verts = list(adj)
        order = {v: i for i, v in enumerate(verts)}
        for u in verts:
            for v in adj[u]:
                if order[v] <= order[u]:
                    continue
                for w in adj[v]:
                    if order[w] <= order[v] or w not in adj[u]:
                        continue
                    for e1 in adj[u][v]:
                        for e2 in adj[v][w]:
                            for e3 in adj[w][u]:
                                tri = {e1, e2, e3}
                                if not any(tri <= f for f in fillers):
                                    bad.append((K, (e1, e2, e3)))
    return bad


def check_cube_condition(model: ComplexModel) -> bool:
    return not cube_condition_violations(model)


# -- cospeciation domain ---------------------------------------------------------------


def perfect_cospeciation_faces(model: ComplexModel) -> list[FaceKey]:
    """Faces of codimension (host degree - 1) cut out by cospeciation boundaries."""
    codim = model.leaf_map.host_degree - 1
    out = set()
    if codim == 0:
        return []
    for o, row in enumerate(model.facets):
        cosp = [f.index for f in row if f.kind == COSPECIATION]
        for z in itertools.combinations(cosp, codim):
            out.add(model.key(o, z))
    return sorted(out, key=repr)


def perfect_cospeciation_matches_tau_space(model: ComplexModel) -> bool:
    """For bijective maps: the closed domain has the face poset of tau-space.

    Every face of the domain is sent to the host tree's face; this has to be
    a dimension-preserving bijection onto the faces of the host tau-space.
    """
    lm = model.leaf_map
    if not lm.bijective:
        raise ValueError("only defined for bijective leaf maps")
    domain = set()
    for top in perfect_cospeciation_faces(model):
        for o, z in model.occurrences[top]:
            rest = [i for i in model.coordinates if i not in z]
            for r in range(len(rest) + 1):
                for extra in itertools.combinations(rest, r):
                    domain.add(model.key(o, z | set(extra)))
    projected = {}
    for k in domain:
        projected.setdefault(host_projection(k), []).append(k)
    if any(len(v) != 1 for v in projected.values()):
        return False
    start = 2 if model.reduced else 1
    tau = set()
    for rt in enumerate_ranked_topologies(lm.n, lm.host_labels):
        coords = range(start, lm.n)
        for r in range(len(coords) + 1):
            for z in itertools.combinations(coords, r):
                tau.add(tau_face_key(rt, z))
    if set(projected) != tau:
        return False
    return all(model.face_dim(projected[t][0]) == sum(1 for g in t[1:]) - (1 if t[0] else 0)
               - (1 if model.reduced else 0) for t in tau)


# -- leaf-map types ----------------------------------------------------------------------


def _partitions(m: int, max_parts: int, largest: int | None = None):
    largest = m if largest is None else largest
    if m == 0:
        yield ()
        return
    if max_parts == 0:
        return
    for first in range(min(m, largest), 0, -1):
        for rest in _partitions(m - first, max_parts - 1, first):
            yield (first,) + rest


def leaf_map_types(n: int, m: int) -> list[LeafMap]:
    """One leaf map per type up to relabelling hosts and parasites.

    A type is fixed by how many parasites sit on each host, i.e. by a
    partition of m into at most n parts.
    """
    hosts = tuple(chr(ord("A") + i) for i in range(n))
    out = []
    for lam in _partitions(m, n):
        targets = []
        for h, c in enumerate(lam):
            targets += [h] * c
        mapping = {str(i + 1): hosts[t] for i, t in enumerate(targets)}
        out.append(LeafMap.from_dict(mapping, hosts))
    return out


def all_types(max_total: int, min_each: int = 1) -> list[LeafMap]:
    out = []
    for total in range(2, max_total + 1):
        for n in range(min_each, total - min_each + 1):
            out.extend(leaf_map_types(n, total - n))
    return out


def sequences_by_orthant(model: ComplexModel) -> dict[str, int]:
    counts: dict[str, int] = defaultdict(int)
    for o in model.orthants:
        counts[o.sequence] += 1
    return dict(counts)


def census(leaf_map: LeafMap, bound: int | None = None) -> dict[str, int]:
    counts: dict[str, int] = defaultdict(int)
    for o in enumerate_orthants(leaf_map, bound):
        counts[o.sequence] += 1
    return dict(sorted(counts.items(), key=lambda kv: kv[0], reverse=False))


def interleaved_orthants(leaf_map: LeafMap) -> list[NestedRankedTopology]:
    s = str(interleaved_sequence(leaf_map))
    return [o for o in enumerate_orthants(leaf_map) if o.sequence == s]


__all__ = [
    "BoundExceededError",
    "ComplexModel",
    "Facet",
    "LinkGraph",
    "NestedRankedTopology",
    "all_types",
    "build_complex",
    "census",
    "check_cube_condition",
    "cube_condition_violations",
    "enumerate_orthants",
    "face_key",
    "facets_of",
    "find_3_cycles",
    "has_3_cycle",
    "is_admissible",
    "is_valid_nrt",
    "leaf_map_types",
    "link_graph",
    "perfect_cospeciation_faces",
    "perfect_cospeciation_matches_tau_space",
]
