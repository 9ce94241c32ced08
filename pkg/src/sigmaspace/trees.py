"""Ultrametric trees, ranked topologies and tau-coordinates.

Leaf sets are encoded as integer bitsets over a sorted label tuple that is
fixed when a tree is built, so split comparison is a single integer compare.
"""

from __future__ import annotations

import itertools
import math
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

TIME_TOL = 1e-9
DEFAULT_TOPOLOGY_BOUND = 8

_LABEL_RE = re.compile(r"[A-Za-z0-9_.\-]+")


class NewickError(ValueError):
    """Malformed Newick text. ``position`` is the 0-based character offset."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class NonUltrametricError(ValueError):
    pass


def bits(mask: int) -> list[int]:
    """Indices of the set bits of ``mask`` in increasing order."""
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def lowest_bit(mask: int) -> int:
    return (mask & -mask).bit_length() - 1


@dataclass(frozen=True, order=True)
class Split:
    """The partition of a node's descendants into its child lineages."""

    blocks: tuple[int, ...]

    def __post_init__(self):
        if len(self.blocks) < 2:
            raise ValueError("a split needs at least two blocks")
        seen = 0
        for b in self.blocks:
            if b <= 0 or b & seen:
                raise ValueError("split blocks must be non-empty and disjoint")
            seen |= b
        if tuple(sorted(self.blocks, key=lowest_bit)) != self.blocks:
            object.__setattr__(self, "blocks", tuple(sorted(self.blocks, key=lowest_bit)))

    @classmethod
    def of(cls, *blocks: int) -> Split:
        return cls(tuple(sorted(blocks, key=lowest_bit)))

    @property
    def mask(self) -> int:
        m = 0
        for b in self.blocks:
            m |= b
        return m

    @property
    def merges(self) -> int:
        """Number of binary coalescences this node stands for."""
        return len(self.blocks) - 1

    @property
    def is_binary(self) -> bool:
        return len(self.blocks) == 2

    def format(self, labels: Sequence[str]) -> str:
        return "|".join("".join(labels[i] for i in bits(b)) if all(len(labels[i]) == 1 for i in bits(b))
                        else ",".join(labels[i] for i in bits(b)) for b in self.blocks)


@dataclass(frozen=True)
class RankedTopology:
    """Rooted topology on ``labels`` with ranked internal nodes.

    ``events`` are listed from the leaves upward; ``ranks`` gives the rank
    group of each event (equal ranks are simultaneous nodes).
    """

    labels: tuple[str, ...]
    events: tuple[Split, ...]
    ranks: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.ranks:
            object.__setattr__(self, "ranks", tuple(range(1, len(self.events) + 1)))
        if len(self.ranks) != len(self.events):
            raise ValueError("one rank per event is required")
        if any(b < a for a, b in zip(self.ranks, self.ranks[1:])):
            raise ValueError("ranks must be nondecreasing")
        live = {1 << i for i in range(self.n)}
        pending: list[int] = []
        current = None
        for split, rank in zip(self.events, self.ranks):
            if rank != current:
                live.update(pending)
                pending = []
                current = rank
            for b in split.blocks:
                if b not in live:
                    raise ValueError(f"event {split} merges a lineage that is not live")
                live.discard(b)
            pending.append(split.mask)
        live.update(pending)
        if self.n > 0 and live != {self.full_mask}:
            raise ValueError("events do not coalesce to a single root")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    @property
    def resolved(self) -> bool:
        return all(s.is_binary for s in self.events) and len(set(self.ranks)) == len(self.ranks)

    def describe(self) -> str:
        return " < ".join("{" + s.format(self.labels) + "}" for s in self.events)


@dataclass(frozen=True)
class UltrametricTree:
    topology: RankedTopology
    times: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.topology.events):
            raise ValueError("one time per event is required")
        t = self.times
        if t and t[0] < -TIME_TOL:
            raise ValueError("node times must be nonnegative")
        if any(b < a - TIME_TOL for a, b in zip(t, t[1:])):
            raise ValueError("node times must be nondecreasing")

    @property
    def labels(self) -> tuple[str, ...]:
        return self.topology.labels

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def height(self) -> float:
        return self.times[-1] if self.times else 0.0

    @property
    def resolved(self) -> bool:
        return self.topology.resolved

    def event_times(self) -> list[tuple[float, Split]]:
        return list(zip(self.times, self.topology.events))

    def lineage_at(self, leaf_index: int, time: float, tol: float = TIME_TOL) -> int:
        """Descendant mask of the lineage holding ``leaf_index`` at ``time``."""
        mask = 1 << leaf_index
        for t, split in zip(self.times, self.topology.events):
            if t > time + tol:
                break
            if split.mask & mask:
                mask = split.mask
        return mask

    def to_newick(self, digits: int = 12) -> str:
        node_time = {1 << i: 0.0 for i in range(self.n)}
        children: dict[int, tuple[int, ...]] = {}
        for t, s in zip(self.times, self.topology.events):
            node_time[s.mask] = t
            children[s.mask] = s.blocks

        def fmt(x: float) -> str:
            return f"{x:.{digits}g}"

        def rec(mask: int, parent_time: float) -> str:
            length = fmt(max(parent_time - node_time[mask], 0.0))
            if mask in children:
                inner = ",".join(rec(c, node_time[mask]) for c in children[mask])
                return f"({inner}):{length}"
            return f"{self.labels[lowest_bit(mask)]}:{length}"

        if self.n == 1:
            return f"{self.labels[0]};"
        root = self.topology.full_mask
        inner = ",".join(rec(c, node_time[root]) for c in children[root])
        return f"({inner});"


@dataclass(frozen=True)
class UltrametricMatrix:
    labels: tuple[str, ...]
    d: np.ndarray = field(compare=False)

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        n = len(self.labels)
        if d.shape != (n, n):
            raise ValueError(f"matrix shape {d.shape} does not match {n} labels")
        if len(set(self.labels)) != n:
            raise ValueError("duplicate labels")
        object.__setattr__(self, "d", d)

    def strong_triangle_violation(self) -> float:
        """Largest amount by which d(x,y) exceeds max(d(x,z), d(y,z))."""
        d = self.d
        n = len(self.labels)
        if n < 3:
            return 0.0
        worst = 0.0
        for z in range(n):
            bound = np.maximum(d[:, z][:, None], d[:, z][None, :])
            worst = max(worst, float(np.max(d - bound)))
        return worst


@dataclass(frozen=True)
class TauPoint:
    topology: RankedTopology
    tau: tuple[float, ...]

    def __post_init__(self):
        if any(x < -TIME_TOL for x in self.tau):
            raise ValueError("tau entries must be nonnegative")


# -- construction ------------------------------------------------------------


def _merge_rounds(d: np.ndarray, tol: float) -> list[tuple[float, list[list[int]]]]:
    """Closest-pair agglomeration; returns (time, components) rounds."""
    clusters = [1 << i for i in range(d.shape[0])]
    rep = {c: lowest_bit(c) for c in clusters}
    rounds = []
    while len(clusters) > 1:
        k = len(clusters)
        cd = np.array([[d[rep[a], rep[b]] for b in clusters] for a in clusters])
        np.fill_diagonal(cd, np.inf)
        dmin = float(cd.min())
        adj = cd <= dmin + 2 * tol
        # connected components of the "within tolerance" graph
        comp = list(range(k))

        def find(x):
            while comp[x] != x:
                comp[x] = comp[comp[x]]
                x = comp[x]
            return x

        for i, j in zip(*np.nonzero(adj)):
            ri, rj = find(i), find(j)
            if ri != rj:
                comp[max(ri, rj)] = min(ri, rj)
        groups: dict[int, list[int]] = {}
        for i in range(k):
            groups.setdefault(find(i), []).append(clusters[i])
        merged = [g for g in groups.values() if len(g) > 1]
        rounds.append((max(dmin / 2.0, 0.0), merged))
        new_clusters = [g[0] for g in groups.values() if len(g) == 1]
        for g in merged:
            m = 0
            for c in g:
                m |= c
            rep[m] = rep[g[0]]
            new_clusters.append(m)
        clusters = sorted(new_clusters, key=lowest_bit)
    return rounds


def realize_matrix(m: UltrametricMatrix, tol: float = TIME_TOL) -> UltrametricTree:
    """Rebuild the tree realising an ultrametric distance matrix.

    Clusters at (near-)minimal distance are merged in one round; several
    clusters joined in one round give a multifurcation, and disjoint merges
    in the same round share a rank.
    """
    d = m.d
    if np.any(np.abs(d - d.T) > tol) or np.any(np.abs(np.diag(d)) > tol) or np.any(d < -tol):
        raise NonUltrametricError("matrix must be symmetric, nonnegative, with zero diagonal")
    viol = m.strong_triangle_violation()
    if viol > 2 * tol:
        raise NonUltrametricError(f"strong triangle inequality violated by {viol:.3g}")
    order = sorted(range(len(m.labels)), key=lambda i: m.labels[i])
    labels = tuple(m.labels[i] for i in order)
    d = d[np.ix_(order, order)]
    events, ranks, times = [], [], []
    for rank, (t, comps) in enumerate(_merge_rounds(d, tol), start=1):
        for g in sorted(comps, key=lambda g: min(lowest_bit(c) for c in g)):
            events.append(Split.of(*g))
            ranks.append(rank)
            times.append(t)
    topo = RankedTopology(labels, tuple(events), tuple(ranks))
    return UltrametricTree(topo, tuple(times))


def to_distance_matrix(tree: UltrametricTree) -> UltrametricMatrix:
    n = tree.n
    d = np.zeros((n, n))
    for t, split in tree.event_times():
        for a, b in itertools.combinations(split.blocks, 2):
            ia, ib = bits(a), bits(b)
            d[np.ix_(ia, ib)] = 2.0 * t
            d[np.ix_(ib, ia)] = 2.0 * t
    return UltrametricMatrix(tree.labels, d)


def tree_from_events(labels: Sequence[str], events: Iterable[tuple[float, Split]],
                     tol: float = TIME_TOL) -> UltrametricTree:
    """Canonical tree from (time, split) nodes given over ``labels``.

    Goes through the distance matrix so that zero-length internal edges
    become multifurcations and equal times become shared ranks.
    """
    labels = tuple(labels)
    n = len(labels)
    d = np.zeros((n, n))
    for t, split in events:
        for a, b in itertools.combinations(split.blocks, 2):
            ia, ib = bits(a), bits(b)
            d[np.ix_(ia, ib)] = 2.0 * t
            d[np.ix_(ib, ia)] = 2.0 * t
    return realize_matrix(UltrametricMatrix(labels, d), tol)


def star_tree(labels: Sequence[str], height: float = 0.0) -> UltrametricTree:
    labels = tuple(sorted(labels))
    if len(labels) == 1:
        return UltrametricTree(RankedTopology(labels, ()), ())
    split = Split.of(*(1 << i for i in range(len(labels))))
    return UltrametricTree(RankedTopology(labels, (split,)), (float(height),))


def tau_coordinates(tree: UltrametricTree) -> TauPoint:
    """Inter-node intervals; a node with k children occupies k-1 slots."""
    expanded = []
    for t, split in tree.event_times():
        expanded.extend([t] * split.merges)
    tau = tuple(np.diff(np.concatenate([[0.0], expanded])).tolist()) if expanded else ()
    return TauPoint(tree.topology, tau)


def tree_from_tau(point: TauPoint, tol: float = TIME_TOL) -> UltrametricTree:
    topo = point.topology
    times = np.cumsum(point.tau) if point.tau else np.zeros(0)
    events = []
    k = 0
    for split in topo.events:
        k += split.merges
        events.append((float(times[k - 1]), split))
    return tree_from_events(topo.labels, events, tol)


# -- ranked topology counts ----------------------------------------------------


def count_ranked_topologies(n: int) -> int:
    """Number of fully resolved ranked topologies on ``n`` labelled leaves."""
    if not isinstance(n, int) or n < 1:
        raise ValueError("n must be a positive integer")
    return math.prod(math.comb(k, 2) for k in range(2, n + 1))


def enumerate_ranked_topologies(n: int, labels: Sequence[str] | None = None,
                                bound: int = DEFAULT_TOPOLOGY_BOUND) -> list[RankedTopology]:
    """All resolved ranked topologies, by pairing live lineages upward.

    Order is deterministic: at each rank, candidate pairs are taken in
    lexicographic order of the lineages' smallest leaf.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    if n > bound:
        raise ValueError(f"n={n} exceeds the enumeration bound {bound}")
    labels = tuple(sorted(labels)) if labels is not None else tuple(str(i) for i in range(1, n + 1))
    if len(labels) != n:
        raise ValueError("need exactly n labels")
    out: list[RankedTopology] = []

    def rec(live: list[int], events: list[Split]):
        if len(live) == 1:
            out.append(RankedTopology(labels, tuple(events)))
            return
        for i, j in itertools.combinations(range(len(live)), 2):
            a, b = live[i], live[j]
            rest = [c for k, c in enumerate(live) if k not in (i, j)] + [a | b]
            rec(sorted(rest, key=lowest_bit), events + [Split.of(a, b)])

    rec([1 << i for i in range(n)], [])
    return out


def random_tree(labels: Sequence[str], rng: np.random.Generator, rate: float = 1.0) -> UltrametricTree:
    """Kingman-style random resolved tree: random pairs, exponential gaps."""
    labels = tuple(sorted(labels))
    live = [1 << i for i in range(len(labels))]
    t = 0.0
    events = []
    while len(live) > 1:
        i, j = rng.choice(len(live), size=2, replace=False)
        t += rng.exponential(1.0 / rate)
        a, b = live[i], live[j]
        live = [c for k, c in enumerate(live) if k not in (i, j)] + [a | b]
        events.append((t, Split.of(a, b)))
    return tree_from_events(labels, events)


# -- Newick ------------------------------------------------------------------


class _NewickParser:
    def __init__(self, text: str):
        self.s = text
        self.i = 0

    def error(self, msg: str):
        raise NewickError(msg, self.i)

    def skip_ws(self):
        while self.i < len(self.s) and self.s[self.i].isspace():
            self.i += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.s[self.i] if self.i < len(self.s) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.i += 1

    def label(self) -> str:
        self.skip_ws()
        m = _LABEL_RE.match(self.s, self.i)
        if not m:
            return ""
        self.i = m.end()
        return m.group(0)

    def length(self) -> float:
        if self.peek() != ":":
            self.error("missing branch length")
        self.i += 1
        self.skip_ws()
        m = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?").match(self.s, self.i)
        if not m:
            self.error("bad branch length")
        start = self.i
        self.i = m.end()
        value = float(m.group(0))
        if value < 0:
            raise NewickError("negative branch length", start)
        return value

    def node(self, top: bool = False):
        """Returns (label or None, children, branch length)."""
        children = []
        if self.peek() == "(":
            self.i += 1
            children.append(self.node())
            while self.peek() == ",":
                self.i += 1
                children.append(self.node())
            self.expect(")")
            if len(children) == 1:
                self.error("unary internal node")
            self.label()  # internal labels are ignored
        else:
            name = self.label()
            if not name:
                self.error("expected a leaf label")
            children = name
        if top:
            length = self.length() if self.peek() == ":" else 0.0
        else:
            length = self.length()
        return children, length

    def parse(self):
        tree = self.node(top=True)
        self.expect(";")
        if self.peek():
            self.error("trailing characters after ';'")
        return tree


def parse_newick(text: str, tol: float = TIME_TOL) -> UltrametricTree:
    """Parse an ultrametric Newick string with mandatory branch lengths.

    Node times are measured from the leaves (time 0) upward. Leaf depths
    that differ by more than ``tol`` (relative to the height) raise
    :class:`NonUltrametricError`.
    """
    root = _NewickParser(text).parse()
    leaves: list[tuple[str, float]] = []
    internal: list[tuple[float, list[int]]] = []  # (depth, leaf indices per child)

    def walk(node, depth: float) -> list[int]:
        children, length = node
        if isinstance(children, str):
            leaves.append((children, depth))
            return [len(leaves) - 1]
        groups = [walk(c, depth + c[1]) for c in children]
        internal.append((depth, groups))
        return [i for g in groups for i in g]

    walk(root, 0.0)
    names = [name for name, _ in leaves]
    if len(set(names)) != len(names):
        dup = sorted({x for x in names if names.count(x) > 1})
        raise NewickError(f"duplicate leaf labels: {', '.join(dup)}")
    depths = np.array([dd for _, dd in leaves])
    height = float(depths.max())
    if float(depths.max() - depths.min()) > tol * max(1.0, height):
        raise NonUltrametricError(
            f"leaf depths differ ({depths.min():.12g} vs {depths.max():.12g}); tree is not ultrametric")
    labels = tuple(sorted(names))
    pos = {name: labels.index(name) for name in names}
    events = []
    for depth, groups in internal:
        blocks = []
        for g in groups:
            m = 0
            for i in g:
                m |= 1 << pos[names[i]]
            blocks.append(m)
        events.append((max(height - depth, 0.0), Split.of(*blocks)))
    return tree_from_events(labels, events, tol)
