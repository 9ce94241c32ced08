"""Nested host/parasite trees, nesting sequences and concordance matrices."""

from __future__ import annotations

import itertools
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .trees import (
    TIME_TOL,
    Split,
    UltrametricTree,
    bits,
    to_distance_matrix,
)

H, PC, PD = "H", "P^c", "P^d"


class IncompatibleError(ValueError):
    """Host and parasite trees violate the compatibility inequality.

    ``pair`` holds the offending parasite labels and ``margin`` the amount
    by which the parasite distance falls short of the host distance.
    """

    def __init__(self, message: str, pair: tuple[str, str] | None = None, margin: float = 0.0):
        super().__init__(message)
        self.pair = pair
        self.margin = margin


class TieError(ValueError):
    pass


@dataclass(frozen=True)
class LeafMap:
    """Total map from parasite leaf labels to host leaf labels."""

    host_labels: tuple[str, ...]
    parasite_labels: tuple[str, ...]
    targets: tuple[int, ...]  # host index for each parasite index

    def __post_init__(self):
        if tuple(sorted(self.host_labels)) != self.host_labels:
            raise ValueError("host labels must be sorted")
        if tuple(sorted(self.parasite_labels)) != self.parasite_labels:
            raise ValueError("parasite labels must be sorted")
        if len(set(self.host_labels)) != len(self.host_labels) or \
                len(set(self.parasite_labels)) != len(self.parasite_labels):
            raise ValueError("duplicate labels")
        if len(self.targets) != len(self.parasite_labels):
            raise ValueError("the leaf map must be total on parasite leaves")
        if any(not 0 <= t < len(self.host_labels) for t in self.targets):
            raise ValueError("leaf map target out of range")

    @classmethod
    def from_dict(cls, mapping: Mapping[str, str], host_labels: Sequence[str] | None = None) -> LeafMap:
        hosts = tuple(sorted(host_labels if host_labels is not None else set(mapping.values())))
        missing = set(mapping.values()) - set(hosts)
        if missing:
            raise ValueError(f"leaf map targets unknown hosts: {sorted(missing)}")
        paras = tuple(sorted(mapping))
        return cls(hosts, paras, tuple(hosts.index(mapping[p]) for p in paras))

    @classmethod
    def parse(cls, text: str, host_labels: Sequence[str] | None = None) -> LeafMap:
        """Parse ``"p1:h1,p2:h2,..."``."""
        mapping = {}
        for item in filter(None, (x.strip() for x in text.split(","))):
            if ":" not in item:
                raise ValueError(f"leaf map entry {item!r} is not of the form parasite:host")
            p, h = (s.strip() for s in item.split(":", 1))
            if p in mapping:
                raise ValueError(f"parasite {p!r} mapped twice")
            mapping[p] = h
        if not mapping:
            raise ValueError("empty leaf map")
        return cls.from_dict(mapping, host_labels)

    @classmethod
    def identity(cls, n: int) -> LeafMap:
        labels = tuple(str(i) for i in range(1, n + 1))
        labels = tuple(sorted(labels))
        return cls(labels, labels, tuple(range(n)))

    @property
    def n(self) -> int:
        return len(self.host_labels)

    @property
    def m(self) -> int:
        return len(self.parasite_labels)

    @property
    def host_degree(self) -> int:
        return len(set(self.targets))

    @property
    def parasite_multiplicity(self) -> int:
        return self.m - self.host_degree

    @property
    def surjective(self) -> bool:
        return self.host_degree == self.n

    @property
    def bijective(self) -> bool:
        return self.surjective and self.m == self.n

    def as_dict(self) -> dict[str, str]:
        return {p: self.host_labels[t] for p, t in zip(self.parasite_labels, self.targets)}

    def image(self, parasite_mask: int) -> int:
        out = 0
        for i in bits(parasite_mask):
            out |= 1 << self.targets[i]
        return out

    def format(self) -> str:
        return ",".join(f"{p}:{h}" for p, h in self.as_dict().items())


@dataclass(frozen=True)
class NestedTree:
    host: UltrametricTree
    parasite: UltrametricTree
    leaf_map: LeafMap
    tol: float = field(default=TIME_TOL, compare=False)

    def __post_init__(self):
        _check_labels(self.host, self.parasite, self.leaf_map)
        bad = compatibility_violation(self.host, self.parasite, self.leaf_map)
        if bad is not None and bad[2] > self.tol * max(1.0, self.parasite.height):
            i, j, margin = bad
            raise IncompatibleError(
                f"parasites {i},{j}: d^P falls short of d^H by {margin:.12g}", (i, j), margin)

    @property
    def n(self) -> int:
        return self.host.n

    @property
    def m(self) -> int:
        return self.parasite.n

    @property
    def height(self) -> float:
        """Time of the last speciation event of either tree."""
        return max(self.host.height, self.parasite.height)

    @property
    def resolved(self) -> bool:
        return self.host.resolved and self.parasite.resolved and \
            len(merged_events(self)) == len(_distinct_times(merged_events(self), self.tol))


NestingSeqLike = Union[str, "NestingSequence"]


@dataclass(frozen=True)
class NestingSequence:
    letters: str

    def __post_init__(self):
        if set(self.letters) - {"H", "P"}:
            raise ValueError(f"nesting sequence {self.letters!r} has letters other than H, P")

    def __str__(self) -> str:
        return self.letters

    def __len__(self) -> int:
        return len(self.letters)


@dataclass(frozen=True)
class AnnotatedNestingSequence:
    labels: tuple[str, ...]

    def __post_init__(self):
        if set(self.labels) - {H, PC, PD}:
            raise ValueError("annotated labels must be H, P^c or P^d")

    def plain(self) -> NestingSequence:
        return NestingSequence("".join(x[0] for x in self.labels))

    def __str__(self) -> str:
        return " ".join(self.labels)

    def __len__(self) -> int:
        return len(self.labels)


def _letters(s: NestingSeqLike | AnnotatedNestingSequence) -> str:
    if isinstance(s, AnnotatedNestingSequence):
        return s.plain().letters
    return str(s)


def _check_labels(host: UltrametricTree, parasite: UltrametricTree, leaf_map: LeafMap):
    if host.labels != leaf_map.host_labels:
        raise ValueError(f"host labels {host.labels} do not match the leaf map {leaf_map.host_labels}")
    if parasite.labels != leaf_map.parasite_labels:
        raise ValueError(f"parasite labels {parasite.labels} do not match the leaf map "
                         f"{leaf_map.parasite_labels}")


def compatibility_violation(host: UltrametricTree, parasite: UltrametricTree, leaf_map: LeafMap):
    """Worst violating parasite pair as (label, label, shortfall), or None."""
    dh = to_distance_matrix(host).d
    dp = to_distance_matrix(parasite).d
    t = np.asarray(leaf_map.targets)
    gap = dh[np.ix_(t, t)] - dp
    i, j = np.unravel_index(int(np.argmax(gap)), gap.shape)
    if gap[i, j] <= 0:
        return None
    return leaf_map.parasite_labels[i], leaf_map.parasite_labels[j], float(gap[i, j])


def check_compatibility(host: UltrametricTree, parasite: UltrametricTree, leaf_map: LeafMap,
                        tol: float = TIME_TOL) -> bool:
    """Whether d^P(i,j) >= d^H(l(i), l(j)) - tol for all parasite pairs."""
    _check_labels(host, parasite, leaf_map)
    bad = compatibility_violation(host, parasite, leaf_map)
    return bad is None or bad[2] <= tol


# -- event bookkeeping ----------------------------------------------------------


def merged_events(nested: NestedTree) -> list[tuple[float, str, Split]]:
    ev = [(t, "H", s) for t, s in nested.host.event_times()]
    ev += [(t, "P", s) for t, s in nested.parasite.event_times()]
    return ev


def _distinct_times(events, tol):
    times = sorted(t for t, _, _ in events)
    out = []
    for t in times:
        if not out or t - out[-1] > tol:
            out.append(t)
    return out


def timesteps(nested: NestedTree, tol: float | None = None) -> list[tuple[float, list[Split], list[Split]]]:
    """Events grouped by time: (time, host splits, parasite splits)."""
    tol = nested.tol if tol is None else tol
    groups: list[tuple[float, list[Split], list[Split]]] = []
    for t, kind, split in sorted(merged_events(nested), key=lambda e: (e[0], e[1], e[2])):
        if not groups or t - groups[-1][0] > tol:
            groups.append((t, [], []))
        (groups[-1][1] if kind == "H" else groups[-1][2]).append(split)
    return groups


def is_coupled(parasite_split: Split, host_split: Split, leaf_map: LeafMap) -> bool:
    """Each parasite block maps inside one host block, using at least two."""
    used = set()
    for b in parasite_split.blocks:
        img = leaf_map.image(b)
        home = [k for k, hb in enumerate(host_split.blocks) if img & ~hb == 0]
        if not home:
            return False
        used.add(home[0])
    return len(used) >= 2


# -- nesting sequences ----------------------------------------------------------------


def _resolved_events(nested: NestedTree) -> list[tuple[float, str, Split]]:
    if not (nested.host.resolved and nested.parasite.resolved):
        raise TieError("nested tree has multifurcations; use canonical_nesting_sequence")
    ev = sorted(merged_events(nested), key=lambda e: e[0])
    for (t0, _, _), (t1, _, _) in zip(ev, ev[1:]):
        if t1 - t0 <= nested.tol:
            raise TieError(f"simultaneous events at time {t0:.12g}; use canonical_nesting_sequence")
    return ev


def nesting_sequence(nested: NestedTree) -> NestingSequence:
    return NestingSequence("".join(kind for _, kind, _ in _resolved_events(nested)))


def annotate(kinds: Sequence[str], splits: Sequence[Split], leaf_map: LeafMap) -> AnnotatedNestingSequence:
    """Annotate a resolved event sequence: P^c iff coupled to the H just before."""
    out = []
    for i, (kind, split) in enumerate(zip(kinds, splits)):
        if kind == "H":
            out.append(H)
        elif i > 0 and kinds[i - 1] == "H" and is_coupled(split, splits[i - 1], leaf_map):
            out.append(PC)
        else:
            out.append(PD)
    return AnnotatedNestingSequence(tuple(out))


def annotated_nesting_sequence(nested: NestedTree) -> AnnotatedNestingSequence:
    ev = _resolved_events(nested)
    return annotate([k for _, k, _ in ev], [s for _, _, s in ev], nested.leaf_map)


def canonical_events(nested: NestedTree, tol: float | None = None):
    """Canonical resolution of a possibly tied nested tree.

    Returns a list of (time, label, split) with one binary split per entry,
    ordered timestep by timestep as hosts, coupled parasites, then the rest.
    Multifurcations are expanded into binary merges of their blocks in
    lowest-leaf order. Each host merge absorbs at most one coupled parasite
    merge; extra coupled merges at the same timestep are duplications.
    """
    lm = nested.leaf_map
    out: list[tuple[float, str, Split]] = []
    groups = timesteps(nested, tol)
    prev_hosts: list[Split] = []
    prev_had_parasite = True
    for t, hosts, paras in groups:
        hosts = sorted(hosts)
        host_bin = [b for s in hosts for b in _binarize(s)]
        r_tot = len(host_bin)
        coupled, rest = [], []
        for s in sorted(paras):
            if any(is_coupled(s, h, lm) for h in hosts):
                coupled.append(s)
            else:
                rest.append(s)
        capacity = r_tot
        if not hosts and prev_hosts and not prev_had_parasite:
            # a parasite directly after a host step can be its cospeciation
            late = [s for s in rest if any(is_coupled(s, h, lm) for h in prev_hosts)]
            if late:
                coupled, rest = late[:1], [s for s in rest if s is not late[0]]
                capacity = 1
        for b in host_bin:
            out.append((t, H, b))
        pc, pd = [], []
        for s in coupled:
            for b in _binarize(s, prefer_coupled_with=hosts or prev_hosts, leaf_map=lm):
                (pc if len(pc) < capacity else pd).append(b)
        for s in rest:
            pd.extend(_binarize(s))
        out.extend((t, PC, b) for b in pc)
        out.extend((t, PD, b) for b in pd)
        prev_hosts = hosts
        prev_had_parasite = bool(paras)
    return out


def _binarize(split: Split, prefer_coupled_with: Sequence[Split] = (), leaf_map: LeafMap | None = None
              ) -> list[Split]:
    """Binary merges realising a multifurcation, first merge coupled if possible."""
    blocks = list(split.blocks)
    if len(blocks) == 2:
        return [split]
    if prefer_coupled_with and leaf_map is not None:
        for a, b in itertools.combinations(blocks, 2):
            cand = Split.of(a, b)
            if any(is_coupled(cand, h, leaf_map) for h in prefer_coupled_with):
                blocks.remove(a)
                blocks.remove(b)
                blocks = [a | b] + blocks
                out = [cand]
                break
        else:
            out = []
    else:
        out = []
    if not out:
        a, b = blocks[0], blocks[1]
        out.append(Split.of(a, b))
        blocks = [a | b] + blocks[2:]
    while len(blocks) > 1:
        acc, nxt = blocks[0], blocks[1]
        out.append(Split.of(acc, nxt))
        blocks = [acc | nxt] + blocks[2:]
    return out


def canonical_nesting_sequence(nested: NestedTree, tol: float | None = None) -> AnnotatedNestingSequence:
    return AnnotatedNestingSequence(tuple(lab for _, lab, _ in canonical_events(nested, tol)))


def letter_counts_ok(s: str, n: int, m: int) -> bool:
    return s.count("H") == n - 1 and s.count("P") == m - 1 and len(s) == n + m - 2


def is_admissible(s: NestingSeqLike, leaf_map: LeafMap) -> bool:
    """Prefix test: #P <= #H + parasite multiplicity on every prefix."""
    s = _letters(s)
    if not letter_counts_ok(s, leaf_map.n, leaf_map.m):
        raise ValueError(f"sequence {s!r} does not have {leaf_map.n - 1} H and {leaf_map.m - 1} P")
    extra = leaf_map.parasite_multiplicity
    h = p = 0
    for c in s:
        if c == "H":
            h += 1
        else:
            p += 1
        if p > h + extra:
            return False
    return True


def interleaved_sequence(leaf_map: LeafMap) -> NestingSequence:
    dh, dp = leaf_map.host_degree, leaf_map.parasite_multiplicity
    return NestingSequence("P" * dp + "HP" * (dh - 1) + "H" * (leaf_map.n - dh))


def decoupled_sequence(leaf_map: LeafMap) -> NestingSequence:
    return NestingSequence("H" * (leaf_map.n - 1) + "P" * (leaf_map.m - 1))


def admissible_sequences(leaf_map: LeafMap) -> list[NestingSequence]:
    n, m = leaf_map.n, leaf_map.m
    out = []
    for pos in itertools.combinations(range(n + m - 2), n - 1):
        s = ["P"] * (n + m - 2)
        for i in pos:
            s[i] = "H"
        word = "".join(s)
        if is_admissible(word, leaf_map):
            out.append(NestingSequence(word))
    return out


def poset_covers(s: NestingSeqLike) -> list[NestingSequence]:
    """Sequences obtained by moving one P past the H right after it."""
    s = _letters(s)
    return [NestingSequence(s[:i] + "HP" + s[i + 2:])
            for i in range(len(s) - 1) if s[i:i + 2] == "PH"]


def poset_leq(a: NestingSeqLike, b: NestingSeqLike) -> bool:
    """a <= b iff b's prefix H-counts dominate a's."""
    a, b = _letters(a), _letters(b)
    if len(a) != len(b) or a.count("H") != b.count("H"):
        raise ValueError("sequences are of different types")
    ha = hb = 0
    for x, y in zip(a, b):
        ha += x == "H"
        hb += y == "H"
        if hb < ha:
            return False
    return True


# -- parasite map realisation -----------------------------------------------------


@dataclass(frozen=True)
class HostPoint:
    """A point of the host tree: the edge above the lineage ``descendants``.

    ``beyond_root`` marks points on the abstract edge above the host root.
    """

    descendants: frozenset[str]
    time: float
    beyond_root: bool = False


def realize_parasite_map(nested: NestedTree, leaf: str, height: float) -> HostPoint:
    lm = nested.leaf_map
    if leaf not in lm.parasite_labels:
        raise ValueError(f"unknown parasite leaf {leaf!r}")
    if height < -nested.tol or height > nested.parasite.height + nested.tol:
        raise ValueError(f"height {height} outside [0, {nested.parasite.height}]")
    target = lm.targets[lm.parasite_labels.index(leaf)]
    mask = nested.host.lineage_at(target, height, nested.tol)
    beyond = height > nested.host.height + nested.tol
    return HostPoint(frozenset(nested.host.labels[i] for i in bits(mask)), float(height), beyond)


# -- concordance --------------------------------------------------------------------


@dataclass(frozen=True)
class ConcordancePair:
    M: np.ndarray = field(compare=False)
    N: np.ndarray = field(compare=False)
    tol: float = 0.0

    @property
    def concordant(self) -> bool:
        return bool(np.all(np.abs(self.M) <= self.tol))

    @property
    def maximally_coupled(self) -> bool:
        return bool(np.all(np.abs(self.N) <= self.tol))


def pushforward(dp: np.ndarray, leaf_map: LeafMap) -> np.ndarray:
    n = leaf_map.n
    out = np.full((n, n), np.inf)
    t = leaf_map.targets
    for i, j in itertools.product(range(leaf_map.m), repeat=2):
        out[t[i], t[j]] = min(out[t[i], t[j]], dp[i, j])
    return out


def concordance(nested: NestedTree) -> ConcordancePair:
    lm = nested.leaf_map
    if not lm.surjective:
        raise ValueError("concordance matrices need a surjective leaf map")
    dp = to_distance_matrix(nested.parasite).d
    dh = to_distance_matrix(nested.host).d
    push = pushforward(dp, lm)
    t = np.asarray(lm.targets)
    M = dp - push[np.ix_(t, t)]
    N = push - dh
    return ConcordancePair(M, N, 1e-9 * max(1.0, nested.parasite.height))


def is_concordant(nested: NestedTree) -> bool:
    return concordance(nested).concordant


def is_maximally_coupled(nested: NestedTree) -> bool:
    return concordance(nested).maximally_coupled


# -- cospeciation ------------------------------------------------------------------


@dataclass(frozen=True)
class CospeciationReport:
    """1-based positions in the canonical sequence of P^c entries.

    ``realized`` entries have a zero interval (the parasite split happens at
    the host split); ``potential`` ones are coupled but separated in time.
    """

    labels: AnnotatedNestingSequence
    realized: tuple[int, ...]
    potential: tuple[int, ...]


def cospeciation_events(nested: NestedTree, tol: float | None = None) -> CospeciationReport:
    tol = nested.tol if tol is None else tol
    ev = canonical_events(nested, tol)
    realized, potential = [], []
    prev_t = 0.0
    for i, (t, lab, _) in enumerate(ev, start=1):
        if lab == PC:
            (realized if t - prev_t <= tol else potential).append(i)
        prev_t = t
    return CospeciationReport(AnnotatedNestingSequence(tuple(lab for _, lab, _ in ev)),
                              tuple(realized), tuple(potential))
