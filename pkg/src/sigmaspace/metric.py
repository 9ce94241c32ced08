"""Sigma-coordinates, the path-length metric, geodesics and Frechet means.

The complex is the product of its reduced part (coordinates 2..N-2) with the
half-line of the first interval, so distances are computed on the reduced
part and combined with the first-interval difference by Pythagoras.

Geodesics in the reduced part are found by a best-first search over
sequences of cells.  For a fixed sequence the shortest path through the
shared faces is a second-order cone program, solved with Clarabel.  A
partial sequence is scored by the shortest path through it followed by the
straight chord to the end point, which never exceeds any completion.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property, lru_cache

import clarabel
import numpy as np
from scipy import sparse
from scipy.optimize import minimize

from .complex import (
    ComplexModel,
    NestedRankedTopology,
    build_complex,
    enumerate_orthants,
    face_key,
)
from .nesting import (
    LeafMap,
    NestedTree,
    canonical_events,
)
from .trees import TIME_TOL, TauPoint, UltrametricTree, tree_from_events

log = logging.getLogger(__name__)

COORD_TOL = 1e-9
DIST_TOL = 1e-7


class TypeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SigmaPoint:
    orthant: NestedRankedTopology
    sigma: tuple[float, ...]

    def __post_init__(self):
        sig = tuple(float(x) for x in self.sigma)
        if len(sig) != self.orthant.dimension:
            raise ValueError(f"expected {self.orthant.dimension} coordinates, got {len(sig)}")
        if any(x < -COORD_TOL for x in sig):
            raise ValueError("sigma coordinates must be nonnegative")
        object.__setattr__(self, "sigma", tuple(max(x, 0.0) for x in sig))

    @property
    def leaf_map(self) -> LeafMap:
        return self.orthant.leaf_map

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.sigma)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.sigma))

    def event_times(self) -> np.ndarray:
        return np.cumsum(self.sigma)


# -- charts --------------------------------------------------------------------------


def sigma_coordinates(nested: NestedTree) -> SigmaPoint:
    """Chart coordinates of a nested tree: gaps between successive events.

    Simultaneous events and multifurcations are ordered canonically (hosts,
    then coupled parasites, then duplications) and give zero gaps.
    """
    ev = canonical_events(nested)
    lm = nested.leaf_map
    seq = "".join(lab[0] for _, lab, _ in ev)
    from .trees import RankedTopology

    host = RankedTopology(lm.host_labels, tuple(s for _, lab, s in ev if lab == "H"))
    para = RankedTopology(lm.parasite_labels, tuple(s for _, lab, s in ev if lab != "H"))
    nrt = NestedRankedTopology(lm, host, para, seq)
    times = np.array([t for t, _, _ in ev])
    sigma = np.diff(np.concatenate([[0.0], times])) if len(times) else np.zeros(0)
    return SigmaPoint(nrt, tuple(sigma.tolist()))


def tree_from_sigma(orthant: NestedRankedTopology, sigma: Sequence[float],
                    tol: float = TIME_TOL) -> NestedTree:
    sigma = np.asarray(sigma, dtype=float)
    if len(sigma) != orthant.dimension:
        raise ValueError("wrong number of coordinates")
    if np.any(sigma < -COORD_TOL):
        raise ValueError("sigma coordinates must be nonnegative")
    from .complex import _simulate

    kinds = [k for k, _ in orthant.events]
    if not _simulate(kinds, [s for _, s in orthant.events], orthant.leaf_map):
        raise ValueError("orthant is not a valid nested ranked topology")
    times = np.cumsum(np.maximum(sigma, 0.0))
    lm = orthant.leaf_map
    host_ev = [(float(t), s) for t, (k, s) in zip(times, orthant.events) if k == "H"]
    para_ev = [(float(t), s) for t, (k, s) in zip(times, orthant.events) if k == "P"]
    host = tree_from_events(lm.host_labels, host_ev, tol)
    para = tree_from_events(lm.parasite_labels, para_ev, tol)
    return NestedTree(host, para, lm, tol)


def forget(p: SigmaPoint) -> tuple[TauPoint, TauPoint]:
    """Host and parasite tau-coordinates: block sums of sigma between own events."""
    out = []
    for letter, topo in (("H", p.orthant.host), ("P", p.orthant.parasite)):
        tau, acc = [], 0.0
        for c, x in zip(p.orthant.sequence, p.sigma):
            acc += x
            if c == letter:
                tau.append(acc)
                acc = 0.0
        out.append(TauPoint(topo, tuple(tau)))
    return out[0], out[1]


def nest(host: UltrametricTree, parasite: UltrametricTree, leaf_map: LeafMap,
         tol: float = TIME_TOL) -> NestedTree:
    """Partial inverse of :func:`forget`; raises IncompatibleError off its image."""
    return NestedTree(host, parasite, leaf_map, tol)


# -- random points ---------------------------------------------------------------------


def random_point(leaf_map: LeafMap, rng: np.random.Generator, scale: float = 1.0,
                 zero_prob: float = 0.0) -> SigmaPoint:
    orthants = enumerate_orthants(leaf_map)
    o = orthants[int(rng.integers(len(orthants)))]
    sig = rng.exponential(scale, size=o.dimension)
    if zero_prob:
        sig[rng.random(o.dimension) < zero_prob] = 0.0
    return SigmaPoint(o, tuple(sig.tolist()))


def random_nested_tree(leaf_map: LeafMap, rng: np.random.Generator, scale: float = 1.0,
                       zero_prob: float = 0.0) -> NestedTree:
    p = random_point(leaf_map, rng, scale, zero_prob)
    return tree_from_sigma(p.orthant, p.sigma)


# -- geodesics ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    orthant: NestedRankedTopology
    start: tuple[float, ...]
    end: tuple[float, ...]

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end, self.start)))


@dataclass(frozen=True)
class GeodesicPath:
    segments: tuple[Segment, ...]
    length: float
    exact: bool = True

    @property
    def breakpoints(self) -> list[SigmaPoint]:
        pts = [SigmaPoint(s.orthant, s.start) for s in self.segments]
        last = self.segments[-1]
        pts.append(SigmaPoint(last.orthant, last.end))
        return pts

    @property
    def orthants(self) -> list[NestedRankedTopology]:
        return [s.orthant for s in self.segments]

    def point_at(self, fraction: float) -> SigmaPoint:
        """Point at the given fraction of arc length from the start."""
        fraction = min(max(fraction, 0.0), 1.0)
        total = sum(s.length for s in self.segments)
        target = fraction * total
        for s in self.segments:
            L = s.length
            if target <= L or s is self.segments[-1]:
                w = 0.0 if L == 0 else min(target / L, 1.0)
                x = (1 - w) * np.asarray(s.start) + w * np.asarray(s.end)
                return SigmaPoint(s.orthant, tuple(x.tolist()))
            target -= L
        raise AssertionError("unreachable")

    def sample(self, k: int) -> list[SigmaPoint]:
        return [self.point_at(i / (k - 1)) for i in range(k)] if k > 1 else [self.point_at(0.0)]


def _straighten(pts: list[np.ndarray], length: float, iters: int = 30):
    """Newton polish of the interior breakpoints of a touring path.

    The cone solver pins the length down to ~1e-12 but the breakpoints only
    to about the square root of that, since length is flat to first order
    at the optimum.  Coordinates that are zero stay fixed; the rest solve
    the smooth problem by Newton steps, kept nonnegative by backtracking.
    """
    k = len(pts) - 2
    if k <= 0:
        return pts, length
    scale = max(1.0, max(float(np.abs(x).max(initial=0.0)) for x in pts))
    free = [np.flatnonzero(y > 1e-9 * scale) for y in pts[1:-1]]
    offs = np.concatenate([[0], np.cumsum([len(f) for f in free])]).astype(int)
    n = int(offs[-1])
    if n == 0:
        return pts, length
    cur = [x.copy() for x in pts]

    def total(path):
        return sum(float(np.linalg.norm(b - a)) for a, b in zip(path, path[1:]))

    best = total(cur)
    for _ in range(iters):
        g = np.zeros(n)
        H = np.zeros((n, n))
        for j in range(k + 1):
            d = cur[j + 1] - cur[j]
            L = float(np.linalg.norm(d))
            if L < 1e-14 * scale:
                return (cur, best) if best < length else (pts, length)
            u = d / L
            B = (np.eye(len(d)) - np.outer(u, u)) / L
            ends = []
            if j >= 1:
                ends.append((j - 1, -1.0))
            if j < k:
                ends.append((j, 1.0))
            for a, sa in ends:
                ia = free[a]
                g[offs[a]:offs[a + 1]] += sa * u[ia]
                for b, sb in ends:
                    ib = free[b]
                    H[offs[a]:offs[a + 1], offs[b]:offs[b + 1]] += sa * sb * B[np.ix_(ia, ib)]
        if float(np.linalg.norm(g)) < 1e-15 * scale:
            break
        try:
            step = np.linalg.solve(H + 1e-14 * np.eye(n), -g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-6:
            trial = [x.copy() for x in cur]
            for j, f in enumerate(free):
                trial[j + 1][f] += t * step[offs[j]:offs[j + 1]]
            if all(np.all(y[f] >= 0.0) for y, f in zip(trial[1:-1], free)):
                val = total(trial)
                if val <= best:
                    break
            t /= 2
        else:
            break
        improvement = best - val
        cur, best = trial, val
        if improvement <= 1e-16 * scale:
            break
    return (cur, best) if best <= length else (pts, length)


class SigmaSpace:
    """Metric engine for one leaf map.

    Every face of the reduced complex is spanned by its one-dimensional
    faces (rays), and the ray sets of faces are exactly the subsets of ray
    sets of orthants.  A point is therefore a nonnegative vector indexed by
    rays whose support spans a face, and a straight segment inside a closed
    orthant is a straight segment in ray coordinates.

    Zeroing one ray coordinate is a 1-Lipschitz retraction onto the faces
    without that ray, so by uniqueness of geodesics the geodesic from p to q
    only uses rays in the supports of p and q.  The search runs over the
    maximal cells spanned by those rays, which is a small complex even when
    the number of orthants is large.
    """

    def __init__(self, leaf_map: LeafMap, bound: int | None = None, max_solves: int = 20_000):
        self.leaf_map = leaf_map
        self.orthants = enumerate_orthants(leaf_map, bound)
        self.index = {o: i for i, o in enumerate(self.orthants)}
        n_events = leaf_map.n + leaf_map.m - 2
        coords = tuple(range(2, n_events + 1))
        self.dim = len(coords)
        self.max_solves = max_solves
        ray_ids: dict = {}
        rays = np.zeros((len(self.orthants), self.dim), dtype=np.int64)
        for o, nrt in enumerate(self.orthants):
            for j, i in enumerate(coords):
                key = face_key(nrt, set(coords) - {i})
                rays[o, j] = ray_ids.setdefault(key, len(ray_ids))
        self.rays = rays
        self.ray_keys = list(ray_ids)
        self.masks = [sum(1 << int(r) for r in row) for row in rays]
        self._solvers: dict = {}

    @cached_property
    def model(self) -> ComplexModel:
        """Face lattice of the reduced complex (built on first use)."""
        return build_complex(self.leaf_map, reduced=True)

    def _check(self, p: SigmaPoint):
        if p.leaf_map != self.leaf_map:
            raise TypeMismatchError("points are of different types (n, m, leaf map)")
        if p.orthant not in self.index:
            raise ValueError("point's orthant is not part of this complex")

    # ray coordinates ------------------------------------------------------------
    def support(self, orthant: int, x: np.ndarray) -> dict[int, float]:
        return {int(r): float(v) for r, v in zip(self.rays[orthant], x) if v > 0}

    def orthant_containing(self, mask: int) -> int:
        for o, m in enumerate(self.masks):
            if mask & ~m == 0:
                return o
        raise ValueError("ray set does not span a face")

    def is_face(self, mask: int) -> bool:
        return any(mask & ~m == 0 for m in self.masks)

    def chart(self, orthant: int, rays: Sequence[int], values: np.ndarray) -> np.ndarray:
        pos = {r: v for r, v in zip(rays, values)}
        return np.array([pos.get(int(r), 0.0) for r in self.rays[orthant]])

    # touring problem ---------------------------------------------------------------
    def _solver(self, cells: tuple, faces: tuple, nr: int, full: bool):
        """Clarabel solver for a cell sequence; the endpoints only enter the right-hand side.

        ``cells`` and ``faces`` hold local ray indices.  Without ``full`` the
        last segment is replaced by the straight chord to the end point in
        ray coordinates, which gives a lower bound for every completion.
        """
        key = (cells, faces, nr, full)
        hit = self._solvers.get(key)
        if hit is not None:
            return hit
        k = len(faces)
        offs = np.concatenate([[0], np.cumsum([len(f) for f in faces])]).astype(int)
        ny = int(offs[-1])
        nseg = k + 1
        nvar = ny + nseg
        blocks, cones, p_rows, q_rows = [], [], [], []
        row = 0
        for j in range(nseg):
            support = cells[j] if (full or j < k) else tuple(range(nr))
            B = np.zeros((len(support), nvar))
            where = {r: i for i, r in enumerate(support)}
            if j > 0:
                for c, r in enumerate(faces[j - 1]):
                    B[where[r], offs[j - 1] + c] -= 1.0
            if j < k:
                for c, r in enumerate(faces[j]):
                    B[where[r], offs[j] + c] += 1.0
            top = np.zeros((1, nvar))
            top[0, ny + j] = -1.0
            blocks.append(np.vstack([top, -B]))
            cones.append(clarabel.SecondOrderConeT(len(support) + 1))
            if j == 0:
                p_rows = [(row + 1 + where[r], r) for r in support]
            if j == k:
                q_rows = [(row + 1 + where[r], r) for r in support]
            row += len(support) + 1
        if ny:
            nonneg = np.zeros((ny, nvar))
            nonneg[:, :ny] = -np.eye(ny)
            blocks.append(nonneg)
            cones.append(clarabel.NonnegativeConeT(ny))
        A = sparse.csc_matrix(np.vstack(blocks))
        qv = np.zeros(nvar)
        qv[ny:] = 1.0
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.presolve_enable = False
        settings.tol_gap_abs = 1e-11
        settings.tol_gap_rel = 1e-11
        settings.tol_feas = 1e-11
        settings.max_iter = 200
        solver = clarabel.DefaultSolver(sparse.csc_matrix((nvar, nvar)), qv, A,
                                        np.zeros(A.shape[0]), cones, settings)
        pr = (np.array([a for a, _ in p_rows], dtype=int), np.array([r for _, r in p_rows], dtype=int))
        qr = (np.array([a for a, _ in q_rows], dtype=int), np.array([r for _, r in q_rows], dtype=int))
        hit = (solver, offs, A.shape[0], pr, qr)
        if len(self._solvers) > 50_000:
            self._solvers.clear()
        self._solvers[key] = hit
        return hit

    def _tour(self, P: np.ndarray, Q: np.ndarray, cells: tuple, faces: tuple, full: bool):
        """Length and crossing points of the shortest path through a cell sequence."""
        solver, offs, nrows, (pa, pr), (qa, qr) = self._solver(cells, faces, len(P), full)
        b = np.zeros(nrows)
        b[pa] -= P[pr]
        b[qa] += Q[qr]
        solver.update(b=b)
        x = np.asarray(solver.solve().x)
        pts = [P]
        for j, f in enumerate(faces):
            y = np.zeros(len(P))
            y[list(f)] = np.maximum(x[offs[j]:offs[j + 1]], 0.0)
            pts.append(y)
        length = sum(float(np.linalg.norm(b_ - a_)) for a_, b_ in zip(pts, pts[1:]))
        length += float(np.linalg.norm(Q - pts[-1]))
        if full:
            pts.append(Q)
        return length, pts

    # search ---------------------------------------------------------------------------
    def _reduced_geodesic(self, p0: np.ndarray, q0: np.ndarray, op: int, oq: int, tol: float):
        """Shortest path in the reduced complex as (length, [(orthant, start, end)], exact)."""
        sp, sq = self.support(op, p0), self.support(oq, q0)
        R = sorted(set(sp) | set(sq))
        local = {r: i for i, r in enumerate(R)}
        P = np.array([sp.get(r, 0.0) for r in R])
        Q = np.array([sq.get(r, 0.0) for r in R])
        pmask = sum(1 << r for r in sp)
        qmask = sum(1 << r for r in sq)
        zero = np.zeros(self.dim)

        def to_segments(cell_masks, pts):
            out = []
            for m, a, b in zip(cell_masks, pts, pts[1:]):
                o = self.orthant_containing(m)
                out.append((o, self.chart(o, R, a), self.chart(o, R, b)))
            return out

        if self.is_face(pmask | qmask):
            o = op if (pmask | qmask) & ~self.masks[op] == 0 else self.orthant_containing(pmask | qmask)
            return (float(np.linalg.norm(P - Q)),
                    [(o, self.chart(o, R, P), self.chart(o, R, Q))], True)
        cone_len = float(np.linalg.norm(P) + np.linalg.norm(Q))
        best_len = cone_len
        best_segs = [(op, p0, zero), (oq, zero, q0)]
        rmask = pmask | qmask
        p_only, q_only = pmask & ~qmask, qmask & ~pmask
        found = {m & rmask for m in self.masks} - {0}
        cells = sorted(c for c in found if not any(c != d and c & ~d == 0 for d in found))

        def effective(raw: tuple) -> tuple | None:
            # A ray of p alone, once zero, stays zero; a ray of q alone is zero
            # until it turns positive for good (retraction argument).  So rays
            # missing from one cell are removed from the cells on the far side.
            k = len(raw)
            before = [rmask] * k
            after = [rmask] * k
            for i in range(1, k):
                before[i] = before[i - 1] & raw[i - 1]
                after[k - 1 - i] = after[k - i] & raw[k - i]
            eff = tuple(c & ~(p_only & ~before[i]) & ~(q_only & ~after[i]) for i, c in enumerate(raw))
            for x, y in zip(eff, eff[1:]):
                if not x & y or x == y:
                    return None
            return eff

        def as_local(mask):
            return tuple(local[r] for r in R if mask >> r & 1)

        margin = max(0.1 * tol, 1e-12 * max(1.0, cone_len))
        chord = float(np.linalg.norm(P - Q))
        counter = itertools.count()
        heap = [(chord, next(counter), (c,)) for c in cells if pmask & ~c == 0]
        heapq.heapify(heap)
        seen: set[tuple] = set()
        solves = 0
        exact = True
        while heap:
            lb, _, raw = heapq.heappop(heap)
            if lb >= best_len - margin:
                break
            for nxt in cells:
                if nxt in raw or pmask & ~nxt == 0 or not nxt & raw[-1]:
                    continue
                r2 = raw + (nxt,)
                eff = effective(r2)
                if eff is None or eff in seen:
                    continue
                seen.add(eff)
                if solves >= self.max_solves:
                    exact = False
                    heap.clear()
                    break
                solves += 1
                cb = tuple(as_local(c) for c in eff)
                fb = tuple(as_local(x & y) for x, y in zip(eff, eff[1:]))
                if qmask & ~eff[-1] == 0:
                    length, pts = self._tour(P, Q, cb, fb, True)
                    if length < best_len:
                        pts, length = _straighten(pts, length)
                        best_len = length
                        best_segs = to_segments(list(eff), pts)
                    continue
                bound, _ = self._tour(P, Q, cb, fb, False)
                bound = max(bound, lb)
                if bound < best_len - margin:
                    heapq.heappush(heap, (bound, next(counter), r2))
        if not exact:
            log.warning("geodesic search hit its solve cap; returning the best path found")
        return best_len, best_segs, exact

    def geodesic(self, p: SigmaPoint, q: SigmaPoint, tol: float = DIST_TOL) -> GeodesicPath:
        self._check(p)
        self._check(q)
        op, oq = self.index[p.orthant], self.index[q.orthant]
        pv, qv = p.vector, q.vector
        if op == oq:
            return GeodesicPath((Segment(p.orthant, p.sigma, q.sigma),),
                                float(np.linalg.norm(qv - pv)), True)
        if self.dim <= 0:
            return GeodesicPath((Segment(p.orthant, p.sigma, q.sigma),),
                                float(np.linalg.norm(qv - pv)), True)
        L0, segs, exact = self._reduced_geodesic(pv[1:], qv[1:], op, oq, tol)
        d1 = qv[0] - pv[0]
        length = math.hypot(d1, L0)
        # the first interval moves linearly with arc length along the reduced path
        out, run = [], 0.0
        for o, a, b in segs:
            seg_len = float(np.linalg.norm(b - a))
            s0 = pv[0] + (d1 * run / L0 if L0 > 0 else 0.0)
            run += seg_len
            s1 = pv[0] + (d1 * run / L0 if L0 > 0 else d1)
            out.append(Segment(self.orthants[o], (float(s0), *map(float, a)), (float(s1), *map(float, b))))
        return GeodesicPath(tuple(out), length, exact)

    def distance(self, p: SigmaPoint, q: SigmaPoint, tol: float = DIST_TOL) -> float:
        return self.geodesic(p, q, tol).length


@lru_cache(maxsize=32)
def sigma_space(leaf_map: LeafMap) -> SigmaSpace:
    return SigmaSpace(leaf_map)


def _space_for(p: SigmaPoint, q: SigmaPoint) -> SigmaSpace:
    if p.leaf_map != q.leaf_map:
        raise TypeMismatchError("points are of different types (n, m, leaf map)")
    return sigma_space(p.leaf_map)


def geodesic(p: SigmaPoint, q: SigmaPoint, tol: float = DIST_TOL) -> GeodesicPath:
    return _space_for(p, q).geodesic(p, q, tol)


def distance(p: SigmaPoint, q: SigmaPoint, tol: float = DIST_TOL) -> float:
    """Length of the geodesic between two points of the same type."""
    return geodesic(p, q, tol).length


def cone_distance(p: SigmaPoint, q: SigmaPoint) -> float:
    """Length of the path through the cone point, an upper bound on distance."""
    if p.leaf_map != q.leaf_map:
        raise TypeMismatchError("points are of different types (n, m, leaf map)")
    return p.norm + q.norm


def same_point(p: SigmaPoint, q: SigmaPoint, tol: float = COORD_TOL) -> bool:
    return distance(p, q) <= tol


# -- statistics --------------------------------------------------------------------------


def frechet_function(x: SigmaPoint, points: Sequence[SigmaPoint]) -> float:
    return sum(distance(x, p) ** 2 for p in points)


def _sort_key(p: SigmaPoint):
    return (repr(p.orthant.events), p.orthant.sequence, p.sigma)


def frechet_mean(points: Sequence[SigmaPoint], tol: float = DIST_TOL, passes: int = 200,
                 restarts: int = 10, seed: int = 0, refine: bool = True) -> SigmaPoint:
    """Frechet mean by the inductive geodesic-interpolation scheme.

    Points are put in a canonical order before the seeded shuffles, so the
    result does not depend on the order of ``points``.  Restarts use
    different shuffles and the one with the smallest sum of squared
    distances is kept, then polished by a bounded local minimisation in the
    orthants around it.
    """
    if not points:
        raise ValueError("frechet_mean needs at least one point")
    lm = points[0].leaf_map
    if any(p.leaf_map != lm for p in points):
        raise TypeMismatchError("points are of different types (n, m, leaf map)")
    pts = sorted(points, key=_sort_key)
    if all(p.orthant == pts[0].orthant for p in pts):
        mean = np.mean([p.vector for p in pts], axis=0)
        return SigmaPoint(pts[0].orthant, tuple(mean.tolist()))
    space = sigma_space(lm)
    best, best_f = None, math.inf
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        x = pts[int(rng.integers(len(pts)))]
        k = 1
        for _ in range(passes):
            for i in rng.permutation(len(pts)):
                k += 1
                x = space.geodesic(x, pts[i], tol).point_at(1.0 / k)
        f = sum(space.distance(x, p, tol) ** 2 for p in pts)
        if f < best_f:
            best, best_f = x, f
    if refine:
        best, best_f = _polish(space, best, best_f, pts, tol)
    return best


def _polish(space: SigmaSpace, x: SigmaPoint, fx: float, pts, tol: float):
    """Local minimisation of the Frechet function over the closed orthants near ``x``."""
    ox = space.index[x.orthant]
    v = x.vector
    scale = max(x.norm, 1e-12)
    kept = {r: val for r, val in space.support(ox, v[1:]).items() if val > 1e-2 * scale}
    mask = sum(1 << r for r in kept)
    best, best_f = x, fx
    for o, m in enumerate(space.masks):
        if mask & ~m:
            continue
        nrt = space.orthants[o]
        start = np.concatenate([[v[0]], space.chart(o, list(kept), np.array(list(kept.values())))])

        def f(y, nrt=nrt):
            c = SigmaPoint(nrt, tuple(np.maximum(y, 0.0).tolist()))
            return sum(space.distance(c, p, tol) ** 2 for p in pts)

        res = minimize(f, start, method="L-BFGS-B", bounds=[(0, None)] * nrt.dimension,
                       options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 500})
        if res.fun < best_f:
            best, best_f = SigmaPoint(nrt, tuple(np.maximum(res.x, 0.0).tolist())), float(res.fun)
    return best, best_f


def cat0_midpoint_check(x: SigmaPoint, y: SigmaPoint, z: SigmaPoint, tol: float = 1e-6) -> bool:
    """CAT(0) midpoint inequality for the triangle (x, y, z)."""
    g = geodesic(y, z)
    mid = g.point_at(0.5)
    dyz = g.length
    lhs = distance(x, mid) ** 2
    rhs = (distance(x, y) ** 2 + distance(x, z) ** 2) / 2 - dyz ** 2 / 4
    return lhs <= rhs + tol
