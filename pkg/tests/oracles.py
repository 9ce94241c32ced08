"""Independent reference computations used by the test-suite."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from sigmaspace.metric import SigmaPoint, SigmaSpace
from sigmaspace.nesting import LeafMap, NestedTree
from sigmaspace.trees import (
    UltrametricMatrix,
    random_tree,
    realize_matrix,
    to_distance_matrix,
)


class GridOracle:
    """Shortest paths on a cubical grid laid over every reduced orthant.

    Grid nodes on shared faces are identified through their face key, so a
    graph path is a genuine path in the complex and its length bounds the
    distance from above.  ``reach`` is the stencil radius in grid steps.
    Points must lie in the box ``[0, box]`` in every reduced coordinate.
    """

    def __init__(self, space: SigmaSpace, steps: int = 12, reach: int = 3, box: float = 1.0):
        self.space = space
        model = space.model
        d = space.dim
        self.h = h = box / steps
        self.box = box
        shape = (steps + 1,) * d
        ids: dict = {}
        self.node_ids = []
        for o in range(len(space.orthants)):
            arr = np.empty(shape, dtype=np.int64)
            for idx in itertools.product(range(steps + 1), repeat=d):
                zeros = [i + 2 for i in range(d) if idx[i] == 0]
                key = model.key(o, zeros)
                pos = [i - 2 for i in model.face_positions(o, key)]
                arr[idx] = ids.setdefault((key, tuple(idx[i] for i in pos)), len(ids))
            self.node_ids.append(arr)
        offsets = [off for off in itertools.product(range(-reach, reach + 1), repeat=d)
                   if off > (0,) * d and math.gcd(*[abs(x) for x in off]) == 1]
        rows, cols, vals = [], [], []
        for arr in self.node_ids:
            for off in offsets:
                src = tuple(slice(max(0, -k), steps + 1 - max(0, k)) for k in off)
                dst = tuple(slice(max(0, k), steps + 1 - max(0, -k)) for k in off)
                rows.append(arr[src].ravel())
                cols.append(arr[dst].ravel())
                vals.append(np.full(rows[-1].size, h * math.sqrt(sum(k * k for k in off))))
        self.n = len(ids)
        self.base = (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
        self.coords = np.stack(np.meshgrid(*[np.arange(steps + 1)] * d, indexing="ij"), -1) * h

    def distance(self, p: SigmaPoint, q: SigmaPoint) -> float:
        sp = self.space
        pv, qv = p.vector[1:], q.vector[1:]
        if max(pv.max(initial=0), qv.max(initial=0)) > self.box + 1e-12:
            raise ValueError("point outside the grid box")
        src, dst = self.n, self.n + 1
        rows, cols, vals = [self.base[0]], [self.base[1]], [self.base[2]]
        for special, vec, pt in ((src, pv, p), (dst, qv, q)):
            o = sp.index[pt.orthant]
            ids = self.node_ids[o].ravel()
            w = np.linalg.norm(self.coords.reshape(-1, sp.dim) - vec, axis=1) + 1e-300
            rows.append(np.full(ids.size, special))
            cols.append(ids)
            vals.append(w)
        if p.orthant == q.orthant:
            rows.append(np.array([src]))
            cols.append(np.array([dst]))
            vals.append(np.array([np.linalg.norm(pv - qv) + 1e-300]))
        g = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(self.n + 2, self.n + 2)).tocsr()
        dist = dijkstra(g, directed=False, indices=src)[dst]
        return math.hypot(float(dist), p.sigma[0] - q.sigma[0])


class FaceNetOracle:
    """Shortest paths through a net of points on the orthant boundaries.

    Nodes are the grid points of each reduced chart with at least one zero
    coordinate, identified across orthants by face key.  Any two nodes in a
    common closed orthant are joined by the straight segment between them,
    so only the crossing points are discretised.
    """

    def __init__(self, space: SigmaSpace, steps: int = 20, box: float = 1.0):
        self.space = space
        model = space.model
        d = space.dim
        self.h = h = box / steps
        self.box = box
        ids: dict = {}
        self.members = []
        rows, cols, vals = [], [], []
        for o in range(len(space.orthants)):
            nodes, coords = [], []
            for idx in itertools.product(range(steps + 1), repeat=d):
                if all(idx):
                    continue
                zeros = [i + 2 for i in range(d) if idx[i] == 0]
                key = model.key(o, zeros)
                pos = [i - 2 for i in model.face_positions(o, key)]
                nodes.append(ids.setdefault((key, tuple(idx[i] for i in pos)), len(ids)))
                coords.append(idx)
            nodes = np.asarray(nodes)
            coords = np.asarray(coords, dtype=float) * h
            self.members.append((nodes, coords))
            iu, ju = np.triu_indices(len(nodes), 1)
            w = np.linalg.norm(coords[iu] - coords[ju], axis=1)
            rows.append(nodes[iu])
            cols.append(nodes[ju])
            vals.append(w + 1e-300)
        self.n = len(ids)
        self.base = (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))

    def _local_nodes(self, x: np.ndarray, o: int, radius: int, fine: int):
        """Fine net points on the facets of orthant ``o`` around the projections of x."""
        model = self.space.model
        d = self.space.dim
        hf = self.h / fine
        out = []
        for i in range(d):
            y = x.copy()
            y[i] = 0.0
            others = [j for j in range(d) if j != i]
            for off in itertools.product(range(-radius, radius + 1), repeat=len(others)):
                z = y.copy()
                for j, k in zip(others, off):
                    z[j] = y[j] + k * hf
                if np.any(z < 0) or np.any(z > self.box):
                    continue
                zeros = [j + 2 for j in range(d) if z[j] == 0.0]
                key = model.key(o, zeros)
                src_pos = [j - 2 for j in model.face_positions(o, key)]
                charts = []
                for b in model.orthants_containing(key):
                    c = np.zeros(d)
                    for sj, tj in zip(src_pos, model.face_positions(b, key)):
                        c[tj - 2] = z[sj]
                    charts.append((b, c))
                out.append(charts)
        return out

    def distance(self, p: SigmaPoint, q: SigmaPoint, radius: int = 6, fine: int = 6) -> float:
        sp = self.space
        pv, qv = p.vector[1:], q.vector[1:]
        if max(pv.max(initial=0), qv.max(initial=0)) > self.box + 1e-12:
            raise ValueError("point outside the net box")
        src, dst = self.n, self.n + 1
        rows, cols, vals = [self.base[0]], [self.base[1]], [self.base[2]]
        ends = ((src, pv, sp.index[p.orthant]), (dst, qv, sp.index[q.orthant]))
        for special, vec, o in ends:
            nodes, coords = self.members[o]
            rows.append(np.full(nodes.size, special))
            cols.append(nodes)
            vals.append(np.linalg.norm(coords - vec, axis=1) + 1e-300)
        if p.orthant == q.orthant:
            rows.append(np.array([src]))
            cols.append(np.array([dst]))
            vals.append(np.array([np.linalg.norm(pv - qv) + 1e-300]))
        # refinement near the endpoints, where a coarse net costs first-order length
        extra = []
        for _, vec, o in ends:
            extra.extend(self._local_nodes(vec, o, radius, fine))
        nid = self.n + 2
        per_orthant: dict[int, list[tuple[int, np.ndarray]]] = {}
        for charts in extra:
            for b, c in charts:
                nodes, coords = self.members[b]
                rows.append(np.full(nodes.size, nid))
                cols.append(nodes)
                vals.append(np.linalg.norm(coords - c, axis=1) + 1e-300)
                per_orthant.setdefault(b, []).append((nid, c))
            nid += 1
        for special, vec, o in ends:
            for k, c in per_orthant.get(o, []):
                rows.append(np.array([special]))
                cols.append(np.array([k]))
                vals.append(np.array([np.linalg.norm(c - vec) + 1e-300]))
        for b, items in per_orthant.items():
            if len(items) < 2:
                continue
            ks = np.array([k for k, _ in items])
            cs = np.array([c for _, c in items])
            iu, ju = np.triu_indices(len(ks), 1)
            rows.append(ks[iu])
            cols.append(ks[ju])
            vals.append(np.linalg.norm(cs[iu] - cs[ju], axis=1) + 1e-300)
        g = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(nid, nid)).tocsr()
        dist = dijkstra(g, directed=False, indices=src)[dst]
        return math.hypot(float(dist), p.sigma[0] - q.sigma[0])


def brute_force_distance(space: SigmaSpace, p: SigmaPoint, q: SigmaPoint,
                         max_orthants: int | None = None) -> float:
    """Shortest path over every simple orthant sequence, each solved with cvxpy.

    Works directly in the orthant charts of the face lattice, so it shares
    nothing with the ray-coordinate search.  Consecutive orthants cross
    through one of their maximal common faces.  Exponential; small types only.
    """
    import cvxpy as cp

    model = space.model
    d = space.dim
    p0, q0 = p.vector[1:], q.vector[1:]
    op, oq = space.index[p.orthant], space.index[q.orthant]
    if op == oq:
        return float(np.linalg.norm(p.vector - q.vector))
    best = float(np.linalg.norm(p0) + np.linalg.norm(q0))
    adj: dict[int, list] = {}
    for (a, b), faces in model.common_faces.items():
        adj.setdefault(a, []).extend((b, f) for f in faces)

    def embed(o, key, y):
        pos = [i - 2 for i in model.face_positions(o, key)]
        rows = np.zeros((d, len(pos)))
        for c, i in enumerate(pos):
            rows[i, c] = 1.0
        return rows @ y

    def solve(orth, faces):
        ys = [cp.Variable(model.face_dim(f), nonneg=True) for f in faces]
        pts_in = [p0] + [embed(o, f, y) for o, f, y in zip(orth[1:], faces, ys)]
        pts_out = [embed(o, f, y) for o, f, y in zip(orth, faces, ys)] + [q0]
        cost = sum(cp.norm(b - a) for a, b in zip(pts_in, pts_out))
        prob = cp.Problem(cp.Minimize(cost))
        prob.solve(solver=cp.CLARABEL)
        return float(prob.value)

    def rec(orth, faces):
        nonlocal best
        if max_orthants is not None and len(orth) >= max_orthants:
            return
        for b, f in adj.get(orth[-1], []):
            if b in orth:
                continue
            if b == oq:
                best = min(best, solve(orth + [b], faces + [f]))
            else:
                rec(orth + [b], faces + [f])

    rec([op], [])
    return math.hypot(best, p.sigma[0] - q.sigma[0])


def maximally_coupled_tree(lm: LeafMap, rng) -> NestedTree:
    """Host tree with each host leaf replaced by a clade of its parasites.

    Each clade coalesces below the host leaf's parent node, so every host
    split is matched by a simultaneous parasite split.
    """
    host = random_tree(lm.host_labels, rng)
    dh = to_distance_matrix(host).d
    t = np.asarray(lm.targets)
    dp = dh[np.ix_(t, t)].copy()
    for a in range(lm.n):
        members = np.flatnonzero(t == a)
        if len(members) < 2:
            continue
        parent = min(dh[a, b] for b in range(lm.n) if b != a) / 2
        clade = random_tree([f"{i:04d}" for i in members], rng)
        scale = rng.uniform(0.2, 0.9) * parent / clade.height
        dc = to_distance_matrix(clade).d * scale
        dp[np.ix_(members, members)] = dc
    para = realize_matrix(UltrametricMatrix(lm.parasite_labels, dp))
    return NestedTree(host, para, lm)
