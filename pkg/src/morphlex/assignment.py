"""Maximum-weight matching on sparse bipartite candidate graphs.

The solver is a shortest-augmenting-path (Jonker-Volgenant style) method
on the sparse graph. Every left node additionally owns a private virtual
"unmatched" column whose cost dominates any rearrangement of real edges,
so the result has maximum cardinality first and maximum weight second.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingMatrix
from .mapping import CandidateFilter, row_blocks, top_k, unit_rows

Edge = tuple[int, int, float]


@dataclass(frozen=True)
class SparseBipartiteGraph:
    n_left: int
    n_right: int
    edges: tuple[Edge, ...] = field(default=())

    def __post_init__(self):
        if self.n_left < 0 or self.n_right < 0:
            raise ValueError("node counts must be non-negative")
        edges = tuple((int(i), int(j), float(w)) for i, j, w in self.edges)
        seen = set()
        for i, j, w in edges:
            if not (0 <= i < self.n_left and 0 <= j < self.n_right):
                raise ValueError(f"edge ({i}, {j}) out of range")
            if not math.isfinite(w):
                raise ValueError(f"edge ({i}, {j}) has non-finite weight")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_dense(cls, weights, mask=None) -> "SparseBipartiteGraph":
        w = np.asarray(weights, dtype=np.float64)
        keep = np.ones(w.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        edges = tuple((int(i), int(j), float(w[i, j])) for i, j in zip(*np.nonzero(keep)))
        return cls(w.shape[0], w.shape[1], edges)


def matching_weight(g: SparseBipartiteGraph, matching: Sequence[tuple[int, int]]) -> float:
    weight = {(i, j): w for i, j, w in g.edges}
    return sum(weight[p] for p in matching)


def solve_assignment(g: SparseBipartiteGraph) -> list[tuple[int, int]]:
    """Maximum-cardinality, then maximum-weight matching, sorted by left index.

    Among equally good matchings the lexicographically smallest list of
    (left, right) pairs is returned. Left nodes without edges stay unmatched.
    """
    n, m = g.n_left, g.n_right
    if n == 0 or m == 0 or not g.edges:
        return []

    adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for i, j, w in g.edges:
        adj[i].append((j, -w))
    big = 2.0 * sum(max(abs(c) for _, c in a) for a in adj if a) + 1.0
    # column m + i is row i's private "unmatched" slot
    for i in range(n):
        adj[i].sort()
        adj[i].append((m + i, big))

    n_cols = m + n
    u = [min(c for _, c in a) for a in adj]
    v = [0.0] * n_cols
    row_of = [-1] * n_cols
    col_of = [-1] * n

    for start in range(n):
        _augment(start, adj, u, v, row_of, col_of)

    tol = 1e-13 * max(1.0, big)
    _canonicalize(adj, u, v, row_of, col_of, m, tol)
    return [(i, col_of[i]) for i in range(n) if col_of[i] < m]


def _augment(start, adj, u, v, row_of, col_of):
    """One Dijkstra search in reduced costs from a free row, then augment."""
    dist: dict[int, float] = {}
    pred: dict[int, int] = {}
    done: dict[int, float] = {}
    heap: list[tuple[float, int]] = []
    for j, c in adj[start]:
        d = c - u[start] - v[j]
        if d < dist.get(j, math.inf):
            dist[j] = d
            pred[j] = start
            heapq.heappush(heap, (d, j))
    while True:
        d, j = heapq.heappop(heap)
        if j in done or d > dist[j]:
            continue
        done[j] = d
        r = row_of[j]
        if r < 0:
            sink, total = j, d
            break
        for j2, c in adj[r]:
            if j2 in done:
                continue
            nd = d + c - u[r] - v[j2]
            if nd < dist.get(j2, math.inf):
                dist[j2] = nd
                pred[j2] = r
                heapq.heappush(heap, (nd, j2))

    # dual update keeps reduced costs non-negative and path edges tight
    u[start] += total
    for j, dj in done.items():
        if j == sink:
            continue
        v[j] += dj - total
        u[row_of[j]] += total - dj

    j = sink
    while True:
        i = pred[j]
        prev = col_of[i]
        row_of[j] = i
        col_of[i] = j
        if i == start:
            break
        j = prev


def _canonicalize(adj, u, v, row_of, col_of, m, tol):
    """Move to the lexicographically smallest optimal matching.

    Optimal matchings are exactly the row-perfect matchings on tight edges
    that leave unmatched only columns with zero dual. Rows are fixed in
    order; each tries its smaller tight columns via alternating exchanges
    that avoid already fixed rows.
    """
    n = len(adj)
    tight = [[j for j, c in adj[i] if c - u[i] - v[j] <= tol] for i in range(n)]

    def free_ok(j):
        return v[j] >= -tol

    for i in range(n):
        cur = col_of[i]
        for j in sorted(tight[i]):
            if j >= cur:
                break
            plan = _exchange(i, j, cur, tight, row_of, col_of, free_ok)
            if plan is not None:
                old = {col_of[r] for r, _ in plan}
                new = {col for _, col in plan}
                for r, col in plan:
                    col_of[r] = col
                    row_of[col] = r
                for col in old - new:
                    row_of[col] = -1
                break


def _exchange(i, j, cur, tight, row_of, col_of, free_ok):
    """Reassignments making row ``i`` take column ``j``, or None.

    Edges of the exchange graph run from column ``a`` to column ``b`` when
    the owner of ``a`` (an unfixed row, index > i) has a tight edge to ``b``.
    """

    def owner_movable(col):
        r = row_of[col]
        return r > i

    def forward(src, goal):
        # path from src to a column satisfying goal, moving owners forward
        if goal(src):
            return [src]
        prev = {src: None}
        queue = [src]
        for col in queue:
            if not owner_movable(col):
                continue
            for nxt in tight[row_of[col]]:
                if nxt in prev or nxt == col:
                    continue
                prev[nxt] = col
                if goal(nxt):
                    path = [nxt]
                    while prev[path[-1]] is not None:
                        path.append(prev[path[-1]])
                    return path[::-1]
                queue.append(nxt)
        return None

    # cycle: the displaced owner chain of j ends back at cur
    cycle = forward(j, lambda col: col == cur) if row_of[j] >= 0 else None
    if cycle is not None:
        moves = [(i, j)]
        for a, b in zip(cycle, cycle[1:]):
            moves.append((row_of[a], b))
        return moves

    tail = forward(j, lambda col: row_of[col] < 0)
    if tail is None:
        return None
    # someone must take cur unless its dual allows leaving it empty
    head = _backward(cur, i, tight, col_of, free_ok)
    if head is None:
        return None
    moves = [(i, j)]
    for a, b in zip(tail, tail[1:]):
        moves.append((row_of[a], b))
    for a, b in zip(head, head[1:]):
        moves.append((row_of[a], b))
    return moves


def _backward(cur, i, tight, col_of, free_ok):
    """Chain of columns [c_k, ..., c_1, cur] whose owners each shift one step
    right, ending at a column that may be left empty; [cur] if cur itself may."""
    if free_ok(cur):
        return [cur]
    takers: dict[int, list[int]] = {}
    for r, cols in enumerate(tight):
        if r <= i:
            continue
        for c in cols:
            takers.setdefault(c, []).append(r)
    nxt = {cur: None}
    queue = [cur]
    for col in queue:
        for r in takers.get(col, ()):
            own = col_of[r]
            if own in nxt:
                continue
            nxt[own] = col
            if free_ok(own):
                chain = [own]
                while nxt[chain[-1]] is not None:
                    chain.append(nxt[chain[-1]])
                return chain
            queue.append(own)
    return None


def sparsify_similarities(
    x_mapped: EmbeddingMatrix,
    z: EmbeddingMatrix,
    k: int,
    rank_limit: int,
    candidate_filter: CandidateFilter | None = None,
) -> SparseBipartiteGraph:
    """Top-``k`` cosine candidates per rank-limited source row.

    With a filter, the top ``k`` are taken among admissible targets only.
    """
    if k < 1 or rank_limit < 1:
        raise ValueError("k and rank_limit must be positive")
    n_left = min(len(x_mapped), rank_limit)
    n_right = min(len(z), rank_limit)
    xs = unit_rows(x_mapped.vectors[:n_left])
    zs = unit_rows(z.vectors[:n_right])
    edges: list[Edge] = []
    for lo, hi in row_blocks(n_left, n_right):
        scores = xs[lo:hi] @ zs.T
        for r in range(hi - lo):
            row = scores[r]
            if candidate_filter is None:
                picks = top_k(row, k)
            else:
                adm = candidate_filter(lo + r)
                if adm is None:
                    picks = top_k(row, k)
                else:
                    adm = adm[adm < n_right]
                    picks = adm[top_k(row[adm], k)]
            edges.extend((lo + r, int(j), float(row[j])) for j in picks)
    return SparseBipartiteGraph(n_left, n_right, tuple(edges))
