"""Orthogonal mapping between embedding spaces and cosine retrieval."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .embeddings import EmbeddingMatrix

logger = logging.getLogger(__name__)

ORTHOGONALITY_TOL = 1e-8
# rows of the query block times target rows kept in memory at once
_BLOCK_BUDGET = 1 << 22

Pair = tuple[int, int]
# Maps a source row to the sorted array of admissible target rows, or None
# for "everything". Filters should hand back the same array object for
# sources sharing a candidate set so retrieval can batch them.
CandidateFilter = Callable[[int], "np.ndarray | None"]


class MappingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MappingMatrix:
    """Square orthogonal map from source space to target space (row vectors: ``x @ w``)."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"mapping must be square, got shape {w.shape}")
        err = orthogonality_error(w)
        if err > ORTHOGONALITY_TOL:
            raise ValueError(f"mapping is not orthogonal: |W'W - I|_F = {err:.3g}")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    def apply(self, m: EmbeddingMatrix) -> EmbeddingMatrix:
        return m.with_vectors(m.vectors @ self.w)

    @classmethod
    def identity(cls, d: int) -> "MappingMatrix":
        return cls(np.eye(d))


def orthogonality_error(w: np.ndarray) -> float:
    return float(np.linalg.norm(w.T @ w - np.eye(w.shape[1])))


class SeedLexicon(list):
    """List of (source row, target row) pairs; repeats are allowed."""

    def sources(self) -> list[int]:
        return [s for s, _ in self]

    def targets(self) -> list[int]:
        return [t for _, t in self]


def load_seed_lexicon(
    path: str | os.PathLike, x: EmbeddingMatrix, z: EmbeddingMatrix
) -> tuple[SeedLexicon, int]:
    """Resolve a tab-separated pair file to row indices.

    Only the first two columns are read, so five-column dictionary files
    work as seeds. Returns the lexicon and the number of unresolvable lines.
    """
    seed = SeedLexicon()
    unresolved = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise ValueError(f"{path}:{lineno}: expected two tab-separated forms")
            i, j = x.get(cols[0]), z.get(cols[1])
            if i is None or j is None:
                unresolved += 1
                continue
            seed.append((i, j))
    if unresolved:
        logger.warning("%s: %d seed pairs not resolvable in the vocabularies", path, unresolved)
    return seed, unresolved


def procrustes_objective(x: np.ndarray, z: np.ndarray, w: np.ndarray) -> float:
    """Frobenius distance ``|x w - z|``."""
    return float(np.linalg.norm(x @ w - z))


def procrustes(x: EmbeddingMatrix, z: EmbeddingMatrix, seed: Sequence[Pair]) -> MappingMatrix:
    """Best orthogonal ``W`` aligning the seed rows of ``x`` onto those of ``z``.

    ``W = U V'`` where ``U S V'`` is the SVD of ``X_D' Z_D``.
    """
    if not seed:
        raise ValueError("empty seed lexicon")
    if x.dim != z.dim:
        raise ValueError(f"dimensionality mismatch: {x.dim} vs {z.dim}")
    src = np.fromiter((s for s, _ in seed), dtype=np.intp, count=len(seed))
    tgt = np.fromiter((t for _, t in seed), dtype=np.intp, count=len(seed))
    m = x.vectors[src].T @ z.vectors[tgt]
    try:
        u, _, vt = np.linalg.svd(m)
    except np.linalg.LinAlgError as err:
        raise MappingError(f"SVD did not converge: {err}") from err
    w = u @ vt
    err = orthogonality_error(w)
    if err > ORTHOGONALITY_TOL:
        raise MappingError(f"Procrustes solution lost orthogonality ({err:.3g})")
    return MappingMatrix(w)


# --- retrieval --------------------------------------------------------------


def unit_rows(a: np.ndarray) -> np.ndarray:
    """Row-normalize; zero rows stay zero so their cosine is 0."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    return a / np.where(norms == 0, 1.0, norms)


def row_blocks(n_rows: int, n_targets: int) -> list[tuple[int, int]]:
    """Fixed partition of query rows; independent of the thread count."""
    size = max(1, _BLOCK_BUDGET // max(1, n_targets))
    return [(lo, min(lo + size, n_rows)) for lo in range(0, n_rows, size)]


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores, descending, ties to lower index."""
    n = scores.shape[0]
    k = min(k, n)
    if k == 0:
        return np.zeros(0, dtype=np.intp)
    if k < n:
        kth = np.partition(scores, n - k)[n - k]
        pool = np.flatnonzero(scores >= kth)
    else:
        pool = np.arange(n)
    order = np.argsort(-scores[pool], kind="stable")
    return pool[order[:k]]


class Neighbor(NamedTuple):
    index: int
    score: float


def nearest_neighbors(query: np.ndarray, targets: EmbeddingMatrix, k: int) -> list[Neighbor]:
    """The ``k`` target rows with highest cosine to ``query``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (targets.dim,):
        raise ValueError(f"query has shape {query.shape}, targets have dim {targets.dim}")
    scores = unit_rows(targets.vectors) @ unit_rows(query)[0]
    return [Neighbor(int(i), float(scores[i])) for i in top_k(scores, k)]


def _map_threads(fn, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class Induction(NamedTuple):
    pairs: SeedLexicon
    omitted: int
    # sources whose unfiltered nearest neighbor the filter rejected,
    # omitted sources included
    rejected: int


def induce_dictionary(
    x: EmbeddingMatrix,
    z: EmbeddingMatrix,
    w: MappingMatrix,
    candidate_filter: CandidateFilter | None = None,
    threads: int = 1,
) -> Induction:
    """Pair every source row with its nearest admissible target row.

    Sources with no admissible target are omitted and counted.
    """
    xs = unit_rows(x.vectors @ w.w) if len(x) else np.zeros((0, z.dim))
    zs = unit_rows(z.vectors)
    n_src = len(x)

    def run(block: tuple[int, int]):
        lo, hi = block
        scores = xs[lo:hi] @ zs.T
        best = np.argmax(scores, axis=1) if len(z) else np.full(hi - lo, -1)
        if candidate_filter is None:
            return [(lo + r, int(best[r])) for r in range(hi - lo)], 0, 0
        groups: dict[int, tuple[np.ndarray | None, list[int]]] = {}
        for r in range(hi - lo):
            adm = candidate_filter(lo + r)
            groups.setdefault(id(adm), (adm, []))[1].append(r)
        chosen: dict[int, int] = {}
        omitted = rejected = 0
        for adm, rows in groups.values():
            if adm is None:
                for r in rows:
                    chosen[r] = int(best[r])
                continue
            if len(adm) == 0:
                omitted += len(rows)
                rejected += len(rows) if len(z) else 0
                continue
            sub = scores[np.ix_(rows, adm)]
            picks = adm[np.argmax(sub, axis=1)]
            for r, j in zip(rows, picks):
                chosen[r] = int(j)
                rejected += int(j) != int(best[r])
        return [(lo + r, chosen[r]) for r in sorted(chosen)], omitted, rejected

    results = _map_threads(run, row_blocks(n_src, len(z)), threads)
    pairs = SeedLexicon()
    omitted = rejected = 0
    for block_pairs, o, rj in results:
        pairs.extend(block_pairs)
        omitted += o
        rejected += rj
    return Induction(pairs, omitted, rejected)


def mean_cosine(x: EmbeddingMatrix, z: EmbeddingMatrix, w: MappingMatrix, pairs: Iterable[Pair]) -> float:
    pairs = list(pairs)
    if not pairs:
        return 0.0
    src = np.array([s for s, _ in pairs], dtype=np.intp)
    tgt = np.array([t for _, t in pairs], dtype=np.intp)
    a = unit_rows(x.vectors[src] @ w.w)
    b = unit_rows(z.vectors[tgt])
    return float(np.einsum("ij,ij->i", a, b).mean())
