"""Word-embedding matrices: loading, preprocessing, truncation and
subword synthesis of vectors for out-of-vocabulary forms.

Row order is frequency rank: row 0 is the most frequent word.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "EmbeddingFormatError",
    "EmbeddingMatrix",
    "NgramTable",
    "OOVVector",
    "PIPELINES",
    "extend_with_oov",
    "length_normalize",
    "load_embeddings",
    "load_embeddings_file",
    "load_ngram_table",
    "mean_center",
    "ngram_decompose",
    "preprocess",
    "save_embeddings",
    "save_embeddings_file",
    "synthesize_oov",
    "truncate_vocab",
]


class EmbeddingFormatError(ValueError):
    """Malformed word2vec-text input; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Ordered vocabulary plus one dense row per word.

    ``oov`` flags rows synthesized from subwords; ``zero_rows`` counts rows
    left at zero by the last normalization; ``duplicates`` counts repeated
    forms dropped at load time.
    """

    words: tuple[str, ...]
    vectors: np.ndarray
    oov: np.ndarray | None = None
    zero_rows: int = 0
    duplicates: int = 0
    _rank: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        words = tuple(self.words)
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d array")
        if vectors.shape[0] != len(words):
            raise ValueError(
                f"{len(words)} words but {vectors.shape[0]} vectors"
            )
        if vectors.shape[1] < 1:
            raise ValueError("dimensionality must be at least 1")
        rank = {}
        for i, w in enumerate(words):
            if w in rank:
                raise ValueError(f"duplicate word {w!r}")
            rank[w] = i
        oov = (
            np.zeros(len(words), dtype=bool)
            if self.oov is None
            else np.asarray(self.oov, dtype=bool).copy()
        )
        if oov.shape != (len(words),):
            raise ValueError("oov mask must have one entry per word")
        vectors = vectors.copy()
        vectors.setflags(write=False)
        oov.setflags(write=False)
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "oov", oov)
        object.__setattr__(self, "_rank", rank)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._rank

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def rank_of(self, word: str) -> int:
        return self._rank[word]

    def get(self, word: str) -> int | None:
        return self._rank.get(word)

    def vector(self, word: str) -> np.ndarray:
        return self.vectors[self._rank[word]]

    def with_vectors(self, vectors: np.ndarray, **changes) -> "EmbeddingMatrix":
        return replace(self, vectors=vectors, **changes)


def _parse_row(line: str, lineno: int, dim: int) -> tuple[str, np.ndarray]:
    parts = line.rstrip("\n").rstrip("\r").split(" ")
    # trailing space is common in exported files
    while parts and parts[-1] == "":
        parts.pop()
    if len(parts) != dim + 1:
        raise EmbeddingFormatError(
            f"dimensionality mismatch: expected {dim} values, "
            f"got {len(parts) - 1}",
            lineno,
        )
    try:
        values = np.array([float(p) for p in parts[1:]], dtype=np.float64)
    except ValueError as err:
        raise EmbeddingFormatError(f"non-numeric token ({err})", lineno) from None
    if not parts[0]:
        raise EmbeddingFormatError("empty form", lineno)
    return parts[0], values


def load_embeddings(stream: IO[str] | Iterable[str]) -> EmbeddingMatrix:
    """Read word2vec text format from an open text stream.

    Duplicate forms keep their first occurrence; the number dropped is
    stored in ``EmbeddingMatrix.duplicates``.
    """
    lines = iter(stream)
    try:
        header = next(lines)
    except StopIteration:
        raise EmbeddingFormatError("empty input", 1) from None
    fields = header.split()
    if len(fields) != 2:
        raise EmbeddingFormatError("header must be '<count> <dim>'", 1)
    try:
        count, dim = int(fields[0]), int(fields[1])
    except ValueError:
        raise EmbeddingFormatError("header must be '<count> <dim>'", 1) from None
    if count < 0 or dim < 1:
        raise EmbeddingFormatError("header must be '<count> <dim>'", 1)

    words: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    duplicates = 0
    lineno = 1
    for lineno, line in enumerate(lines, start=2):
        if not line.strip():
            continue
        word, values = _parse_row(line, lineno, dim)
        if word in seen:
            duplicates += 1
            continue
        seen.add(word)
        words.append(word)
        rows.append(values)
    if len(words) + duplicates != count:
        logger.warning("header declares %d rows, found %d", count, len(words) + duplicates)
    if duplicates:
        logger.warning("%d duplicate forms dropped", duplicates)
    vectors = np.vstack(rows) if rows else np.zeros((0, dim))
    return EmbeddingMatrix(tuple(words), vectors, duplicates=duplicates)


def _oov_sidecar(path: str | os.PathLike) -> str:
    return os.fspath(path) + ".oov"


def load_embeddings_file(path: str | os.PathLike) -> EmbeddingMatrix:
    """Load a word2vec text file, restoring OOV flags from a ``.oov`` sidecar."""
    with open(path, encoding="utf-8") as f:
        m = load_embeddings(f)
    sidecar = _oov_sidecar(path)
    if os.path.exists(sidecar):
        with open(sidecar, encoding="utf-8") as f:
            flagged = {line.rstrip("\n") for line in f if line.strip()}
        mask = np.array([w in flagged for w in m.words], dtype=bool)
        m = replace(m, oov=mask)
    return m


def save_embeddings(
    m: EmbeddingMatrix, stream: IO[str], precision: int = 6
) -> None:
    """Write word2vec text format with ``precision`` significant digits."""
    stream.write(f"{len(m)} {m.dim}\n")
    fmt = f"%.{precision}g"
    for word, row in zip(m.words, m.vectors):
        stream.write(word + " " + " ".join(fmt % v for v in row) + "\n")


def save_embeddings_file(
    m: EmbeddingMatrix, path: str | os.PathLike, precision: int = 6
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        save_embeddings(m, f, precision)
    sidecar = _oov_sidecar(path)
    if m.oov.any():
        with open(sidecar, "w", encoding="utf-8", newline="\n") as f:
            for word, flag in zip(m.words, m.oov):
                if flag:
                    f.write(word + "\n")
    elif os.path.exists(sidecar):
        os.remove(sidecar)


def length_normalize(m: EmbeddingMatrix) -> EmbeddingMatrix:
    # divide by the largest entry first so tiny rows do not underflow
    scale = np.abs(m.vectors).max(axis=1) if m.vectors.size else np.zeros(len(m))
    zero = scale == 0
    scaled = m.vectors / np.where(zero, 1.0, scale)[:, None]
    norms = np.linalg.norm(scaled, axis=1)
    return m.with_vectors(scaled / np.where(zero, 1.0, norms)[:, None], zero_rows=int(zero.sum()))


def mean_center(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Subtract the column mean of the in-vocabulary rows from every row.

    OOV-synthesized rows are shifted by the same mean but do not contribute
    to it, so extending a matrix never moves its original rows.
    """
    if len(m) == 0:
        raise ValueError("cannot mean-center an empty matrix")
    base = m.vectors[~m.oov] if (~m.oov).any() else m.vectors
    return m.with_vectors(m.vectors - base.mean(axis=0))


def _normalize_center_normalize(m: EmbeddingMatrix) -> EmbeddingMatrix:
    return length_normalize(mean_center(length_normalize(m)))


PIPELINES = {
    "unit-center-unit": _normalize_center_normalize,
    "unit": length_normalize,
    "center": mean_center,
    "none": lambda m: m,
}


def preprocess(m: EmbeddingMatrix, pipeline: str = "unit-center-unit") -> EmbeddingMatrix:
    try:
        step = PIPELINES[pipeline]
    except KeyError:
        raise ValueError(
            f"unknown preprocessing pipeline {pipeline!r}; "
            f"choose from {sorted(PIPELINES)}"
        ) from None
    return step(m)


def truncate_vocab(m: EmbeddingMatrix, k: int) -> EmbeddingMatrix:
    if k < 1:
        raise ValueError("k must be positive")
    if k >= len(m):
        return m
    return EmbeddingMatrix(m.words[:k], m.vectors[:k], oov=m.oov[:k])


# --- subword synthesis -------------------------------------------------------


@dataclass(frozen=True)
class NgramTable:
    grams: dict[str, np.ndarray]
    n_min: int
    n_max: int

    def __post_init__(self):
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError("need 1 <= n_min <= n_max")
        dims = {np.shape(v) for v in self.grams.values()}
        if len(dims) > 1:
            raise ValueError("n-gram vectors differ in dimensionality")

    @property
    def dim(self) -> int:
        return len(next(iter(self.grams.values())))

    def __len__(self) -> int:
        return len(self.grams)


def load_ngram_table(path: str | os.PathLike, meta_path: str | os.PathLike | None = None) -> NgramTable:
    """Read an n-gram table; bounds come from the ``<path>.meta`` sidecar."""
    meta_path = meta_path or os.fspath(path) + ".meta"
    with open(meta_path, encoding="utf-8") as f:
        fields = f.readline().split()
    if len(fields) != 2:
        raise EmbeddingFormatError(f"{meta_path}: expected 'nmin nmax'", 1)
    n_min, n_max = int(fields[0]), int(fields[1])
    with open(path, encoding="utf-8") as f:
        m = load_embeddings(f)
    grams = {g: m.vectors[i] for i, g in enumerate(m.words)}
    return NgramTable(grams, n_min, n_max)


def ngram_decompose(form: str, n_min: int, n_max: int) -> list[str]:
    """Character n-grams of ``<form>`` for each length in [n_min, n_max].

    Shorter lengths come first; within a length, left to right. A marked
    form shorter than ``n_min`` is returned whole.
    """
    if not form:
        raise ValueError("empty form")
    if not 1 <= n_min <= n_max:
        raise ValueError("need 1 <= n_min <= n_max")
    marked = f"<{form}>"
    if len(marked) < n_min:
        return [marked]
    grams = []
    for n in range(n_min, min(n_max, len(marked)) + 1):
        grams.extend(marked[i:i + n] for i in range(len(marked) - n + 1))
    return grams


class OOVVector(NamedTuple):
    vector: np.ndarray
    missing: int
    covered: bool


def synthesize_oov(form: str, table: NgramTable) -> OOVVector:
    """Sum the table vectors of every n-gram of ``form``.

    Missing n-grams are skipped; ``covered`` is False when none was found
    and the zero vector is returned.
    """
    if len(table) == 0:
        raise ValueError("empty n-gram table")
    total = np.zeros(table.dim)
    hits = missing = 0
    for gram in ngram_decompose(form, table.n_min, table.n_max):
        vec = table.grams.get(gram)
        if vec is None:
            missing += 1
        else:
            total += vec
            hits += 1
    return OOVVector(total, missing, hits > 0)


def extend_with_oov(
    m: EmbeddingMatrix, forms: Sequence[str], table: NgramTable
) -> tuple[EmbeddingMatrix, int]:
    """Append synthesized rows for ``forms``; returns (matrix, skipped).

    Forms already present (or repeated in ``forms``) are skipped and counted.
    """
    if len(table) and table.dim != m.dim:
        raise ValueError(
            f"n-gram table has dimension {table.dim}, matrix has {m.dim}"
        )
    new_words: list[str] = []
    new_rows: list[np.ndarray] = []
    seen = set(m.words)
    skipped = uncovered = 0
    for form in forms:
        if form in seen:
            skipped += 1
            continue
        seen.add(form)
        synth = synthesize_oov(form, table)
        uncovered += not synth.covered
        new_words.append(form)
        new_rows.append(synth.vector)
    if uncovered:
        logger.warning("%d OOV forms had no n-gram coverage", uncovered)
    if not new_words:
        return m, skipped
    vectors = np.vstack([m.vectors, np.vstack(new_rows)])
    oov = np.concatenate([m.oov, np.ones(len(new_words), dtype=bool)])
    return EmbeddingMatrix(m.words + tuple(new_words), vectors, oov=oov), skipped
