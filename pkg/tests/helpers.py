"""Fixture builders and independent oracles shared by the test modules."""
from __future__ import annotations

import itertools

import numpy as np

from morphlex.embeddings import EmbeddingMatrix
from morphlex.morphology import MorphTag


def random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    return q * np.sign(np.diag(r))


def matrix(prefix: str, vectors, oov=None) -> EmbeddingMatrix:
    vectors = np.asarray(vectors, dtype=float)
    return EmbeddingMatrix(tuple(f"{prefix}{i}" for i in range(len(vectors))), vectors, oov=oov)


def rotated_copy(seed: int = 0, n: int = 100, d: int = 10, decay: float = 0.6):
    """Source words with a decaying spectrum and an exactly rotated target copy.

    Row i of the target is the translation of row i of the source.
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d)) * decay ** np.arange(d)
    q = random_orthogonal(rng, d)
    return matrix("s", x), matrix("t", x @ q), q


def brute_force_matching(n_left, n_right, edges):
    """Best (cardinality, weight) over every injective assignment of left nodes.

    Each left node either takes one of the right nodes or stays unmatched;
    absent edges are unusable. Returns (cardinality, weight).
    """
    weight = {(i, j): w for i, j, w in edges}
    best = (0, 0.0)
    options = [[None] + [j for j in range(n_right) if (i, j) in weight] for i in range(n_left)]
    for combo in itertools.product(*options):
        used = [j for j in combo if j is not None]
        if len(used) != len(set(used)):
            continue
        card = len(used)
        total = sum(weight[(i, j)] for i, j in enumerate(combo) if j is not None)
        if (card, total) > best:
            best = (card, total)
    return best


def brute_force_nearest(query, targets: np.ndarray) -> int:
    """Exhaustive cosine argmax with the lower-index tie-break."""
    best, best_score = -1, -np.inf
    qn = query / np.linalg.norm(query)
    for j, row in enumerate(targets):
        norm = np.linalg.norm(row)
        score = 0.0 if norm == 0 else float(np.dot(row / norm, qn))
        if score > best_score:
            best, best_score = j, score
    return best


def brute_force_canonical(n_left, n_right, edges, tol=1e-12):
    """Lexicographically smallest (left, right) pair list among optimal matchings."""
    weight = {(i, j): w for i, j, w in edges}
    options = [[None] + [j for j in range(n_right) if (i, j) in weight] for i in range(n_left)]
    scored = []
    for combo in itertools.product(*options):
        used = [j for j in combo if j is not None]
        if len(used) != len(set(used)):
            continue
        pairs = [(i, j) for i, j in enumerate(combo) if j is not None]
        scored.append((len(pairs), sum(weight[p] for p in pairs), pairs))
    card = max(s[0] for s in scored)
    top = max(s[1] for s in scored if s[0] == card)
    return min(s[2] for s in scored if s[0] == card and s[1] >= top - tol)


NOUN_TAGS = tuple(
    MorphTag.of("N", case, number) for case in ("NOM", "GEN") for number in ("SG", "PL")
)


def tag_clustered(seed: int = 0, n_lemmas: int = 30, d: int = 12, tag_scale: float = 0.5, noise: float = 0.5):
    """Inflected forms as lemma vector + tag vector + independent noise per language.

    Forms of one lemma sit close together, so plain retrieval confuses
    paradigm slots. Returns (x, z, constraint) with row i of z translating
    row i of x.
    """
    from morphlex.training import MorphConstraint

    rng = np.random.default_rng(seed)
    lemma = rng.normal(size=(n_lemmas, d))
    tag = rng.normal(size=(len(NOUN_TAGS), d)) * tag_scale
    base = (lemma[:, None, :] + tag[None, :, :]).reshape(-1, d)
    xs = base + noise * rng.normal(size=base.shape)
    zs = base + noise * rng.normal(size=base.shape)
    q = random_orthogonal(rng, d)
    x, z = matrix("s", xs), matrix("t", zs @ q)
    tags = [NOUN_TAGS[k] for _ in range(n_lemmas) for k in range(len(NOUN_TAGS))]
    constraint = MorphConstraint(
        {w: frozenset({t}) for w, t in zip(x.words, tags)},
        {w: frozenset({t}) for w, t in zip(z.words, tags)},
    )
    return x, z, constraint


def adversarial_tags(seed: int = 0, n: int = 40, d: int = 6):
    """Rotated copy whose target tags are swapped, so every geometric
    nearest neighbor carries an incompatible tag."""
    from morphlex.training import MorphConstraint

    x, z, q = rotated_copy(seed, n, d, decay=0.8)
    a, b = MorphTag.of("N", "SG"), MorphTag.of("N", "PL")
    src = {w: frozenset({a if i % 2 == 0 else b}) for i, w in enumerate(x.words)}
    tgt = {w: frozenset({b if i % 2 == 0 else a}) for i, w in enumerate(z.words)}
    return x, z, MorphConstraint(src, tgt)


def held_out_p1(x, z, w, held, preprocessing="unit-center-unit") -> float:
    """P@1 of row i -> row i by exhaustive retrieval in the preprocessed spaces."""
    from morphlex.embeddings import preprocess

    xp, zp = preprocess(x, preprocessing), preprocess(z, preprocessing)
    mapped = xp.vectors @ w.w
    hits = [brute_force_nearest(mapped[i], zp.vectors) == i for i in held]
    return sum(hits) / len(hits)


def write_pipeline_fixture(root, n_lemmas: int = 40, seed: int = 0, d: int = 8):
    """Synsets, paradigms and embeddings for a small two-language corpus.

    Source lemma ``pL`` (forms ``pL_k``) translates target lemma ``qL``
    (forms ``qL_k``); form vectors follow :func:`tag_clustered` with low
    noise, so a trained mapping recovers most test entries. Returns a dict
    of file paths.
    """
    from morphlex.embeddings import save_embeddings_file

    root = __import__("pathlib").Path(root)
    root.mkdir(parents=True, exist_ok=True)
    x, z, _ = tag_clustered(seed, n_lemmas=n_lemmas, d=d, tag_scale=0.5, noise=0.1)
    slots = len(NOUN_TAGS)
    src_forms = [f"p{l}_{k}" for l in range(n_lemmas) for k in range(slots)]
    tgt_forms = [f"q{l}_{k}" for l in range(n_lemmas) for k in range(slots)]
    paths = {name: root / name for name in (
        "src_synsets.tsv", "tgt_synsets.tsv", "src_paradigms.tsv", "tgt_paradigms.tsv", "src.vec", "tgt.vec")}
    paths["src_synsets.tsv"].write_text("".join(f"syn{l:03d}\tp{l}\n" for l in range(n_lemmas)), encoding="utf-8")
    paths["tgt_synsets.tsv"].write_text("".join(f"syn{l:03d}\tq{l}\n" for l in range(n_lemmas)), encoding="utf-8")
    for prefix, name in (("p", "src_paradigms.tsv"), ("q", "tgt_paradigms.tsv")):
        paths[name].write_text("".join(
            f"{prefix}{l}\t{prefix}{l}_{k}\t{NOUN_TAGS[k]}\n" for l in range(n_lemmas) for k in range(slots)
        ), encoding="utf-8")
    save_embeddings_file(EmbeddingMatrix(tuple(src_forms), x.vectors), paths["src.vec"])
    save_embeddings_file(EmbeddingMatrix(tuple(tgt_forms), z.vectors), paths["tgt.vec"])
    return {k: str(v) for k, v in paths.items()}
