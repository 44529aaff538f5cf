"""P@1 evaluation with frequency bins, per-tag breakdowns, lexeme-frequency
bins and lexeme-controlled candidate restriction.

Two variants are always reported: ``in_vocab`` ignores OOV-synthesized rows
on both sides, ``all`` admits them.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .dictionary import DictEntry
from .embeddings import EmbeddingMatrix
from .mapping import MappingMatrix, row_blocks, unit_rows
from .morphology import MorphTag, ParadigmCollection

STANDARD = "standard"
LEXEME = "lexeme_controlled"
TAIL = "Tail"
OOVS = "OOVs"
FREQUENT = "frequent"
INFREQUENT = "infrequent"
EXCLUDED = "excluded"


@dataclass(frozen=True)
class EvalConfig:
    bin_edges: tuple[int, ...] = (10_000, 50_000, 100_000, 200_000, 300_000, 400_000, 500_000, 600_000)
    lexeme_frequent_cutoff: int = 20_000
    lexeme_infrequent_floor: int = 60_000
    k: int = 1

    def __post_init__(self):
        edges = tuple(int(e) for e in self.bin_edges)
        if not edges or any(b <= a for a, b in zip(edges, edges[1:])) or edges[0] < 1:
            raise ValueError("bin edges must be positive and strictly ascending")
        if not self.lexeme_frequent_cutoff < self.lexeme_infrequent_floor:
            raise ValueError("lexeme_frequent_cutoff must be below lexeme_infrequent_floor")
        if self.k != 1:
            raise ValueError("only P@1 is supported")
        object.__setattr__(self, "bin_edges", edges)

    @property
    def labels(self) -> list[str]:
        return [_edge_label(e) for e in self.bin_edges] + [TAIL, OOVS]


def _edge_label(edge: int) -> str:
    return f"{edge // 1000}k" if edge % 1000 == 0 else str(edge)


def frequency_bin(rank: int, oov: bool, cfg: EvalConfig) -> str:
    """Bin of a 0-based rank; bins are (previous edge, edge] on 1-based rank."""
    if oov:
        return OOVS
    for edge in cfg.bin_edges:
        if rank + 1 <= edge:
            return _edge_label(edge)
    return TAIL


def precision_at_1(predictions: Mapping[str, str | None], gold: Iterable[DictEntry]) -> float:
    """Share of distinct gold source forms whose prediction is any gold target."""
    targets = gold_targets(gold)
    if not targets:
        raise ValueError("empty gold dictionary")
    return sum(predictions.get(s) in t for s, t in targets.items()) / len(targets)


def gold_targets(gold: Iterable[DictEntry]) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for e in gold:
        out.setdefault(e.src_form, set()).add(e.tgt_form)
    return out


def largest_remainder_percentages(counts: Mapping[str, int]) -> dict[str, int]:
    """Integer percentages summing to exactly 100 (all zero for no counts)."""
    total = sum(counts.values())
    if total == 0:
        return {k: 0 for k in counts}
    raw = {k: 100.0 * c / total for k, c in counts.items()}
    out = {k: math.floor(v) for k, v in raw.items()}
    short = 100 - sum(out.values())
    # stable order: larger remainder first, then label order
    order = sorted(counts, key=lambda k: -(raw[k] - out[k]))
    for k in order[:short]:
        out[k] += 1
    return out


def tag_bin_distribution(
    gold: Iterable[DictEntry], x: EmbeddingMatrix, cfg: EvalConfig = EvalConfig()
) -> dict[MorphTag, dict[str, int]]:
    """Per tag, the integer percentage of its entries in each frequency bin.

    Entries whose source form is not in ``x`` at all are left out.
    """
    counts: dict[MorphTag, dict[str, int]] = {}
    for e in gold:
        i = x.get(e.src_form)
        if i is None:
            continue
        row = counts.setdefault(e.tag, {label: 0 for label in cfg.labels})
        row[frequency_bin(i, bool(x.oov[i]), cfg)] += 1
    return {tag: largest_remainder_percentages(c) for tag, c in counts.items()}


class LexemeBin(NamedTuple):
    label: str
    best_rank: int | None


def lexeme_frequency_bin(
    src_lemma: str, src_paradigms: ParadigmCollection, x: EmbeddingMatrix, cfg: EvalConfig = EvalConfig()
) -> LexemeBin:
    """Bin a lexeme by the rank of its most frequent in-vocabulary inflection.

    ``best_rank`` is None (and the label ``excluded``) when no inflection is
    in the vocabulary; ranks between the two cutoffs are also excluded.
    """
    paradigm = src_paradigms.get(src_lemma)
    if paradigm is None:
        raise KeyError(f"no paradigm for lemma {src_lemma!r}")
    ranks = [
        i for i in (x.get(f) for f in paradigm.forms()) if i is not None and not x.oov[i]
    ]
    if not ranks:
        return LexemeBin(EXCLUDED, None)
    best = min(ranks)
    if best < cfg.lexeme_frequent_cutoff:
        return LexemeBin(FREQUENT, best)
    if best >= cfg.lexeme_infrequent_floor:
        return LexemeBin(INFREQUENT, best)
    return LexemeBin(EXCLUDED, best)


# --- reports ----------------------------------------------------------------


@dataclass
class VariantReport:
    accuracy: float = 0.0
    count: int = 0
    per_bin: dict[str, tuple[float, int]] = field(default_factory=dict)
    per_tag: dict[str, tuple[float, int]] = field(default_factory=dict)
    lexeme_bins: dict[str, tuple[float, int]] = field(default_factory=dict)
    predictions: dict[str, str | None] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "count": self.count,
            "per_bin": {k: list(v) for k, v in self.per_bin.items()},
            "per_tag": {k: list(v) for k, v in self.per_tag.items()},
            "lexeme_bins": {k: list(v) for k, v in self.lexeme_bins.items()},
            "predictions": self.predictions,
        }


@dataclass
class EvalReport:
    mode: str
    in_vocab: VariantReport
    all: VariantReport
    tag_distribution: dict[str, dict[str, int]]
    labels: list[str]
    unresolved: int = 0
    skipped: int = 0

    @property
    def overall_p_at_1(self) -> float:
        return self.all.accuracy

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "overall_p_at_1": self.overall_p_at_1,
            "in_vocab": self.in_vocab.to_dict(),
            "all": self.all.to_dict(),
            "tag_distribution": self.tag_distribution,
            "labels": self.labels,
            "unresolved": self.unresolved,
            "skipped": self.skipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_tsv(self) -> str:
        """Tag, in-vocab and all accuracy (percent), then bin percentages."""
        lines = ["\t".join(["Tag", "In vocab", "All"] + self.labels)]
        tags = sorted(self.all.per_tag, key=lambda t: (-self.all.per_tag[t][1], t))
        for tag in tags:
            iv = self.in_vocab.per_tag.get(tag, (0.0, 0))
            dist = self.tag_distribution.get(tag, {})
            lines.append("\t".join(
                [tag, f"{100 * iv[0]:.1f}", f"{100 * self.all.per_tag[tag][0]:.1f}"]
                + [f"{dist.get(label, 0)}%" for label in self.labels]
            ))
        lines.append("\t".join(
            ["ALL", f"{100 * self.in_vocab.accuracy:.1f}", f"{100 * self.all.accuracy:.1f}"]
            + [str(self.all.per_bin.get(label, (0.0, 0))[1]) for label in self.labels]
        ))
        return "\n".join(lines) + "\n"


class _Item(NamedTuple):
    src: str
    row: int
    targets: frozenset[str]
    tags: tuple[str, ...]
    lemma: str
    candidates: np.ndarray | None


def _score_argmax(xs, zs, items, column_mask, threads):
    """Predicted target row per item (-1 when no candidate survives)."""

    def run(block):
        lo, hi = block
        rows = np.array([it.row for it in items[lo:hi]], dtype=np.intp)
        scores = xs[rows] @ zs.T
        if column_mask is not None:
            scores[:, ~column_mask] = -np.inf
        out = []
        for r, it in enumerate(items[lo:hi]):
            cands = it.candidates
            if cands is None:
                j = int(np.argmax(scores[r])) if column_mask is None or column_mask.any() else -1
            elif len(cands):
                j = int(cands[np.argmax(scores[r, cands])])
            else:
                j = -1
            if j >= 0 and not np.isfinite(scores[r, j]):
                j = -1
            out.append(j)
        return out

    blocks = row_blocks(len(items), zs.shape[0])
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return [j for part in parts for j in part]


def _summarize(items, predictions, x, cfg, lexeme_bin_of):
    rep = VariantReport(predictions=predictions)
    correct = {it.src: predictions[it.src] in it.targets for it in items}
    rep.count = len(items)
    rep.accuracy = sum(correct.values()) / len(items) if items else 0.0

    def acc(groups):
        return {
            k: (sum(v) / len(v) if v else 0.0, len(v)) for k, v in groups.items()
        }

    bins: dict[str, list[bool]] = {label: [] for label in cfg.labels}
    tags: dict[str, list[bool]] = defaultdict(list)
    lex: dict[str, list[bool]] = {FREQUENT: [], INFREQUENT: []}
    for it in items:
        ok = correct[it.src]
        bins[frequency_bin(it.row, bool(x.oov[it.row]), cfg)].append(ok)
        for t in it.tags:
            tags[t].append(ok)
        if lexeme_bin_of is not None:
            label = lexeme_bin_of(it.lemma)
            if label in lex:
                lex[label].append(ok)
    rep.per_bin = acc(bins)
    rep.per_tag = dict(sorted(acc(tags).items()))
    rep.lexeme_bins = acc(lex) if lexeme_bin_of is not None else {}
    return rep


def _evaluate(x, z, w, gold, cfg, mode, tgt_paradigms, src_paradigms, threads):
    gold = list(gold)
    targets: dict[str, set[str]] = {}
    tags: dict[str, dict[str, None]] = {}
    lemma: dict[str, str] = {}
    tgt_lemmas: dict[str, dict[str, None]] = {}
    for e in gold:
        targets.setdefault(e.src_form, set()).add(e.tgt_form)
        tags.setdefault(e.src_form, {})[str(e.tag)] = None
        lemma.setdefault(e.src_form, e.src_lemma)
        tgt_lemmas.setdefault(e.src_form, {})[e.tgt_lemma] = None

    skipped = 0
    candidates: dict[str, list[int]] = {}
    if mode == LEXEME:
        for e in gold:
            if e.tgt_lemma not in tgt_paradigms:
                skipped += 1
        for src, lemmas in tgt_lemmas.items():
            pars = [tgt_paradigms[l] for l in lemmas if l in tgt_paradigms]
            if not pars:
                continue
            rows = {z.get(f) for p in pars for f in p.forms()}
            rows.discard(None)
            candidates[src] = sorted(rows)

    unresolved = 0
    items_all: list[_Item] = []
    for src in targets:
        i = x.get(src)
        if i is None:
            unresolved += 1
            continue
        if mode == LEXEME and src not in candidates:
            continue
        cands = np.array(candidates[src], dtype=np.intp) if mode == LEXEME else None
        items_all.append(_Item(src, i, frozenset(targets[src]), tuple(tags[src]), lemma[src], cands))
    items_in = [it for it in items_all if not x.oov[it.row]]
    if mode == LEXEME:
        z_in = ~z.oov
        items_in = [it._replace(candidates=it.candidates[z_in[it.candidates]]) for it in items_in]

    xs = unit_rows(x.vectors @ w.w)
    zs = unit_rows(z.vectors)

    lexeme_bin_of = None
    if src_paradigms is not None:
        cache: dict[str, str] = {}

        def lexeme_bin_of(lem):
            if lem not in cache:
                cache[lem] = (
                    lexeme_frequency_bin(lem, src_paradigms, x, cfg).label
                    if lem in src_paradigms else EXCLUDED
                )
            return cache[lem]

    variants = {}
    for name, items, mask in (
        ("in_vocab", items_in, ~z.oov if z.oov.any() else None),
        ("all", items_all, None),
    ):
        picks = _score_argmax(xs, zs, items, mask, threads)
        preds = {it.src: (z.words[j] if j >= 0 else None) for it, j in zip(items, picks)}
        variants[name] = _summarize(items, preds, x, cfg, lexeme_bin_of)

    dist = {str(t): d for t, d in sorted(tag_bin_distribution(gold, x, cfg).items())}
    return EvalReport(
        mode, variants["in_vocab"], variants["all"], dist, cfg.labels,
        unresolved=unresolved, skipped=skipped,
    )


def evaluate_standard(
    x: EmbeddingMatrix,
    z: EmbeddingMatrix,
    w: MappingMatrix,
    gold: Sequence[DictEntry],
    cfg: EvalConfig = EvalConfig(),
    src_paradigms: ParadigmCollection | None = None,
    threads: int = 1,
) -> EvalReport:
    """Nearest target over the whole target matrix for every gold source.

    ``x`` and ``z`` must already be preprocessed the way the mapping was
    trained. Gold sources missing from ``x`` are counted as unresolved.
    """
    return _evaluate(x, z, w, gold, cfg, STANDARD, None, src_paradigms, threads)


def evaluate_lexeme_controlled(
    x: EmbeddingMatrix,
    z: EmbeddingMatrix,
    w: MappingMatrix,
    gold: Sequence[DictEntry],
    tgt_paradigms: ParadigmCollection,
    cfg: EvalConfig = EvalConfig(),
    src_paradigms: ParadigmCollection | None = None,
    threads: int = 1,
) -> EvalReport:
    """Choose among the forms of the gold target lemma's paradigm only.

    Sources with several gold target lemmata choose from the union of their
    paradigms. Entries whose target lemma has no paradigm are skipped.
    """
    return _evaluate(x, z, w, gold, cfg, LEXEME, tgt_paradigms, src_paradigms, threads)
