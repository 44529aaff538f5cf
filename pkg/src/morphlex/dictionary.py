"""Morphologically complete bilingual dictionaries.

Lemma pairs come from shared synsets; each pair is expanded into one entry
per compatible paradigm slot. Dictionaries are split so that train, dev and
test own disjoint sets of source lemmata.
"""
from __future__ import annotations

import json
import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .morphology import (
    EXACT,
    NO_RULES,
    SUBSET,
    MorphTag,
    ParadigmCollection,
    TagNormalizationRules,
    parse_tag,
    pos_of,
    tags_compatible,
)

logger = logging.getLogger(__name__)

SPLIT_RATIOS = (0.6, 0.2, 0.2)


class DictionaryError(ValueError):
    pass


class DictEntry(NamedTuple):
    src_form: str
    tgt_form: str
    src_lemma: str
    tgt_lemma: str
    tag: MorphTag

    def to_line(self) -> str:
        return "\t".join((self.src_form, self.tgt_form, self.src_lemma, self.tgt_lemma, str(self.tag)))


SynsetTable = dict  # synset id -> list of lemmata, in file order


def load_synsets(path: str | os.PathLike) -> SynsetTable:
    table: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 2 or not cols[0].strip() or not cols[1].strip():
                raise DictionaryError(f"{path}:{lineno}: expected 'synset_id<TAB>lemma'")
            lemmas = table.setdefault(cols[0].strip(), [])
            if cols[1].strip() not in lemmas:
                lemmas.append(cols[1].strip())
    return table


def build_lemma_pairs(src: SynsetTable, tgt: SynsetTable) -> list[tuple[str, str]]:
    """All source x target lemma pairs of every synset both tables list."""
    pairs: dict[tuple[str, str], None] = {}
    for sid in sorted(src.keys() & tgt.keys()):
        for a in src[sid]:
            for b in tgt[sid]:
                pairs.setdefault((a, b))
    if not pairs:
        logger.warning("no shared synsets between the two tables")
    return list(pairs)


@dataclass
class InflectionStats:
    missing_src: int = 0
    missing_tgt: int = 0
    duplicates: int = 0


def inflect_pairs(
    pairs: Iterable[tuple[str, str]],
    src_par: ParadigmCollection,
    tgt_par: ParadigmCollection,
    rules: TagNormalizationRules = NO_RULES,
    mode: str = EXACT,
    shared_features: frozenset[str] | None = None,
    stats: InflectionStats | None = None,
) -> list[DictEntry]:
    """Expand lemma pairs into one entry per compatible slot pair.

    Pairs with a lemma absent from either paradigm collection are dropped.
    In ``feature_subset`` mode the stored tag is the features both slots
    share. Repeated (source form, target form, tag) triples keep the first.
    """
    stats = stats if stats is not None else InflectionStats()
    entries: list[DictEntry] = []
    seen: set[tuple[str, str, MorphTag]] = set()
    for src_lemma, tgt_lemma in pairs:
        sp, tp = src_par.get(src_lemma), tgt_par.get(tgt_lemma)
        if sp is None or tp is None:
            stats.missing_src += sp is None
            stats.missing_tgt += tp is None
            continue
        if mode == EXACT:
            slot_pairs = [(t, sp.slots[t], tp.slots[t], t) for t in sorted(sp.slots) if t in tp.slots]
        elif mode == SUBSET:
            slot_pairs = []
            for a in sorted(sp.slots):
                for b in sorted(tp.slots):
                    if tags_compatible(a, b, SUBSET, rules, shared_features):
                        common = a.features & b.features
                        if common:
                            slot_pairs.append((a, sp.slots[a], tp.slots[b], MorphTag(common)))
        else:
            raise ValueError(f"unknown mode {mode!r}")
        for _, sf, tf, tag in slot_pairs:
            key = (sf, tf, tag)
            if key in seen:
                stats.duplicates += 1
                continue
            seen.add(key)
            entries.append(DictEntry(sf, tf, src_lemma, tgt_lemma, tag))
    return entries


@dataclass
class DictionarySplit:
    train: list[DictEntry]
    dev: list[DictEntry]
    test: list[DictEntry]
    split_seed: int
    lemmas: dict[str, list[str]] = field(default_factory=dict)
    ratios: tuple[float, float, float] = SPLIT_RATIOS

    def manifest(self) -> dict:
        return {
            "split_seed": self.split_seed,
            "ratios": list(self.ratios),
            "lemmas": {k: len(v) for k, v in self.lemmas.items()},
            "entries": {"train": len(self.train), "dev": len(self.dev), "test": len(self.test)},
        }


def split_sizes(n: int) -> tuple[int, int, int]:
    n_train = math.floor(n * SPLIT_RATIOS[0])
    rest = n - n_train
    n_dev = rest // 2
    return n_train, n_dev, rest - n_dev


def split_dictionary(entries: Sequence[DictEntry], split_seed: int) -> DictionarySplit:
    """Lemma-disjoint 60/20/20 split driven by a seeded shuffle."""
    if not entries:
        raise DictionaryError("cannot split an empty dictionary")
    lemmas = sorted({e.src_lemma for e in entries})
    if len(lemmas) < 3:
        raise DictionaryError(f"need at least 3 distinct source lemmata, got {len(lemmas)}")
    rng = np.random.default_rng(split_seed)
    order = [lemmas[i] for i in rng.permutation(len(lemmas))]
    n_train, n_dev, _ = split_sizes(len(order))
    parts = {
        "train": order[:n_train],
        "dev": order[n_train:n_train + n_dev],
        "test": order[n_train + n_dev:],
    }
    owner = {lem: name for name, lems in parts.items() for lem in lems}
    buckets: dict[str, list[DictEntry]] = {"train": [], "dev": [], "test": []}
    for e in entries:
        buckets[owner[e.src_lemma]].append(e)
    return DictionarySplit(
        buckets["train"], buckets["dev"], buckets["test"], split_seed,
        lemmas={k: sorted(v) for k, v in parts.items()},
    )


class LeakageReport(NamedTuple):
    leaked: int
    total: int
    fraction: float


def leakage_report(train: Iterable[DictEntry], test: Iterable[DictEntry]) -> LeakageReport:
    """Distinct test source forms whose source lemma also occurs in train."""
    train_lemmas = {e.src_lemma for e in train}
    forms: dict[str, bool] = {}
    for e in test:
        forms[e.src_form] = forms.get(e.src_form, False) or e.src_lemma in train_lemmas
    leaked = sum(forms.values())
    total = len(forms)
    return LeakageReport(leaked, total, leaked / total if total else 0.0)


def paradigm_coverage(
    entries: Iterable[DictEntry],
    src_par: ParadigmCollection,
    pos: Callable[[MorphTag], str] = pos_of,
) -> dict[str, float]:
    """Mean fraction of each source lemma's paradigm slots present, per POS.

    A slot counts as present when some entry of the lemma has its form and
    a tag contained in the slot tag (entries built in subset mode carry
    reduced tags).
    """
    by_lemma: dict[str, list[DictEntry]] = defaultdict(list)
    for e in entries:
        by_lemma[e.src_lemma].append(e)
    per_pos: dict[str, list[float]] = defaultdict(list)
    for lemma, es in by_lemma.items():
        p = src_par.get(lemma)
        if p is None or not p.slots:
            continue
        covered = sum(
            any(e.src_form == form and e.tag.features <= tag.features for e in es)
            for tag, form in p.slots.items()
        )
        kind = pos(min(p.slots))
        per_pos[kind].append(covered / len(p.slots))
    return {k: sum(v) / len(v) for k, v in sorted(per_pos.items())}


# --- file formats -----------------------------------------------------------


def write_dictionary(entries: Iterable[DictEntry], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for e in entries:
            f.write(e.to_line() + "\n")


def read_dictionary(
    path: str | os.PathLike, rules: TagNormalizationRules = NO_RULES
) -> list[DictEntry]:
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 5 or not all(c.strip() for c in cols):
                raise DictionaryError(f"{path}:{lineno}: expected five tab-separated columns")
            entries.append(DictEntry(*cols[:4], parse_tag(cols[4], rules)))
    return entries


def write_split(split: DictionarySplit, out_dir: str | os.PathLike, prefix: str = "") -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name in ("train", "dev", "test"):
        path = os.path.join(out_dir, f"{prefix}{name}.tsv")
        write_dictionary(getattr(split, name), path)
        paths[name] = path
    manifest = os.path.join(out_dir, f"{prefix}split.json")
    with open(manifest, "w", encoding="utf-8", newline="\n") as f:
        json.dump(split.manifest(), f, indent=2, sort_keys=True)
        f.write("\n")
    paths["manifest"] = manifest
    return paths
