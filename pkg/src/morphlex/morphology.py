"""Morphosyntactic tags, paradigms and tag compatibility."""
from __future__ import annotations

import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)

EXACT = "exact_tag"
SUBSET = "feature_subset"
MODES = (EXACT, SUBSET)

POS_FEATURES = frozenset(
    {"N", "V", "ADJ", "ADV", "PRO", "DET", "NUM", "ADP", "CONJ", "PROPN", "V.PTCP", "V.CVB", "V.MSDR"}
)


class TagError(ValueError):
    pass


@dataclass(frozen=True)
class MorphTag:
    """Canonical, order-independent set of uppercase feature strings."""

    features: frozenset[str]

    def __post_init__(self):
        feats = frozenset(f.strip().upper() for f in self.features)
        if not feats or "" in feats:
            raise TagError("a tag needs at least one non-empty feature")
        object.__setattr__(self, "features", feats)

    @classmethod
    def of(cls, *features: str) -> "MorphTag":
        return cls(frozenset(features))

    def __str__(self) -> str:
        return ";".join(sorted(self.features))

    def __repr__(self) -> str:
        return f"MorphTag({str(self)!r})"

    def __contains__(self, feature: str) -> bool:
        return feature in self.features

    def __lt__(self, other: "MorphTag") -> bool:
        return str(self) < str(other)


@dataclass(frozen=True)
class TagNormalizationRules:
    drop_features: frozenset[str] = frozenset()
    rename: Mapping[str, str] = field(default_factory=dict)
    aspect_features: frozenset[str] = frozenset({"PFV", "IPFV"})

    def __post_init__(self):
        up = lambda s: s.strip().upper()
        rename = {up(k): up(v) for k, v in dict(self.rename).items()}
        for src, dst in rename.items():
            if dst in rename and rename[dst] != dst:
                raise TagError(f"rename chain {src} -> {dst} -> {rename[dst]} is not allowed")
        object.__setattr__(self, "rename", rename)
        object.__setattr__(self, "drop_features", frozenset(map(up, self.drop_features)))
        object.__setattr__(self, "aspect_features", frozenset(map(up, self.aspect_features)))

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "TagNormalizationRules":
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        unknown = set(raw) - {"drop_features", "rename", "aspect_features"}
        if unknown:
            raise TagError(f"{path}: unknown keys {sorted(unknown)}")
        kwargs = {}
        if "drop_features" in raw:
            kwargs["drop_features"] = frozenset(raw["drop_features"])
        if "rename" in raw:
            rename = raw["rename"]
            # either {"OLD": "NEW"} or [["OLD", "NEW"], ...]
            kwargs["rename"] = dict(rename) if isinstance(rename, dict) else {a: b for a, b in rename}
        if "aspect_features" in raw:
            kwargs["aspect_features"] = frozenset(raw["aspect_features"])
        return cls(**kwargs)


NO_RULES = TagNormalizationRules()


def parse_tag(raw: str, rules: TagNormalizationRules = NO_RULES) -> MorphTag:
    """Parse ``"N;NOM;PL"``: case-fold, rename, then drop features."""
    if not raw or not raw.strip():
        raise TagError("empty tag")
    feats = {f.strip().upper() for f in raw.split(";") if f.strip()}
    feats = {rules.rename.get(f, f) for f in feats}
    feats -= rules.drop_features
    if not feats:
        raise TagError(f"tag {raw!r} is empty after normalization")
    return MorphTag(frozenset(feats))


def tags_compatible(
    a: MorphTag,
    b: MorphTag,
    mode: str = EXACT,
    rules: TagNormalizationRules = NO_RULES,
    shared_features: frozenset[str] | None = None,
) -> bool:
    """Whether two slots may translate each other.

    ``exact_tag`` requires equal feature sets. ``feature_subset`` compares
    only the features in ``shared_features`` (those both languages mark),
    and additionally requires aspect features to agree when both tags
    carry one.
    """
    if mode == EXACT:
        return a.features == b.features
    if mode != SUBSET:
        raise ValueError(f"unknown compatibility mode {mode!r}")
    if shared_features is None:
        raise ValueError("feature_subset mode needs the shared feature inventory")
    if a.features & shared_features != b.features & shared_features:
        return False
    asp_a = a.features & rules.aspect_features
    asp_b = b.features & rules.aspect_features
    return not (asp_a and asp_b) or asp_a == asp_b


def shared_feature_inventory(*collections: "ParadigmCollection") -> frozenset[str]:
    """Features used by every given paradigm collection."""
    sets = [c.features() for c in collections]
    return frozenset.intersection(*sets) if sets else frozenset()


@dataclass
class Paradigm:
    lemma: str
    slots: dict[MorphTag, str] = field(default_factory=dict)

    def forms(self) -> list[str]:
        """Distinct surface forms in slot order."""
        return list(dict.fromkeys(self.slots.values()))

    def __len__(self) -> int:
        return len(self.slots)


class ParadigmCollection(dict):
    """Mapping lemma -> Paradigm with a reverse form index."""

    def __init__(self, paradigms: Iterable[Paradigm] = ()):
        super().__init__()
        for p in paradigms:
            self[p.lemma] = p
        self._index: dict[str, set[MorphTag]] | None = None

    def __setitem__(self, key, value):
        super().__setitem__(key, value)
        self._index = None

    def _form_index(self) -> dict[str, set[MorphTag]]:
        if self._index is None:
            index: dict[str, set[MorphTag]] = defaultdict(set)
            for p in self.values():
                for tag, form in p.slots.items():
                    index[form].add(tag)
            self._index = dict(index)
        return self._index

    def tags_of(self, form: str) -> frozenset[MorphTag]:
        return frozenset(self._form_index().get(form, ()))

    def form_tags(self) -> dict[str, frozenset[MorphTag]]:
        return {f: frozenset(t) for f, t in self._form_index().items()}

    def features(self) -> frozenset[str]:
        out: set[str] = set()
        for p in self.values():
            for tag in p.slots:
                out |= tag.features
        return frozenset(out)


def tag_of(form: str, paradigms: ParadigmCollection) -> frozenset[MorphTag]:
    """Every tag any paradigm assigns to ``form``; empty when untagged."""
    return paradigms.tags_of(form)


def load_paradigms(
    path: str | os.PathLike, rules: TagNormalizationRules = NO_RULES
) -> ParadigmCollection:
    """Read UniMorph-style ``lemma<TAB>form<TAB>tag`` lines.

    A repeated (lemma, tag) keeps its first form.
    """
    paradigms = ParadigmCollection()
    variants = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise TagError(f"{path}:{lineno}: expected 'lemma<TAB>form<TAB>tag'")
            lemma, form, raw = (c.strip() for c in cols)
            try:
                tag = parse_tag(raw, rules)
            except TagError as err:
                raise TagError(f"{path}:{lineno}: {err}") from None
            p = paradigms.get(lemma)
            if p is None:
                p = Paradigm(lemma)
                paradigms[lemma] = p
            if tag in p.slots:
                variants += p.slots[tag] != form
                continue
            p.slots[tag] = form
    if variants:
        logger.info("%s: %d variant forms for an already filled slot ignored", path, variants)
    paradigms._index = None
    return paradigms


def pos_of(tag: MorphTag) -> str:
    """Part of speech named in a tag, or ``"OTHER"``."""
    found = sorted(tag.features & POS_FEATURES)
    return found[0] if found else "OTHER"


def forms_compatible(
    src_tags: Iterable[MorphTag],
    tgt_tags: Iterable[MorphTag],
    mode: str = EXACT,
    rules: TagNormalizationRules = NO_RULES,
    shared_features: frozenset[str] | None = None,
) -> bool:
    """Existential compatibility over ambiguous forms; untagged forms never match."""
    tgt_tags = list(tgt_tags)
    return any(
        tags_compatible(a, b, mode, rules, shared_features) for a in src_tags for b in tgt_tags
    )
