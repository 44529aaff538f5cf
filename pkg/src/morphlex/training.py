"""Iterative mapping trainers: Procrustes, self-learning and latent-variable
matching, each optionally restricted to morphologically compatible pairs.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .assignment import solve_assignment, sparsify_similarities
from .embeddings import EmbeddingMatrix, preprocess, truncate_vocab
from .mapping import (
    CandidateFilter,
    MappingMatrix,
    SeedLexicon,
    induce_dictionary,
    mean_cosine,
    procrustes,
)
from .morphology import (
    EXACT,
    NO_RULES,
    SUBSET,
    MorphTag,
    TagNormalizationRules,
    forms_compatible,
)

logger = logging.getLogger(__name__)

CONSTRAINT_MODES = ("off", EXACT, SUBSET)


class TrainingError(RuntimeError):
    pass


class EmptyDictionaryError(TrainingError):
    def __init__(self, message: str, rejections: int):
        super().__init__(f"{message} ({rejections} candidate pairs rejected by the constraint)")
        self.rejections = rejections


@dataclass(frozen=True)
class TrainConfig:
    max_iterations: int = 50
    convergence_tolerance: float = 1e-6
    candidate_k: int = 15
    rank_limit: int = 40_000
    vocab_cutoff: int = 200_000
    constraint_mode: str = "off"
    preprocessing: str = "unit-center-unit"
    random_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.convergence_tolerance > 0:
            raise ValueError("convergence_tolerance must be positive")
        if self.candidate_k < 1 or self.rank_limit < 1 or self.vocab_cutoff < 1:
            raise ValueError("candidate_k, rank_limit and vocab_cutoff must be positive")
        if self.constraint_mode not in CONSTRAINT_MODES:
            raise ValueError(f"constraint_mode must be one of {CONSTRAINT_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    model: str
    iterations_run: int = 0
    mean_cosines: list[float] = field(default_factory=list)
    final_dictionary_size: int = 0
    constraint_rejections: int = 0
    converged: bool = False
    # per iteration: the dictionary the mapping was fit on, and the pairs
    # it induced; mean_cosines[t] scores the next dictionary under map t
    dictionaries: list[list[tuple[int, int]]] = field(default_factory=list)
    induced: list[list[tuple[int, int]]] = field(default_factory=list)

    def to_dict(self, include_pairs: bool = False) -> dict:
        out = {
            "model": self.model,
            "iterations_run": self.iterations_run,
            "mean_cosines": self.mean_cosines,
            "final_dictionary_size": self.final_dictionary_size,
            "constraint_rejections": self.constraint_rejections,
            "converged": self.converged,
            "dictionary_sizes": [len(d) for d in self.dictionaries],
        }
        if include_pairs:
            out["dictionaries"] = [[list(p) for p in d] for d in self.dictionaries]
            out["induced"] = [[list(p) for p in d] for d in self.induced]
        return out

    def to_json(self, include_pairs: bool = False) -> str:
        return json.dumps(self.to_dict(include_pairs), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class MorphConstraint:
    """Form-to-tag lookups for both languages plus the compatibility mode."""

    src_tags: Mapping[str, frozenset[MorphTag]]
    tgt_tags: Mapping[str, frozenset[MorphTag]]
    mode: str = EXACT
    rules: TagNormalizationRules = NO_RULES
    shared_features: frozenset[str] | None = None

    def admits(self, src_form: str, tgt_form: str) -> bool:
        return forms_compatible(
            self.src_tags.get(src_form, ()), self.tgt_tags.get(tgt_form, ()),
            self.mode, self.rules, self.shared_features,
        )

    def candidate_filter(self, x: EmbeddingMatrix, z: EmbeddingMatrix) -> CandidateFilter:
        """Index-level filter; sources with equal tag sets share one array."""
        groups: dict[frozenset[MorphTag], list[int]] = {}
        for j, form in enumerate(z.words):
            tags = self.tgt_tags.get(form)
            if tags:
                groups.setdefault(frozenset(tags), []).append(j)
        group_arrays = {k: np.array(v, dtype=np.intp) for k, v in groups.items()}
        empty = np.zeros(0, dtype=np.intp)
        cache: dict[frozenset[MorphTag], np.ndarray] = {}

        def admissible(i: int) -> np.ndarray:
            tags = self.src_tags.get(x.words[i])
            if not tags:
                return empty
            key = frozenset(tags)
            hit = cache.get(key)
            if hit is None:
                parts = [
                    arr for tgt_key, arr in group_arrays.items()
                    if forms_compatible(key, tgt_key, self.mode, self.rules, self.shared_features)
                ]
                hit = np.unique(np.concatenate(parts)) if parts else empty
                cache[key] = hit
            return hit

        return admissible


def _relative_improvement(prev: float, cur: float) -> float:
    return (cur - prev) / max(abs(prev), 1e-12)


def _prepare(x, z, cfg):
    x, z = preprocess(x, cfg.preprocessing), preprocess(z, cfg.preprocessing)
    if x.dim != z.dim:
        raise ValueError(f"dimensionality mismatch: {x.dim} vs {z.dim}")
    return x, z


def _check_constraint(cfg: TrainConfig, constraint: MorphConstraint | None) -> None:
    if cfg.constraint_mode != "off" and constraint is None:
        raise ValueError("constraint_mode requires tag lookups")


def train_procrustes(
    x: EmbeddingMatrix, z: EmbeddingMatrix, seed: SeedLexicon, cfg: TrainConfig = TrainConfig()
) -> tuple[MappingMatrix, TrainReport]:
    x, z = _prepare(x, z, cfg)
    w = procrustes(x, z, seed)
    report = TrainReport(
        "procrustes",
        iterations_run=1,
        mean_cosines=[mean_cosine(x, z, w, seed)],
        final_dictionary_size=len(seed),
        converged=True,
        dictionaries=[list(seed)],
        induced=[[]],
    )
    return w, report


def train_self_learning(
    x: EmbeddingMatrix,
    z: EmbeddingMatrix,
    seed: SeedLexicon,
    cfg: TrainConfig = TrainConfig(),
    constraint: MorphConstraint | None = None,
) -> tuple[MappingMatrix, TrainReport]:
    """Alternate Procrustes on the current dictionary with nearest-neighbor
    re-induction over the frequency-truncated vocabularies.

    The induced dictionary replaces the previous one each iteration.
    """
    if not seed:
        raise ValueError("empty seed lexicon")
    _check_constraint(cfg, constraint)
    x, z = _prepare(x, z, cfg)
    xt, zt = truncate_vocab(x, cfg.vocab_cutoff), truncate_vocab(z, cfg.vocab_cutoff)
    filt = constraint.candidate_filter(xt, zt) if cfg.constraint_mode != "off" else None

    report = TrainReport("self-learning")
    dictionary = SeedLexicon(seed)
    while True:
        w = procrustes(x, z, dictionary)
        report.iterations_run += 1
        report.dictionaries.append(list(dictionary))

        result = induce_dictionary(xt, zt, w, filt, threads=cfg.threads)
        report.constraint_rejections += result.rejected
        report.induced.append(list(result.pairs))
        if not result.pairs:
            raise EmptyDictionaryError(
                f"iteration {report.iterations_run} induced an empty dictionary",
                report.constraint_rejections,
            )
        dictionary = result.pairs
        report.mean_cosines.append(mean_cosine(x, z, w, dictionary))
        report.final_dictionary_size = len(dictionary)
        logger.info("self-learning iteration %d: mean cosine %.6f, %d pairs",
                    report.iterations_run, report.mean_cosines[-1], len(dictionary))

        if len(report.mean_cosines) > 1 and _relative_improvement(
            report.mean_cosines[-2], report.mean_cosines[-1]
        ) < cfg.convergence_tolerance:
            report.converged = True
            break
        if report.iterations_run >= cfg.max_iterations:
            break
    return w, report


def train_latent_variable(
    x: EmbeddingMatrix,
    z: EmbeddingMatrix,
    seed: SeedLexicon,
    cfg: TrainConfig = TrainConfig(),
    constraint: MorphConstraint | None = None,
) -> tuple[MappingMatrix, TrainReport]:
    """Alternate a matching E-step with a Procrustes M-step.

    The E-step builds the top-``candidate_k`` cosine graph over the
    ``rank_limit`` most frequent words (after the constraint drops
    incompatible targets) and solves the assignment; the matching augments
    the fixed seed for the next M-step.
    """
    if not seed:
        raise ValueError("empty seed lexicon")
    _check_constraint(cfg, constraint)
    x, z = _prepare(x, z, cfg)
    limit = min(cfg.rank_limit, cfg.vocab_cutoff)
    xt, zt = truncate_vocab(x, limit), truncate_vocab(z, limit)
    filt = constraint.candidate_filter(xt, zt) if cfg.constraint_mode != "off" else None

    report = TrainReport("latent")
    seed = SeedLexicon(seed)
    seed_set = set(seed)
    dictionary = SeedLexicon(seed)
    while True:
        w = procrustes(x, z, dictionary)
        report.iterations_run += 1
        report.dictionaries.append(list(dictionary))

        graph = sparsify_similarities(w.apply(xt), zt, cfg.candidate_k, limit, filt)
        if filt is not None:
            unfiltered = sparsify_similarities(w.apply(xt), zt, cfg.candidate_k, limit)
            kept = {(i, j) for i, j, _ in graph.edges}
            report.constraint_rejections += sum((i, j) not in kept for i, j, _ in unfiltered.edges)
        if not graph.edges:
            if filt is not None:
                raise EmptyDictionaryError(
                    f"iteration {report.iterations_run}: E-step has no admissible edges",
                    report.constraint_rejections,
                )
            raise TrainingError(f"iteration {report.iterations_run}: E-step produced no edges")
        matching = solve_assignment(graph)
        report.induced.append(matching)
        dictionary = SeedLexicon(seed + [p for p in matching if p not in seed_set])
        report.mean_cosines.append(mean_cosine(x, z, w, dictionary))
        report.final_dictionary_size = len(dictionary)
        logger.info("latent iteration %d: mean cosine %.6f, %d matched",
                    report.iterations_run, report.mean_cosines[-1], len(matching))

        if len(report.mean_cosines) > 1 and _relative_improvement(
            report.mean_cosines[-2], report.mean_cosines[-1]
        ) < cfg.convergence_tolerance:
            report.converged = True
            break
        if report.iterations_run >= cfg.max_iterations:
            break
    return w, report


TRAINERS = {
    "procrustes": train_procrustes,
    "self-learning": train_self_learning,
    "latent": train_latent_variable,
}
