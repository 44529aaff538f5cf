"""Command-line front end: ``morphlex build-dict | train | evaluate | oov-extend``.

Exit statuses: 0 success, 1 input error, 2 empty result, 3 numeric failure,
64 usage error. Diagnostics go to stderr; stdout only carries reports.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .dictionary import (
    DictionaryError,
    InflectionStats,
    build_lemma_pairs,
    inflect_pairs,
    leakage_report,
    load_synsets,
    paradigm_coverage,
    read_dictionary,
    split_dictionary,
    write_dictionary,
    write_split,
)
from .embeddings import (
    EmbeddingFormatError,
    EmbeddingMatrix,
    extend_with_oov,
    load_embeddings_file,
    load_ngram_table,
    preprocess,
    save_embeddings_file,
    PIPELINES,
)
from .evaluation import EvalConfig, evaluate_lexeme_controlled, evaluate_standard
from .mapping import MappingError, MappingMatrix, load_seed_lexicon
from .morphology import (
    EXACT,
    NO_RULES,
    SUBSET,
    TagError,
    TagNormalizationRules,
    load_paradigms,
    shared_feature_inventory,
)
from .training import (
    EmptyDictionaryError,
    MorphConstraint,
    TrainConfig,
    TrainingError,
    train_latent_variable,
    train_procrustes,
    train_self_learning,
)

logger = logging.getLogger("morphlex")

EXIT_OK, EXIT_INPUT, EXIT_EMPTY, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 3, 64
CONSTRAINTS = {"off": "off", "exact": EXACT, "subset": SUBSET}
ITERATION_FLAGS = ("max_iterations", "tolerance", "candidate_k", "rank_limit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    version: str = __version__
    duration_seconds: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_json())


def _digests(paths: dict[str, str | None]) -> dict[str, str]:
    return {k: file_digest(p) for k, p in sorted(paths.items()) if p}


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("MORPHLEX_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise UsageError(f"MORPHLEX_THREADS must be an integer, got {env!r}") from None


def _rules(path: str | None) -> TagNormalizationRules:
    return TagNormalizationRules.from_json(path) if path else NO_RULES


def _features(arg: str | None, *collections) -> frozenset[str]:
    if arg:
        return frozenset(f.strip().upper() for f in arg.split(",") if f.strip())
    shared = shared_feature_inventory(*collections)
    logger.warning("no --shared-features given; using the features both paradigm files mark: %s",
                   ",".join(sorted(shared)))
    return shared


# --- build-dict -------------------------------------------------------------


def cmd_build_dict(args) -> int:
    start = time.perf_counter()
    rules = _rules(args.rules)
    src_syn, tgt_syn = load_synsets(args.src_synsets), load_synsets(args.tgt_synsets)
    src_par = load_paradigms(args.src_paradigms, rules)
    tgt_par = load_paradigms(args.tgt_paradigms, rules)
    mode = CONSTRAINTS[args.mode]
    shared = _features(args.shared_features, src_par, tgt_par) if mode == SUBSET else None

    pairs = build_lemma_pairs(src_syn, tgt_syn)
    stats = InflectionStats()
    entries = inflect_pairs(pairs, src_par, tgt_par, rules, mode, shared, stats)
    if not entries:
        logger.error("the dictionary is empty (%d lemma pairs, %d/%d lemmata without paradigms)",
                     len(pairs), stats.missing_src, stats.missing_tgt)
        return EXIT_EMPTY

    os.makedirs(args.out_dir, exist_ok=True)
    full = os.path.join(args.out_dir, "dictionary.tsv")
    write_dictionary(entries, full)
    split = split_dictionary(entries, args.split_seed)
    paths = write_split(split, args.out_dir)

    leak = leakage_report(split.train, split.test)
    diagnostics = {
        "lemma_pairs": len(pairs),
        "entries": len(entries),
        "filtered_pairs": {"missing_source": stats.missing_src, "missing_target": stats.missing_tgt},
        "duplicates_dropped": stats.duplicates,
        "leakage": leak._asdict(),
        "coverage": {
            name: paradigm_coverage(getattr(split, name), src_par) for name in ("train", "dev", "test")
        },
    }
    diag = os.path.join(args.out_dir, "diagnostics.json")
    with open(diag, "w", encoding="utf-8", newline="\n") as f:
        json.dump(diagnostics, f, indent=2, sort_keys=True)
        f.write("\n")

    outputs = {"dictionary": full, "diagnostics": diag, **paths}
    RunManifest(
        "build-dict",
        {"mode": mode, "split_seed": args.split_seed,
         "shared_features": sorted(shared) if shared is not None else None},
        inputs=_digests({"src_synsets": args.src_synsets, "tgt_synsets": args.tgt_synsets,
                         "src_paradigms": args.src_paradigms, "tgt_paradigms": args.tgt_paradigms,
                         "rules": args.rules}),
        outputs=_digests(outputs),
        duration_seconds=time.perf_counter() - start,
    ).write(os.path.join(args.out_dir, "manifest.json"))
    print(f"{len(entries)} entries; train/dev/test {len(split.train)}/{len(split.dev)}/{len(split.test)}; "
          f"leaked {leak.leaked}/{leak.total}", file=sys.stderr)
    return EXIT_OK


# --- train ------------------------------------------------------------------


def _mapping_matrix_as_embeddings(w: MappingMatrix) -> EmbeddingMatrix:
    return EmbeddingMatrix(tuple(f"w_{i}" for i in range(w.dim)), w.w)


def save_mapping(w: MappingMatrix, path: str) -> None:
    # full precision: six digits would break the orthogonality contract
    save_embeddings_file(_mapping_matrix_as_embeddings(w), path, precision=17)


def load_mapping(path: str) -> MappingMatrix:
    m = load_embeddings_file(path)
    expected = tuple(f"w_{i}" for i in range(len(m)))
    if m.words != expected or len(m) != m.dim:
        raise EmbeddingFormatError(f"{path}: not a square mapping matrix with rows w_0..w_(d-1)")
    return MappingMatrix(m.vectors)


def cmd_train(args) -> int:
    start = time.perf_counter()
    mode = CONSTRAINTS[args.constraint]
    if mode != "off" and not (args.src_tags and args.tgt_tags):
        raise UsageError(f"--constraint {args.constraint} requires --src-tags and --tgt-tags")
    if args.model == "procrustes":
        given = [f for f in ITERATION_FLAGS if getattr(args, f) is not None]
        if given or mode != "off":
            logger.warning("--model procrustes ignores %s",
                           ", ".join("--" + f.replace("_", "-") for f in given + (["constraint"] if mode != "off" else [])))

    cfg = TrainConfig(
        max_iterations=args.max_iterations or TrainConfig.max_iterations,
        convergence_tolerance=args.tolerance or TrainConfig.convergence_tolerance,
        candidate_k=args.candidate_k or TrainConfig.candidate_k,
        rank_limit=args.rank_limit or TrainConfig.rank_limit,
        vocab_cutoff=args.vocab_cutoff,
        constraint_mode=mode if args.model != "procrustes" else "off",
        preprocessing=args.preprocessing,
        random_seed=args.random_seed,
        threads=_threads(args),
    )
    x, z = load_embeddings_file(args.src_emb), load_embeddings_file(args.tgt_emb)
    seed, unresolved = load_seed_lexicon(args.seed_dict, x, z)
    if not seed:
        logger.error("no seed pair resolvable in the embeddings (%d unresolved)", unresolved)
        return EXIT_EMPTY

    constraint = None
    if cfg.constraint_mode != "off":
        rules = _rules(args.rules)
        src_par, tgt_par = load_paradigms(args.src_tags, rules), load_paradigms(args.tgt_tags, rules)
        shared = _features(args.shared_features, src_par, tgt_par) if mode == SUBSET else None
        constraint = MorphConstraint(src_par.form_tags(), tgt_par.form_tags(), mode, rules, shared)

    if args.model == "procrustes":
        w, report = train_procrustes(x, z, seed, cfg)
    elif args.model == "self-learning":
        w, report = train_self_learning(x, z, seed, cfg, constraint)
    else:
        w, report = train_latent_variable(x, z, seed, cfg, constraint)

    os.makedirs(args.out_dir, exist_ok=True)
    mapping_path = os.path.join(args.out_dir, "mapping.txt")
    report_path = os.path.join(args.out_dir, "report.json")
    save_mapping(w, mapping_path)
    with open(report_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(report.to_json(include_pairs=args.log_pairs))
    config = {"model": args.model, **cfg.to_dict()}
    # thread count never changes results; keep it out of the digestible config
    config.pop("threads")
    RunManifest(
        "train", config,
        inputs=_digests({"src_emb": args.src_emb, "tgt_emb": args.tgt_emb, "seed_dict": args.seed_dict,
                         "src_tags": args.src_tags, "tgt_tags": args.tgt_tags, "rules": args.rules}),
        outputs=_digests({"mapping": mapping_path, "report": report_path}),
        duration_seconds=time.perf_counter() - start,
    ).write(os.path.join(args.out_dir, "manifest.json"))
    print(f"{args.model}: {report.iterations_run} iterations, final mean cosine "
          f"{report.mean_cosines[-1]:.4f}", file=sys.stderr)
    return EXIT_OK


# --- evaluate ---------------------------------------------------------------


def cmd_evaluate(args) -> int:
    start = time.perf_counter()
    if args.mode == "lexeme" and not args.tgt_paradigms:
        raise UsageError("--mode lexeme requires --tgt-paradigms")
    if args.oov == "extend" and not (args.src_ngrams or args.tgt_ngrams):
        raise UsageError("--oov extend requires --src-ngrams and/or --tgt-ngrams")
    rules = _rules(args.rules)
    x, z = load_embeddings_file(args.src_emb), load_embeddings_file(args.tgt_emb)
    w = load_mapping(args.mapping)
    gold = read_dictionary(args.gold, rules)
    tgt_par = load_paradigms(args.tgt_paradigms, rules) if args.tgt_paradigms else None
    src_par = load_paradigms(args.src_paradigms, rules) if args.src_paradigms else None

    if args.oov == "extend":
        if args.src_ngrams:
            forms = [f for f in dict.fromkeys(e.src_form for e in gold) if f not in x]
            x, _ = extend_with_oov(x, forms, load_ngram_table(args.src_ngrams))
        if args.tgt_ngrams:
            wanted = [e.tgt_form for e in gold]
            if tgt_par is not None:
                for lemma in dict.fromkeys(e.tgt_lemma for e in gold):
                    if lemma in tgt_par:
                        wanted.extend(tgt_par[lemma].forms())
            forms = [f for f in dict.fromkeys(wanted) if f not in z]
            z, _ = extend_with_oov(z, forms, load_ngram_table(args.tgt_ngrams))

    x, z = preprocess(x, args.preprocessing), preprocess(z, args.preprocessing)
    cfg = EvalConfig()
    threads = _threads(args)
    if args.mode == "lexeme":
        report = evaluate_lexeme_controlled(x, z, w, gold, tgt_par, cfg, src_par, threads)
    else:
        report = evaluate_standard(x, z, w, gold, cfg, src_par, threads)
    text = report.to_json() if args.report == "json" else report.to_tsv()

    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        RunManifest(
            "evaluate",
            {"mode": args.mode, "oov": args.oov, "report": args.report,
             "preprocessing": args.preprocessing, "bin_edges": list(cfg.bin_edges)},
            inputs=_digests({"src_emb": args.src_emb, "tgt_emb": args.tgt_emb, "mapping": args.mapping,
                             "gold": args.gold, "tgt_paradigms": args.tgt_paradigms,
                             "src_paradigms": args.src_paradigms, "src_ngrams": args.src_ngrams,
                             "tgt_ngrams": args.tgt_ngrams, "rules": args.rules}),
            outputs=_digests({"report": args.output}),
            duration_seconds=time.perf_counter() - start,
        ).write(args.output + ".manifest.json")
    else:
        sys.stdout.write(text)
    print(f"P@1 in-vocab {report.in_vocab.accuracy:.3f} ({report.in_vocab.count}), "
          f"all {report.all.accuracy:.3f} ({report.all.count}), "
          f"unresolved {report.unresolved}", file=sys.stderr)
    return EXIT_OK


# --- oov-extend -------------------------------------------------------------


def cmd_oov_extend(args) -> int:
    m = load_embeddings_file(args.emb)
    table = load_ngram_table(args.ngrams)
    with open(args.forms, encoding="utf-8") as f:
        forms = [line.strip() for line in f if line.strip()]
    extended, skipped = extend_with_oov(m, forms, table)
    save_embeddings_file(extended, args.output)
    print(f"appended {len(extended) - len(m)} OOV rows, skipped {skipped}", file=sys.stderr)
    return EXIT_OK


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="morphlex", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build-dict", help="generate and split a bilingual dictionary")
    b.add_argument("--src-synsets", required=True)
    b.add_argument("--tgt-synsets", required=True)
    b.add_argument("--src-paradigms", required=True)
    b.add_argument("--tgt-paradigms", required=True)
    b.add_argument("--rules", help="JSON tag normalization rules")
    b.add_argument("--mode", choices=["exact", "subset"], default="exact")
    b.add_argument("--shared-features", help="comma-separated features both languages mark (subset mode)")
    b.add_argument("--split-seed", type=int, default=0)
    b.add_argument("--out-dir", required=True)
    b.set_defaults(func=cmd_build_dict)

    t = sub.add_parser("train", help="learn a mapping between two embedding spaces")
    t.add_argument("--model", choices=["procrustes", "self-learning", "latent"], default="procrustes")
    t.add_argument("--constraint", choices=list(CONSTRAINTS), default="off")
    t.add_argument("--src-emb", required=True)
    t.add_argument("--tgt-emb", required=True)
    t.add_argument("--seed-dict", required=True)
    t.add_argument("--src-tags", help="source paradigm file used as tag lookup")
    t.add_argument("--tgt-tags", help="target paradigm file used as tag lookup")
    t.add_argument("--rules")
    t.add_argument("--shared-features")
    t.add_argument("--max-iterations", type=int)
    t.add_argument("--tolerance", type=float)
    t.add_argument("--candidate-k", type=int)
    t.add_argument("--rank-limit", type=int)
    t.add_argument("--vocab-cutoff", type=int, default=TrainConfig.vocab_cutoff)
    t.add_argument("--preprocessing", choices=sorted(PIPELINES), default=TrainConfig.preprocessing)
    t.add_argument("--random-seed", type=int, default=0)
    t.add_argument("--threads", type=int)
    t.add_argument("--log-pairs", action="store_true", help="include per-iteration pair logs in the report")
    t.add_argument("--out-dir", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="P@1 evaluation of a trained mapping")
    e.add_argument("--src-emb", required=True)
    e.add_argument("--tgt-emb", required=True)
    e.add_argument("--mapping", required=True)
    e.add_argument("--gold", required=True, help="five-column dictionary file")
    e.add_argument("--mode", choices=["standard", "lexeme"], default="standard")
    e.add_argument("--oov", choices=["off", "extend"], default="off")
    e.add_argument("--src-ngrams")
    e.add_argument("--tgt-ngrams")
    e.add_argument("--tgt-paradigms")
    e.add_argument("--src-paradigms", help="enables lexeme-frequency bins")
    e.add_argument("--rules")
    e.add_argument("--report", choices=["json", "tsv"], default="json")
    e.add_argument("--preprocessing", choices=sorted(PIPELINES), default=TrainConfig.preprocessing)
    e.add_argument("--threads", type=int)
    e.add_argument("--output", help="write the report here (plus a manifest) instead of stdout")
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("oov-extend", help="append subword vectors for OOV forms")
    o.add_argument("--emb", required=True)
    o.add_argument("--ngrams", required=True)
    o.add_argument("--forms", required=True, help="one form per line")
    o.add_argument("--output", required=True)
    o.set_defaults(func=cmd_oov_extend)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"morphlex: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except EmptyDictionaryError as err:
        print(f"morphlex: {err}", file=sys.stderr)
        return EXIT_EMPTY
    except (MappingError, np.linalg.LinAlgError, TrainingError, FloatingPointError) as err:
        print(f"morphlex: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, EmbeddingFormatError, TagError, DictionaryError, ValueError) as err:
        print(f"morphlex: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
