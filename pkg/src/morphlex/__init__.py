"""Morphologically complete bilingual lexicon induction toolkit."""

__version__ = "0.1.0"

from .embeddings import EmbeddingMatrix, NgramTable  # noqa: E402
from .mapping import MappingMatrix, SeedLexicon  # noqa: E402
from .morphology import MorphTag, Paradigm, ParadigmCollection  # noqa: E402
from .dictionary import DictEntry  # noqa: E402

__all__ = [
    "DictEntry",
    "EmbeddingMatrix",
    "MappingMatrix",
    "MorphTag",
    "NgramTable",
    "Paradigm",
    "ParadigmCollection",
    "SeedLexicon",
    "__version__",
]
