"""sparsedoc: sparse cluster-structured document embeddings for text categorization.

Pipeline stages: corpus ingestion, context-based word sense annotation,
word-vector training (skip-gram or corruption-regularized), Gaussian-mixture
soft clustering with top-l sparsified assignments, idf-weighted word-topic
vectors summed into document vectors, optional dimensionality reduction, and
linear one-vs-rest classification with ranking metrics.
"""

__version__ = "0.1.0"

from .corpus import (
    DEFAULT_STOPWORDS,
    Document,
    Vocabulary,
    build_vocabulary,
    compute_idf,
    index_documents,
    load_dataset,
    tokenize,
)
from .errors import DataFormatError, NumericError

__all__ = [
    "DEFAULT_STOPWORDS",
    "DataFormatError",
    "Document",
    "NumericError",
    "Vocabulary",
    "build_vocabulary",
    "compute_idf",
    "index_documents",
    "load_dataset",
    "tokenize",
    "__version__",
]
