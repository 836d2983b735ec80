"""Metric-DP text privatization and language-model introspection toolkit."""

__version__ = "0.1.0"

from .activations import (
    ActivationDump,
    SentenceRecord,
    pool_sentence,
    pool_subwords,
    read_dump,
    sentence_representations,
    write_dump,
)
from .attention import (
    HeadDistanceMatrix,
    classical_mds,
    head_distance_matrix,
    js_divergence,
    word_align_attention,
)
from .embeddings import EmbeddingSpace, k_nearest, load_embeddings, nearest_neighbor
from .errors import (
    AlignmentError,
    ContractError,
    DataError,
    FormatError,
    OovWordError,
)
from .privacy import (
    DpBoundReport,
    PrivatizationConfig,
    SubstitutionStats,
    privatize_text,
    privatize_word,
    sample_noise,
    substitution_stats,
    verify_dp_bound,
)
from .rsa import DissimilarityMatrix, dissimilarity_matrix, rsa_profile, rsa_score, spearman
from .treebank import ParseTree, SpanExample, read_conllu, read_span_tasks

__all__ = [
    "ActivationDump",
    "AlignmentError",
    "ContractError",
    "DataError",
    "DissimilarityMatrix",
    "DpBoundReport",
    "EmbeddingSpace",
    "FormatError",
    "HeadDistanceMatrix",
    "OovWordError",
    "ParseTree",
    "PrivatizationConfig",
    "SentenceRecord",
    "SpanExample",
    "SubstitutionStats",
    "__version__",
    "classical_mds",
    "dissimilarity_matrix",
    "head_distance_matrix",
    "js_divergence",
    "k_nearest",
    "load_embeddings",
    "nearest_neighbor",
    "pool_sentence",
    "pool_subwords",
    "privatize_text",
    "privatize_word",
    "read_conllu",
    "read_dump",
    "read_span_tasks",
    "rsa_profile",
    "rsa_score",
    "sample_noise",
    "sentence_representations",
    "spearman",
    "substitution_stats",
    "verify_dp_bound",
    "word_align_attention",
    "write_dump",
]
