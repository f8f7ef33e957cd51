"""Cross-dataset benchmarking for facial expression recognition datasets."""

from .core import EXPRESSIONS, DatasetManifest, SampleRecord, read_manifest, write_manifest
from .evaluation import EvalResult, PerformanceTensor, build_performance_tensor, macro_f1
from .similarity import (SimilarityReport, build_similarity_report, cross_similarity,
                         global_similarity, local_similarity, paired_similarity)

__version__ = "0.1.0"
