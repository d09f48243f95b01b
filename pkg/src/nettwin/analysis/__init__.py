"""Population comparison: t-SNE, chick-reference adequacy, report emission."""

from .report import (ChickReference, GroupSummary, compare_metric, compare_to_reference, emit_report,
                     load_reference, reference_band, report_schema, synthetic_reference_path)
from .tsne import EmbeddingResult, tsne

__all__ = ["ChickReference", "EmbeddingResult", "GroupSummary", "compare_metric", "compare_to_reference",
           "emit_report", "load_reference", "reference_band", "report_schema", "synthetic_reference_path",
           "tsne"]
