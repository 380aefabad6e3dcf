"""Fine-tune a table-linking model on the pipeline's JSONL export.

Low-rank adapters over the attention Q/K/V projections, cross-entropy on
the target table names only (prompt tokens masked out of the loss).
"""

__version__ = "0.1.0"
