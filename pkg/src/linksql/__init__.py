"""Schema-linking Text-to-SQL pipeline and evaluation harness.

Stages: link candidate tables to the question, describe the linked schema
in natural language, generate a SQLite query, execute it, and run one
round of error-triggered debugging. Scoring covers table-recall metrics
(exact and subset) and execution accuracy against gold SQL.
"""

__version__ = "0.1.0"
