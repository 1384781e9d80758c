"""Web-corpus preparation: filtering, cleaning, deduplication, mixing, tokenizer metrics."""
from .config import PipelineConfig
from .kernels import BACKEND
from .model import ConfigError, Document, StageDecision, Verdict, read_corpus, write_corpus
from .pipeline import CascadeReport, report_cascade, run_pipeline, run_stages

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CascadeReport",
    "ConfigError",
    "Document",
    "PipelineConfig",
    "StageDecision",
    "Verdict",
    "read_corpus",
    "report_cascade",
    "run_pipeline",
    "run_stages",
    "write_corpus",
]
