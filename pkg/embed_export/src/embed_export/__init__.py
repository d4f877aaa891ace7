"""Embed anchor prompts with a pretrained text encoder and write the
anchor interchange file."""

from .encoders import EncoderError, HashedEncoder, resolve_encoder
from .exporter import ExportJob, export
from .prompts import (
    CLASSIFICATION_TEMPLATE,
    REGRESSION_TEMPLATE,
    PromptError,
    PromptPlan,
    format_value,
)

__version__ = "0.1.0"

__all__ = [
    "EncoderError",
    "HashedEncoder",
    "resolve_encoder",
    "ExportJob",
    "export",
    "CLASSIFICATION_TEMPLATE",
    "REGRESSION_TEMPLATE",
    "PromptError",
    "PromptPlan",
    "format_value",
]
