"""Torch-to-MLFR model exporter with reference-output validation."""

from .export import REFERENCE_INPUT_COUNT, ExportError, ExportManifest, export

__version__ = "0.1.0"

__all__ = ["REFERENCE_INPUT_COUNT", "ExportError", "ExportManifest", "export"]
