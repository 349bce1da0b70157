"""Converter from MAT-format benchmark archives (per-image CNN features,
labels, per-class attribute matrices, split index vectors) to the portable
binary dataset directory consumed by the igsc toolkit."""

from .convert import ConverterError, SchemaError, ValidationError, convert

__version__ = "0.1.0"
