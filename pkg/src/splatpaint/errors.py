"""Exception types raised by the package."""

from __future__ import annotations


class SplatpaintError(Exception):
    """Base class for package errors."""


class DatasetError(SplatpaintError):
    """Scene directory or its contents violate the dataset contract."""


class DimensionMismatch(DatasetError):
    """An image, mask, or map does not match its declared dimensions."""


class CloudFormatError(SplatpaintError):
    """A splat-cloud file is corrupt or uses an unsupported format."""


class ContractViolation(SplatpaintError):
    """A backend returned a result that breaks its interface contract."""


class BackendError(SplatpaintError):
    """A remote inpainting call failed after exhausting retries."""
