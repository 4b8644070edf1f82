"""Adapter-side error types."""


class AdapterError(Exception):
    """Base class for everything the adapter raises on purpose."""


class FormatError(AdapterError):
    """A binary file does not decode cleanly (magic, version, layout)."""


class FingerprintMismatchError(AdapterError):
    """A weight file was derived from a different packed stream."""


class ValidationError(AdapterError):
    """Inputs are structurally valid but violate an invariant."""
