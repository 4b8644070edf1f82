"""Exception types shared across the toolkit.

Every error the CLI reports carries a stable ``code`` used in the
machine-parseable error record.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all toolkit errors."""

    code = "error"


class FormatError(ToolkitError):
    """Malformed or inconsistent file content (bad magic, bad record, ...)."""

    code = "format"

    def __init__(self, message: str, *, path: str | None = None, offset: int | None = None):
        loc = ""
        if path is not None:
            loc += f" [{path}"
            if offset is not None:
                loc += f" @ {offset}"
            loc += "]"
        super().__init__(message + loc)
        self.path = path
        self.offset = offset


class ManifestMismatchError(ToolkitError):
    """Corpus content disagrees with its manifest."""

    code = "manifest-mismatch"


class FingerprintMismatchError(ToolkitError):
    """A derived artifact does not match the stream it claims to come from."""

    code = "fingerprint-mismatch"


class EmptyTailError(ToolkitError):
    """No occupied bucket at or above the long-context threshold."""

    code = "empty-tail"

    def __init__(self, tau: int, occupied: dict[int, int]):
        summary = ", ".join(f"bucket {b} (lower {lb}): {c}" for (b, lb, c) in sorted(
            (b, lower, c) for b, (lower, c) in occupied.items()
        )) or "none"
        super().__init__(
            f"no occupied bucket with lower bound >= tau={tau}; occupied buckets: {summary}"
        )
        self.tau = tau
        self.occupied = occupied


class ValidationError(ToolkitError):
    """Input violates a documented precondition."""

    code = "validation"


class DivergenceError(ToolkitError):
    """Training produced a non-finite loss."""

    code = "divergence"

    def __init__(self, step: int):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
