"""Exception types shared across the toolkit.

Every failure the library raises deliberately derives from SegDiagError;
the CLI maps those to exit code 1 and anything else to exit code 2.
"""


class SegDiagError(Exception):
    """Base class for all toolkit errors."""


class FormatError(SegDiagError):
    """Array-exchange file is malformed (bad magic, header, or layout)."""


class UnsupportedDtype(SegDiagError):
    """Array dtype outside the supported {float32, float64, uint8} set."""


class ValidationError(SegDiagError):
    """Data violates a declared invariant (NaN, range, shape pairing...)."""


class ShapeError(SegDiagError):
    """Grid shapes are incompatible for the requested operation."""


class SidecarError(SegDiagError):
    """Volume sidecar JSON is missing, unreadable, or has bad spacing."""


class ManifestError(SegDiagError):
    """Slice manifest is inconsistent or references missing files."""


class EmptyWindow(SegDiagError):
    """No voxels fall inside the requested intensity window."""


class InsufficientBackground(SegDiagError):
    """No corner patch contains enough air voxels for noise estimation."""


class EmptyMask(SegDiagError):
    """Operation requires a nonempty mask."""


class EmptyInput(SegDiagError):
    """Operation requires at least one record/file."""


class ConstructionError(SegDiagError):
    """Synthetic fixture could not reach its construction target."""


class PairingError(SegDiagError):
    """Per-slice files could not be matched one-to-one."""


class SectionError(SegDiagError):
    """A report section was requested but is absent from the report."""
