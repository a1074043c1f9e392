"""Exception hierarchy for the Gaussian blur stack codec.

Parameter-style errors also derive from ValueError so that callers
catching ValueError keep working.
"""

from typing import Optional


class GBSError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(GBSError, ValueError):
    """An argument is outside its documented range."""


class ShapeError(ParameterError):
    """Two planes/images/thumbnails that must match do not."""


class PNMParseError(GBSError, ValueError):
    """Malformed PGM/PPM data."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnsupportedDepthError(PNMParseError):
    """PNM maxval other than 255."""

    def __init__(self, maxval: int, offset: int):
        super().__init__(f"unsupported maxval {maxval}, only 255 is accepted", offset)
        self.maxval = maxval


class LayerDecodeError(GBSError):
    """A layer or base payload could not be decoded."""

    def __init__(self, message: str, layer_index: Optional[int] = None, channel: Optional[int] = None):
        where = "base" if layer_index is None else f"layer {layer_index}"
        if channel is not None:
            where += f" channel {channel}"
        super().__init__(f"{where}: {message}")
        self.layer_index = layer_index
        self.channel = channel


class ContainerFormatError(GBSError):
    """The GBS1 container is malformed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagicError(ContainerFormatError):
    pass


class VersionMismatchError(ContainerFormatError):
    pass


class TruncatedContainerError(ContainerFormatError):
    pass


class ChecksumError(ContainerFormatError):
    """CRC-32 mismatch on one record."""

    def __init__(self, record: str, offset: int):
        super().__init__(f"CRC-32 mismatch in {record}", offset)
        self.record = record


class IndexMismatchError(GBSError):
    """A stack does not follow the index's standardized decomposition."""


class IndexConflictError(GBSError):
    """An entry id is already present in the index."""


class VerificationError(GBSError):
    """A freshly encoded stack does not reproduce its input within tolerance."""


class SignalFormatError(GBSError, ValueError):
    """A raw sample file and its sidecar disagree, or the sidecar is malformed."""


class IndexFormatError(GBSError, ValueError):
    """A persisted search index directory is malformed."""
