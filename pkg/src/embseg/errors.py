"""Exception types shared across the package."""


class EmbsegError(Exception):
    """Base class for every error this package raises on purpose."""


class InvariantError(EmbsegError, ValueError):
    """A tensor, config, or parameter violates a documented invariant."""


class FormatError(EmbsegError, ValueError):
    """A container file cannot be decoded."""


class BadMagicError(FormatError):
    """File does not start with the DGST magic bytes."""


class UnsupportedVersionError(FormatError):
    """Header declares a container version this reader does not handle."""


class TruncatedPayloadError(FormatError):
    """Payload size disagrees with the header's H*W*N declaration."""


class EmptySeedError(EmbsegError, RuntimeError):
    """Seed generation produced zero regions; the pipeline cannot proceed."""


class DimensionMismatchError(EmbsegError, ValueError):
    """Two inputs that must share a pixel grid do not."""
