"""Exception types raised across the package."""


class AttncompError(Exception):
    """Base class for all package-specific errors."""


class LayoutError(AttncompError):
    """Invalid prompt layout or span bookkeeping."""


class ShapeError(AttncompError):
    """Array shape inconsistent with the associated layout or head."""


class NumericsError(AttncompError):
    """Non-finite value encountered where finite arithmetic is required."""


class BundleFormatError(AttncompError):
    """Bundle manifest or payload violates the on-disk format contract."""


class ChecksumError(BundleFormatError):
    """Payload bytes do not match the checksum recorded in the manifest."""


class DivergenceError(AttncompError):
    """Training loss became non-finite."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite loss at optimizer step {step}")


class FixpointError(AttncompError):
    """Iterated compression failed to stabilize within the safety cap."""


class GeneratorError(AttncompError):
    """The answer generator failed to produce a usable response."""
