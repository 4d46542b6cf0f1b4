"""Exception types raised across the pipeline."""


class BwaError(Exception):
    """Base class for all package errors."""


class MalformedWav(BwaError):
    pass


class UnsupportedEncoding(BwaError):
    pass


class EmptyAudio(BwaError):
    pass


class BufferTooShort(BwaError):
    pass


class IncompatibleOverlap(BwaError):
    pass


class NotBandLimited(BwaError):
    """Energy envelope requested on audio that was never band-passed."""


class DegenerateLabels(BwaError):
    pass


class NonFiniteFeature(BwaError):
    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"non-finite feature value in row {row}")


class DimensionMismatch(BwaError):
    pass


class ModelFormatError(BwaError):
    pass


class RegionTooShort(BwaError):
    pass


class DuplicateFileId(BwaError):
    pass
