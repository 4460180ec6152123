"""Exception hierarchy shared by every layer of the package."""


class TapfedError(Exception):
    """Base class for all errors raised by tapfed."""


class GenerationTimeout(TapfedError):
    pass


class InvalidLabel(TapfedError):
    pass


class ThresholdError(TapfedError):
    """Threshold exceeds the number of shares, or is < 1."""


class InvalidIndex(TapfedError):
    pass


class ArityError(TapfedError):
    """A vector or key has the wrong length for the public parameters."""


class DlogOutOfBound(TapfedError):
    """No discrete log exists inside the requested symmetric range."""


class LabelMismatch(TapfedError):
    pass


class IncompleteInput(TapfedError):
    pass


class KeyMismatch(TapfedError):
    pass


class InsufficientShares(TapfedError):
    pass


class TamperDetected(TapfedError):
    """Partial decryptions disagree on the aggregated ciphertext (abort symbol)."""


class ResultOutOfRange(TapfedError):
    """Combined result is not within the dlog bound: replay, tamper, or undersized bound."""


class EncodingRangeError(TapfedError):
    pass


class DegenerateWeights(TapfedError):
    pass


class LabelReuse(TapfedError):
    pass


class CompliancePending(TapfedError):
    """The crypto infrastructure has not decided on a key request yet."""


class SerializationError(TapfedError):
    pass


class TransportError(TapfedError):
    pass


class ConfigError(TapfedError):
    pass
