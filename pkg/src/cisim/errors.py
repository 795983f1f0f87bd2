"""Exception hierarchy shared by all cisim modules."""


class CisimError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidAudioError(CisimError, ValueError):
    pass


class WavError(CisimError):
    pass


class WavNotFoundError(WavError, FileNotFoundError):
    pass


class WavHeaderError(WavError, ValueError):
    """RIFF/WAVE structure could not be parsed."""


class WavEncodingError(WavError, ValueError):
    """Header is fine but the sample encoding is not PCM16 or float32."""


class SampleRateMismatchError(CisimError, ValueError):
    pass


class SilentSignalError(CisimError, ValueError):
    pass


class ShapeMismatchError(CisimError, ValueError):
    pass


class SignalTooShortError(CisimError, ValueError):
    pass


class CoverageGapError(CisimError, ValueError):
    pass


class SimplexError(CisimError, ValueError):
    pass


class MaskFormatError(CisimError, ValueError):
    """Bad magic bytes or unsupported version in a mask-exchange file."""


class MaskTruncatedError(MaskFormatError):
    pass


class FilterDesignError(CisimError, ValueError):
    pass


class ZeroVarianceError(CisimError, ValueError):
    pass


class ConfigError(CisimError, ValueError):
    pass


class ManifestError(CisimError, ValueError):
    pass
