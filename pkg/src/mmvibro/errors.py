"""Exception hierarchy shared by all pipeline stages."""


class MmvibroError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfig(MmvibroError):
    """Radar/scene configuration violates one or more invariants.

    Carries a list of per-field diagnostics in ``violations``.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class OutOfRange(MmvibroError):
    """A distance exceeds the unambiguous range of the radar config."""


class RateMismatch(MmvibroError):
    """Audio sample rate disagrees with the rate a stage requires."""


class BadLength(MmvibroError):
    """Frame length is not the expected power-of-two sample count."""


class NoStablePeak(MmvibroError):
    """No range bin holds the per-frame magnitude argmax often enough."""


class AllFlagged(MmvibroError):
    """Error correction flagged more than half the phase samples."""


class SilentSignal(MmvibroError):
    """Peak displacement is below the normalization floor."""


class CutoffAboveNyquist(MmvibroError):
    """Filter cutoff is at or above half the sample rate."""


class TooShort(MmvibroError):
    """Audio clip is too short for the requested estimate."""


class ZeroNoise(MmvibroError):
    """SNR is undefined for zero noise amplitude."""


class UnsupportedFormat(MmvibroError):
    """WAV file encoding is not PCM-16 or float32."""


class CorruptHeader(MmvibroError):
    """WAV or IF-dump header is truncated or malformed."""


class ShapeMismatch(MmvibroError):
    """Matrix/vector dimensions disagree."""


class Diverged(MmvibroError):
    """Training loss became non-finite."""


class EmptyReference(MmvibroError):
    """Reference transcript normalizes to the empty string."""


class EmptyCorpus(MmvibroError):
    """Corpus evaluation requires at least one transcript pair."""


class AssetMissing(MmvibroError):
    """A bundled golden fixture could not be located."""
