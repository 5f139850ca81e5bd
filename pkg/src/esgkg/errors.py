"""Exception types shared across the pipeline stages."""


class EsgKgError(Exception):
    """Base class for every error raised by this package."""


# ingest
class UnreadableFile(EsgKgError):
    pass


class UnsupportedMedia(EsgKgError):
    pass


# inference clients
class ServiceUnavailable(EsgKgError):
    pass


class DimensionMismatch(EsgKgError, ValueError):
    pass


class ResponseTooLong(EsgKgError):
    pass


# search
class ZeroVector(EsgKgError, ValueError):
    pass


class EmptyCorpus(EsgKgError, ValueError):
    pass


# extraction / consolidation
class MalformedResponse(EsgKgError, ValueError):
    pass


class UnmappedLabel(EsgKgError, KeyError):
    pass


# analytics
class AllZero(EsgKgError, ValueError):
    pass


class UnknownNode(EsgKgError, KeyError):
    pass


class CardinalityExceedsPool(EsgKgError, ValueError):
    pass


class DegenerateInput(EsgKgError, ValueError):
    pass



# interpretation
class MissingRecord(EsgKgError, KeyError):
    pass


class UnmappablePillar(EsgKgError, ValueError):
    pass


class EmptyGrid(EsgKgError, ValueError):
    pass


class ColumnMismatch(EsgKgError, ValueError):
    pass


class EmptyCohort(EsgKgError, ValueError):
    pass


class ZeroVariance(EsgKgError, ValueError):
    pass


class TooFewSamples(EsgKgError, ValueError):
    pass


class NonConvergence(UserWarning):
    """Coordinate descent hit its sweep limit; the last iterate is returned."""


# pipeline
class MissingArtifact(EsgKgError):
    pass


class ConfigInvalid(EsgKgError):
    pass
