"""Exception hierarchy. Everything raised on purpose derives from RRFSimError."""


class RRFSimError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(RRFSimError):
    """An argument is outside the domain an operation is defined on."""


class LayoutError(DomainError):
    """Patch grid parameters do not describe a valid layout."""


class AsymmetricLayoutError(LayoutError):
    """A layout has no horizontal-mirror counterpart for some position."""


class IncompatibilityError(RRFSimError):
    """Two objects that must share shape/layout/length do not."""


class DegenerateEmbeddingError(RRFSimError):
    """A zero (or zero-mean) embedding makes a cosine denominator vanish."""


class DegenerateTrainingError(RRFSimError):
    """Training data cannot identify a model (e.g. a single class)."""


class DegenerateDataError(RRFSimError):
    """Score/label data does not admit the requested protocol step."""


class DataError(RRFSimError):
    """Malformed values: NaN/Inf features, bad CSV rows, zero variance."""


class FormatError(RRFSimError):
    """A binary or text artifact does not match its file format."""


class LayoutMismatchError(FormatError):
    """An embedding file was produced under a different patch layout."""


class StateError(RRFSimError):
    """An object was used before it was fitted/initialised."""


class MissingEmbeddingsError(RRFSimError):
    """Pair list references image ids absent from the embedding store."""

    def __init__(self, missing):
        self.missing = tuple(sorted(missing))
        super().__init__(f"missing embeddings for: {', '.join(self.missing)}")
