"""Exception types raised across the pipeline."""


class RulMaeError(Exception):
    """Base class for every error the package raises on purpose."""


class MalformedLine(RulMaeError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


class NonContiguousCycles(RulMaeError):
    pass


class InvalidRange(RulMaeError, ValueError):
    pass


class MissingTruth(RulMaeError):
    pass


class EmptyDataset(RulMaeError):
    pass


class UnknownFeature(RulMaeError, KeyError):
    pass


class UnitTooShort(RulMaeError):
    pass


class BadPatchSize(RulMaeError, ValueError):
    pass


class BadRatio(RulMaeError, ValueError):
    pass


class ShapeMismatch(RulMaeError, ValueError):
    pass


class NonFinite(RulMaeError, FloatingPointError):
    pass


class BadHeadCount(RulMaeError, ValueError):
    pass


class BadDim(RulMaeError, ValueError):
    pass


class EmptyInput(RulMaeError, ValueError):
    pass


class IndexOverlap(RulMaeError, ValueError):
    pass


class AllMasked(RulMaeError, ValueError):
    pass


class MissingLabels(RulMaeError):
    pass


class NonFiniteLoss(RulMaeError, FloatingPointError):
    pass


class VersionMismatch(RulMaeError):
    pass


class CorruptFile(RulMaeError):
    pass
