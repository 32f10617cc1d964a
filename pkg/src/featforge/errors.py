"""Exception hierarchy shared across the package."""


class FeatForgeError(Exception):
    """Base class for all package errors."""


# expressions
class ExpressionError(FeatForgeError, ValueError):
    pass


class UnknownToken(ExpressionError):
    pass


class MalformedExpression(ExpressionError):
    pass


class ExpressionTooLarge(MalformedExpression):
    pass


class MissingColumn(ExpressionError, KeyError):
    pass


class LengthMismatch(FeatForgeError, ValueError):
    pass


# data
class DataError(FeatForgeError):
    pass


class ParseError(DataError, ValueError):
    def __init__(self, message, row=None, col=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if col is not None:
            loc.append(f"column {col}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.col = col


class TargetNotFound(DataError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "target not found"


class TooFewRows(DataError, ValueError):
    pass


class KTooLarge(DataError, ValueError):
    pass


class EmptySelection(DataError, ValueError):
    pass


# pipeline
class UnknownFeature(FeatForgeError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown feature"


# evaluation
class DegenerateFold(FeatForgeError):
    pass


class NoLiveFeatures(FeatForgeError):
    pass


# memory
class DuplicateKey(FeatForgeError, KeyError):
    pass


class EmptyPool(FeatForgeError, ValueError):
    pass


# agents
class NoValidAction(FeatForgeError):
    pass


class ParseFailure(FeatForgeError, ValueError):
    pass


class ContextOverflow(FeatForgeError):
    pass


# llm
class LlmError(FeatForgeError):
    pass


class Timeout(LlmError):
    pass


class RateLimited(LlmError):
    pass


class HttpError(LlmError):
    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class RetriesExhausted(LlmError):
    pass


# rl
class TooFewSamples(FeatForgeError, ValueError):
    pass


class NonFiniteGradient(FeatForgeError, FloatingPointError):
    pass


class VersionMismatch(FeatForgeError, ValueError):
    pass
