class CSSError(Exception):
    """Base class for every error raised by css_lnl."""


class ParameterError(CSSError, ValueError):
    pass


class ConfigError(CSSError, ValueError):
    pass


class ShapeError(CSSError, ValueError):
    pass


class DivergenceError(CSSError, FloatingPointError):
    """A loss or gradient became non-finite during training."""


class DegenerateInputError(CSSError, ValueError):
    pass


class CoverageError(CSSError, ValueError):
    pass


class InsufficientDataError(CSSError, ValueError):
    pass


class DegenerateFitError(CSSError, RuntimeError):
    pass


class UndefinedAUCError(CSSError, ValueError):
    pass
