class CyberlogicError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(CyberlogicError):
    def __init__(self, message, line=None, col=None):
        loc = f" at {line}:{col}" if line is not None else ""
        super().__init__(f"{message}{loc}")
        self.line = line
        self.col = col


class SortError(CyberlogicError):
    """A term or formula violates the declared signature."""


class FragmentError(CyberlogicError):
    """A formula does not normalize into the D/G program fragment."""


class MacroError(CyberlogicError):
    """Unknown macro or macro applied to an undeclared predicate."""


class KeyError_(CyberlogicError):
    """Key material problems (mismatched or malformed keys)."""


class CodecError(CyberlogicError):
    """Malformed canonical bytes."""


class FlounderError(CyberlogicError):
    """A builtin was selected with nonground arguments and could not be delayed."""


class RouteError(CyberlogicError):
    """No route to the principal a goal is addressed to."""


class TransportError(CyberlogicError):
    """Connection or framing failure."""
