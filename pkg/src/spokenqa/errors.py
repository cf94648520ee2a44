class SpokenQAError(Exception):
    """Base class for data and contract errors raised by this package."""


class ContractError(SpokenQAError, ValueError):
    """A caller violated a precondition (empty gold list, bad shapes, ...)."""


class LexiconParseError(SpokenQAError, ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class DataError(SpokenQAError, ValueError):
    """Malformed corpus, predictions or checkpoint content."""


class ConfigError(SpokenQAError, ValueError):
    pass


class TrainingError(SpokenQAError, RuntimeError):
    pass
