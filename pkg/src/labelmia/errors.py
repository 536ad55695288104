"""Exception types shared across the package."""


class ArgumentError(ValueError):
    """Invalid argument passed to a public operation."""


class ConfigError(ValueError):
    """Experiment configuration failed validation."""


class FormatError(ValueError):
    """A file on disk does not follow the expected layout.

    ``path`` and ``row`` (1-based, or ``None``) locate the problem.
    """

    def __init__(self, message, path=None, row=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if row is not None:
                loc += f":{row}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.row = row


class NumericError(ArithmeticError):
    """Non-finite value encountered during training or differentiation."""

    def __init__(self, message, layer=None, epoch=None):
        parts = []
        if layer is not None:
            parts.append(f"layer={layer}")
        if epoch is not None:
            parts.append(f"epoch={epoch}")
        suffix = f" ({', '.join(parts)})" if parts else ""
        super().__init__(message + suffix)
        self.layer = layer
        self.epoch = epoch
