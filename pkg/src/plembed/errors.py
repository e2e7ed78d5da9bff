"""Exception types shared across the package."""


class PreconditionError(ValueError):
    """An input violates an operation's precondition."""


class NumericalFailure(RuntimeError):
    """A randomized search exhausted its retry budget."""


class SchemaError(ValueError):
    """A JSON document does not match the expected schema."""

    def __init__(self, path, element, message):
        self.path = str(path)
        self.element = element
        super().__init__(f"{path}: {element}: {message}")
