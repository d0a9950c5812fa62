"""Exception hierarchy shared by every fedgroup module."""


class FedGroupError(Exception):
    pass


class ConfigurationError(FedGroupError, ValueError):
    """Invalid configuration or hyperparameters."""


class ContractError(FedGroupError, ValueError):
    """A caller violated an operation precondition (shapes, emptiness...)."""


class NumericDivergenceError(FedGroupError, FloatingPointError):
    pass


class FormatError(FedGroupError, ValueError):
    """Malformed input file. ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class CapacityError(FedGroupError, ValueError):
    def __init__(self, label: int, shortfall: int):
        super().__init__(f"not enough samples of class {label}: short by {shortfall}")
        self.label = label
        self.shortfall = shortfall
