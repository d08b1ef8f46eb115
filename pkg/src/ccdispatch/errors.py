class DispatchError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DispatchError):
    pass


class ConvexityError(DispatchError):
    pass


class ScenarioError(DispatchError):
    pass


class StructureError(DispatchError):
    """A QP or solution lacks the row tags an operation relies on."""


class QuotaError(DispatchError):
    pass


class InfeasibleError(DispatchError):
    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}
