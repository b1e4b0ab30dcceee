from typing import Optional


class PaymentNetworkError(Exception):
    """Base error for pipeline failures"""
    pass


class ConfigError(PaymentNetworkError):
    """Raised when a configuration value is missing, malformed or out of range"""
    pass


class DataError(PaymentNetworkError):
    """Raised when input data cannot be used"""
    pass


class DegenerateInputError(DataError):
    """Raised when a statistic is undefined for the given input"""
    pass


class ModelError(PaymentNetworkError):
    """Raised when a model is fitted or applied inconsistently"""
    pass


class StageError(PaymentNetworkError):
    """Raised when a pipeline stage fails; keeps the stage name and the cause"""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")


EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


def exit_code_for(error: Optional[BaseException]) -> int:
    """
    Map an exception to the CLI exit code contract

    Args:
        error: The exception that stopped the command, or None on success

    Returns:
        0 success, 1 config error, 2 data error, 3 internal error
    """
    if error is None:
        return EXIT_OK
    if isinstance(error, StageError):
        return exit_code_for(error.cause)
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, DataError):
        return EXIT_DATA
    return EXIT_INTERNAL
