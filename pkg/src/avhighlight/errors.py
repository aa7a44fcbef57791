"""Exception types shared across the package."""

from __future__ import annotations


class ContractError(ValueError):
    """A caller violated a documented precondition."""


class ShapeError(ContractError):
    """Tensor shapes do not match what a graph node expects."""

    def __init__(self, message: str, node: int | None = None, kind: str | None = None):
        if node is not None:
            message = f"node {node} ({kind}): {message}"
        super().__init__(message)
        self.node = node
        self.kind = kind


class NumericalError(ArithmeticError):
    """A forward pass or a training loss produced a non-finite value."""

    def __init__(self, message: str, node: int | None = None, kind: str | None = None):
        if node is not None:
            message = f"node {node} ({kind}): {message}"
        super().__init__(message)
        self.node = node
        self.kind = kind


class DegenerateError(ContractError):
    """A statistic is undefined for the given input (zero variance, all ties)."""


class ParseError(ValueError):
    """A binary file could not be decoded."""

    def __init__(self, message: str, offset: int, record: str | None = None):
        where = f"offset {offset}"
        if record is not None:
            where += f", record {record!r}"
        super().__init__(f"{message} ({where})")
        self.offset = offset
        self.record = record
