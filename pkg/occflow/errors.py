"""
occflow/errors.py
Exception family shared by the library and the CLI.
"""

from __future__ import annotations


class OccFlowError(Exception):
    exit_code = 1

    def __init__(self, code: str, message: str):
        self.code    = code
        self.message = message
        super().__init__(f"[{code}] {message}")


class DimensionError(OccFlowError):
    def __init__(self, message: str):
        super().__init__("dimension", message)


class ContractError(OccFlowError):
    def __init__(self, message: str):
        super().__init__("contract", message)


class ConfigError(OccFlowError):
    def __init__(self, message: str):
        super().__init__("config", message)


class ValidationError(OccFlowError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("validation", "; ".join(self.violations) or "invalid input")


class TrainingDivergedError(OccFlowError):
    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__("diverged", f"non-finite loss {loss!r} at step {step}")


class CorruptionError(OccFlowError):
    exit_code = 2

    def __init__(self, message: str):
        super().__init__("corruption", message)


class VersionError(OccFlowError):
    exit_code = 2

    def __init__(self, message: str):
        super().__init__("version", message)


class OccFlowIOError(OccFlowError):
    exit_code = 2

    def __init__(self, message: str):
        super().__init__("io", message)
