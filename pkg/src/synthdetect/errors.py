"""Exception types shared across the toolkit."""


class SynthDetectError(Exception):
    pass


class ArgumentError(SynthDetectError, ValueError):
    pass


class ShapeError(SynthDetectError, ValueError):
    pass


class DimensionError(ShapeError):
    """Image or feature dimensions outside what an operation accepts."""


class CapacityError(ArgumentError):
    pass


class StructureError(SynthDetectError):
    """A directory tree or model lacks a required component."""


class DecodeError(SynthDetectError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = path


class TrainingError(SynthDetectError):
    pass


class NumericalError(SynthDetectError, FloatingPointError):
    pass


class BackwardStateError(SynthDetectError, RuntimeError):
    pass


class OptimizerStateError(SynthDetectError, RuntimeError):
    pass


class UndefinedMetricError(SynthDetectError, ValueError):
    pass


class FormatError(SynthDetectError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(SynthDetectError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ContractError(SynthDetectError):
    pass
