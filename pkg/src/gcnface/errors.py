"""Exception types shared across the package."""


class GcnFaceError(Exception):
    """Base class for all package-specific errors."""


class ContractViolation(GcnFaceError):
    """An input violated a documented precondition."""


class ShapeMismatch(ContractViolation):
    """Operand shapes are incompatible for the requested operation."""

    def __init__(self, op: str, shapes, detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{op}: incompatible shapes {self.shapes}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class UnsupportedOperation(GcnFaceError):
    """Requested an operation name that is not in the registry."""


class ConvergenceError(GcnFaceError):
    """An iterative solver hit its iteration cap.

    Carries the last estimate so callers can decide whether to accept it.
    """

    def __init__(self, msg: str, estimate=None, iterations: int = 0):
        super().__init__(msg)
        self.estimate = estimate
        self.iterations = iterations


class DegenerateMaskError(ContractViolation):
    """A loss was evaluated on an empty mask intersection."""


class FormatError(GcnFaceError):
    """A serialized artifact could not be parsed.

    ``offset`` is the byte position (for binary formats) or line number
    (for text formats) where parsing failed, when known.
    """

    def __init__(self, msg: str, offset=None):
        if offset is not None:
            msg = f"{msg} (at offset {offset})"
        super().__init__(msg)
        self.offset = offset


class ConfigError(GcnFaceError):
    """A run configuration is malformed or inconsistent."""


class TrainingDiverged(GcnFaceError):
    """A non-finite value appeared during training.

    ``dump_path`` points at the diagnostic state dump written on abort.
    """

    def __init__(self, msg: str, dump_path=None):
        super().__init__(msg)
        self.dump_path = dump_path
