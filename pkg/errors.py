class LaboratoryError(Exception):
    """Base class of every error raised by the laboratory."""


# validation family (exit code 2)

class ConfigValidationError(LaboratoryError, ValueError):
    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ConfigParseError(LaboratoryError, ValueError):
    def __init__(self, message: str, line: int = None, key: str = None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class PoleError(LaboratoryError, ValueError):
    """Argument sits on a pole of Gamma or of a series parameter."""


class NearIntegerOrderError(PoleError):
    """Second-kind Bessel order too close to an integer; perturb the order."""


class RegimeError(LaboratoryError, ValueError):
    """Series or asymptotic form requested outside its regime of validity."""


# numerical family (exit code 3)

class NumericalError(LaboratoryError, ArithmeticError):
    pass


class ConvergenceError(NumericalError):
    pass


class EPProximityError(NumericalError):
    pass


class ProjectionError(NumericalError):
    pass


class NoMergeFoundError(NumericalError):
    pass


class ChainConstructionError(NumericalError):
    pass


class StepUnderflowError(NumericalError):
    pass


class WindowError(NumericalError):
    pass


VALIDATION_ERRORS = (ConfigValidationError, ConfigParseError, PoleError, RegimeError)
