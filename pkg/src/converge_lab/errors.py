"""Exception types raised across the package."""


class ConvergeLabError(Exception):
    """Base class for every error raised by converge_lab."""


class NonFiniteValue(ConvergeLabError):
    pass


class ParameterViolation(ConvergeLabError, ValueError):
    pass


class BlowUp(ConvergeLabError):
    def __init__(self, t, norm):
        super().__init__(f"solution norm {norm:.3e} exceeded the blow-up threshold at t={t:.6g}")
        self.t = t
        self.norm = norm


class StepUnderflow(ConvergeLabError):
    def __init__(self, t, step):
        super().__init__(f"required step {step:.3e} fell below min_step at t={t:.6g}")
        self.t = t
        self.step = step


class DomainExit(ConvergeLabError):
    pass


class UnknownName(ConvergeLabError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown name"


class GridTooFine(ConvergeLabError, ValueError):
    pass


class TooFewSamples(ConvergeLabError):
    pass


class DegenerateWindow(ConvergeLabError):
    pass


class DegenerateSamples(ConvergeLabError):
    pass


class NotCritical(ConvergeLabError):
    pass


class OutOfRange(ConvergeLabError, ValueError):
    pass


class HypothesisViolated(ConvergeLabError, ValueError):
    pass


class OutsideCase(ConvergeLabError, ValueError):
    pass


class NotConstantOnSet(ConvergeLabError):
    pass


class NonFiniteJacobian(ConvergeLabError):
    pass


class DegreeUnsupported(ConvergeLabError, ValueError):
    pass


class ZeroLeadingCoefficient(ConvergeLabError, ValueError):
    pass


class NotHurwitz(ConvergeLabError):
    pass


class IllConditioned(ConvergeLabError):
    pass


class ParseError(ConvergeLabError):
    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class BuildError(ConvergeLabError):
    pass
