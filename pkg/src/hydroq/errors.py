"""Exception types shared across the package."""


class HydroqError(Exception):
    """Base class for all package errors."""


# --- scenario / ingestion ---

class ParseError(HydroqError):
    pass


class ValidationError(HydroqError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class MissingSeries(HydroqError):
    pass


# --- plant dynamics ---

class IllegalTransition(HydroqError):
    pass


class InvalidEdge(HydroqError):
    pass


class SimultaneousChargeDischarge(HydroqError):
    pass


class PowerLimitExceeded(HydroqError):
    pass


class SocOutOfBounds(HydroqError):
    pass


class HydrogenOutOfBounds(HydroqError):
    pass


class WindowMismatch(HydroqError):
    pass


# --- stage models ---

class HorizonMismatch(HydroqError):
    pass


class InfeasibleInitialState(HydroqError):
    pass


class CommitmentGap(HydroqError):
    pass


class InvalidOneHot(HydroqError):
    pass


class LengthMismatch(HydroqError):
    pass


# --- qubo ---

class MissingPenalty(HydroqError):
    pass


class Overflow(HydroqError):
    pass


# --- solvers ---

class TooLarge(HydroqError):
    pass


class NoFeasibleSample(HydroqError):
    """Solve loop exhausted its penalty rounds without a feasible sample.

    Carries diagnostics: the least-violating sample and the constraint
    families still violated.
    """

    def __init__(self, message, best_sample=None, violated_families=()):
        self.best_sample = best_sample
        self.violated_families = tuple(violated_families)
        super().__init__(f"{message} (violated: {', '.join(self.violated_families) or 'n/a'})")


class RemoteUnavailable(HydroqError):
    pass


class ProtocolError(HydroqError):
    pass


class EnergyMismatch(HydroqError):
    pass
