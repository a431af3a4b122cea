"""Exception types shared across the package."""


class CapflowError(Exception):
    """Base class; `reason` is a short machine-readable message."""

    def __init__(self, reason: str = ""):
        super().__init__(reason)
        self.reason = reason


class NoStationaryCap(CapflowError):
    pass


class OffsetOutOfChart(CapflowError):
    pass


class DegenerateMetric(CapflowError):
    pass


class ContactNotPlanar(CapflowError):
    pass


class AngleDegenerate(CapflowError):
    pass


class InvalidMode(CapflowError):
    pass


class SolverFailure(CapflowError):
    pass


class ComplexSpectrum(SolverFailure):
    pass


class NotHalfsphere(CapflowError):
    pass


class StepRejected(CapflowError):
    pass


class DegenerateFit(CapflowError):
    pass


class InsufficientDecay(CapflowError):
    pass
