"""Exception hierarchy shared by all simulator modules."""


class TRDCMAError(Exception):
    """Base class for simulator errors."""


class ConfigurationError(TRDCMAError, ValueError):
    """Inconsistent inputs such as mismatched sample rates or an invalid config."""


class DomainError(TRDCMAError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SynthesisError(TRDCMAError):
    """Phaser impulse response could not be captured in the requested window."""

    def __init__(self, message, captured_fraction=None):
        super().__init__(message)
        self.captured_fraction = captured_fraction


class CalibrationError(TRDCMAError):
    """Channel estimation or matched-filter construction failed."""


class IllPosedError(CalibrationError):
    """Beacon spectrum too weak in-band for a stable deconvolution."""


class DetectionError(TRDCMAError):
    """Threshold detector could not synchronise on the preamble."""
