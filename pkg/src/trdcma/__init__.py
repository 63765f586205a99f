"""Complex-baseband simulator for time-reversal routing with dispersion-code multiple access."""
from .errors import (CalibrationError, ConfigurationError, DetectionError, DomainError, IllPosedError,
                     SynthesisError, TRDCMAError)

__version__ = "0.1.0"

__all__ = ["CalibrationError", "ConfigurationError", "DetectionError", "DomainError", "IllPosedError",
           "SynthesisError", "TRDCMAError", "__version__"]
