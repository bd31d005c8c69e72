"""Device-independent randomness certification from Bell-test data."""

from .guessing import GPQuery, GPResult, guessing_probability_point, guessing_probability_region
from .protocol import Certificate, ProtocolConfig, certify
from .scenario import CHSH_SCENARIO, Behavior, BellExpression, InputDistribution, Scenario

__all__ = [
    "CHSH_SCENARIO", "Behavior", "BellExpression", "Certificate", "GPQuery", "GPResult",
    "InputDistribution", "ProtocolConfig", "Scenario", "certify", "guessing_probability_point",
    "guessing_probability_region",
]
__version__ = "0.1.0"
