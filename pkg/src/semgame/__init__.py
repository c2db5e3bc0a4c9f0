"""Distributed semantic channel equalization over MIMO interference channels.

Each transmitter-receiver link designs a linear semantic precoder and a Wiener
equalizer in closed form and plays a non-cooperative power allocation game
against the other links until a Nash equilibrium is reached.
"""

from .errors import ConfigError, DegenerateProblem, SemGameError, SingularityError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateProblem",
    "SemGameError",
    "SingularityError",
    "__version__",
]
