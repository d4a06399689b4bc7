"""Error taxonomy shared across the framework."""


class Mpc3Error(Exception):
    """Base class for all framework errors."""


class RangeError(Mpc3Error, ValueError):
    """Input outside the encodable or supported numeric range."""


class ShapeError(Mpc3Error, ValueError):
    """Tensor shapes incompatible with the requested operation."""


class ExactnessError(Mpc3Error, ValueError):
    """Operation would exceed the exactness budget of the float engine."""


class ThresholdError(Mpc3Error, ValueError):
    """Fewer shares supplied than the reconstruction threshold."""


class IntegrityError(Mpc3Error, ValueError):
    """Replicated share overlap is inconsistent."""


class FreshnessError(Mpc3Error, ValueError):
    """A (key, purpose, counter) triple was reused."""


class TopologyError(Mpc3Error, ValueError):
    """Referenced party is not a valid peer."""


class TransportError(Mpc3Error, IOError):
    """Channel failure: unreachable peer, closed socket, bad handshake."""


class FrameError(Mpc3Error, ValueError):
    """Malformed or oversized wire frame."""


class FormatError(Mpc3Error, ValueError):
    """Malformed external file (dataset, model, weights)."""


class ConfigError(Mpc3Error, ValueError):
    """Invalid protocol or run configuration."""


class ProtocolError(Mpc3Error, RuntimeError):
    """Protocol-level failure during a run."""
