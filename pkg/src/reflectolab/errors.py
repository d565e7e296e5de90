"""Exception types shared across the library."""


class ReflectolabError(Exception):
    """Base class for all library errors."""


class GridError(ReflectolabError):
    """Time grid is malformed (non-increasing, empty, non-finite)."""


class DomainError(ReflectolabError):
    """A point or path violates a domain constraint."""


class IntervalError(ReflectolabError):
    """Barrier paths violate ell(t) <= r(t) or the start lies outside them."""


class UnsolvableStepError(ReflectolabError):
    """No active set yields a feasible complementary solution.

    Signals that the mesh is too coarse near the cone vertex.  Carries the
    offending state so the caller can report or refine.
    """

    def __init__(self, z_prev, delta, message="no feasible complementary solution"):
        self.z_prev = z_prev
        self.delta = delta
        super().__init__(f"{message}: z_prev={z_prev!r}, delta={delta!r}")


class CapacityError(ReflectolabError):
    """Requested dimension exceeds what active-set enumeration supports."""


class CoefficientBoundError(ReflectolabError):
    """A drift/dispersion evaluation exceeded its configured bound."""


class PartitionError(ReflectolabError):
    """A partition point does not lie on the path grid."""


class SpecMismatchError(ReflectolabError):
    """A bundle was produced under a different spec than the one supplied."""


class ConfigError(ReflectolabError):
    """Invalid or unknown run configuration."""
