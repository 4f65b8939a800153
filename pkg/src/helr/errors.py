"""Exception types shared across the package."""


class HelrError(Exception):
    """Base class for all package errors."""


class ConfigError(HelrError):
    """Invalid or inconsistent configuration."""


class DecodeError(HelrError):
    """Byte string does not decode to a valid value (off-curve point,
    non-canonical encoding, bad length, bad magic...)."""


class NotInRangeError(HelrError):
    """Bounded discrete log found no exponent in the requested window."""


class KeyTagMismatchError(HelrError):
    """Homomorphic operation attempted on ciphertexts under different keys."""


class IntegrationError(HelrError):
    """Numerical quadrature failed to reach the requested tolerance."""


class InsufficientDataError(HelrError):
    """Not enough training pairs to estimate a model."""


class MalformedFrameError(HelrError):
    """Transport frame is truncated, oversized or has a bad version/type.
    Distinct from a protocol abort."""


class SessionTimeoutError(HelrError):
    """Channel receive timed out (dropped message, dead peer)."""


class ProtocolViolation(HelrError):
    """Peer message is invalid for the current phase; the session aborts."""


class StoreError(HelrError):
    """Template store lookup or persistence failure."""
