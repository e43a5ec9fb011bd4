"""Shared exception types."""


class QzkError(Exception):
    """Base class for all package errors."""


class ConfigError(QzkError):
    """Invalid or inconsistent run configuration."""


class LengthMismatchError(QzkError):
    """Bit-string operation applied to strings of unequal length."""


class KdfInputError(QzkError):
    """Rejected key-derivation input (empty secret, oversize output, ...)."""


class DecodeError(QzkError):
    """Malformed wire frame or payload invariant violation."""


class ProtocolViolation(QzkError):
    """A party sent something the protocol forbids; the round must abort."""


class HandshakeError(ProtocolViolation):
    """Timestamp echo mismatch or protocol version mismatch."""


class InsufficientDetectionsError(QzkError):
    """Sifted string shorter than the fragment the config requires."""


class CalibrationError(QzkError):
    """Requested noise floor is outside the reachable range."""
