"""Exception hierarchy shared by every okmp module."""


class OkmpError(Exception):
    """Base class for all protocol errors."""


# field arithmetic
class FieldMismatch(OkmpError):
    pass


class ZeroInverse(OkmpError, ZeroDivisionError):
    pass


class WeakParameters(OkmpError, ValueError):
    """Parameters below the protocol-mode security floor."""


# linear algebra
class DimMismatch(OkmpError, ValueError):
    pass


class DimTooSmall(OkmpError, ValueError):
    pass


class IsotropyExhausted(OkmpError):
    pass


# group state machine
class ZeroSecret(OkmpError, ValueError):
    pass


class GroupFull(OkmpError):
    pass


class DuplicateMember(OkmpError):
    pass


class UnknownMember(OkmpError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class IsotropicKey(OkmpError):
    pass


class StaleEpoch(OkmpError):
    pass


class WrongMode(OkmpError):
    pass


# authentication
class EpochMismatch(OkmpError):
    pass


class ZeroRecovered(OkmpError):
    pass


# adversary
class SingularTranscript(OkmpError):
    pass


# wire
class WireError(OkmpError, ValueError):
    pass


class BadMagic(WireError):
    pass


class BadVersion(WireError):
    pass


class BadKind(WireError):
    pass


class TruncatedFrame(WireError):
    pass


class LengthMismatch(WireError):
    pass


class NonCanonical(WireError):
    """An element on the wire is not a canonical residue."""


class CorruptCapture(WireError):
    pass


# network harness
class AuthFailed(OkmpError):
    pass


class BadConfig(OkmpError, ValueError):
    pass


class BindFailure(OkmpError, OSError):
    pass


class ChurnClosed(OkmpError):
    """Connection closed for repeated logout-login cycles within one window."""
