"""Exception hierarchy shared by every rankscope module.

The CLI maps any :class:`RankscopeError` to exit status 2.
"""


class RankscopeError(Exception):
    """Base class for expected domain and precondition failures."""


class KindMismatch(RankscopeError):
    pass


class BadShape(RankscopeError):
    pass


class BadIndex(RankscopeError):
    pass


class InvalidFamily(RankscopeError):
    pass


class NotConstructible(RankscopeError):
    pass


class BadCongruence(RankscopeError):
    pass


class DomainError(RankscopeError):
    pass


class Unsupported(RankscopeError):
    pass


class PreconditionViolation(RankscopeError):
    pass
