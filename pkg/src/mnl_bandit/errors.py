"""Exception types shared across the package."""


class MnlBanditError(Exception):
    """Base class for all package errors."""


class SingularDesign(MnlBanditError):
    """A Gram matrix is (numerically) singular where an inverse is required."""


class DomainError(MnlBanditError, ValueError):
    """A closed-form radius was evaluated outside its domain."""


class TooLarge(MnlBanditError):
    """Exhaustive enumeration would exceed its size guard."""


class GuardExceeded(TooLarge):
    """supCB-MNL's explicit assortment family is too large to enumerate."""


class LevelExhausted(MnlBanditError):
    """supCB-MNL ran out of levels without selecting an assortment."""


class ConfigError(MnlBanditError, ValueError):
    """Invalid experiment or policy configuration."""


class UnknownAlgorithm(ConfigError):
    """The algorithm tag does not name a known policy."""


class ReplicationFailed(MnlBanditError):
    """A replication in a batch raised; carries the offending seed."""

    def __init__(self, replication: int, seed: int, cause: BaseException):
        super().__init__(f"replication {replication} (seed {seed}) failed: {cause!r}")
        self.replication = replication
        self.seed = seed
        self.cause = cause
