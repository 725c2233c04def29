"""Exception hierarchy shared across the package.

Every failure mode maps onto one of these so callers (and the CLI exit-code
logic) can branch on category rather than on message text.
"""


class ZonotrainError(Exception):
    """Base class for all package errors."""


class ConfigError(ZonotrainError):
    """Invalid or inconsistent user configuration."""


class DimensionError(ZonotrainError):
    """Tensor shapes or ranks incompatible with the requested operation."""


class DomainError(ZonotrainError):
    """Value outside an op's mathematical domain (log of non-positive, division
    by an interval straddling zero, ...)."""


class NumericError(ZonotrainError):
    """NaN/inf surfaced where finite values are required (e.g. training loss)."""


class StructureError(ZonotrainError):
    """Malformed graph: cycles, dangling tensor references, duplicate ids."""


class ReachabilityError(StructureError):
    """Requested outputs not reachable from the designated input tensor."""


class UnsupportedOpError(ZonotrainError):
    """Op kind has no abstract transformer for the requested domain."""

    def __init__(self, kind, domain=None, detail=""):
        self.kind = kind
        self.domain = domain
        msg = f"no abstract transformer for op {kind!s}"
        if domain is not None:
            msg += f" in domain {getattr(domain, '__name__', domain)!s}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class CheckpointError(ZonotrainError):
    """Corrupt or internally inconsistent checkpoint files."""


class DataFormatError(ZonotrainError):
    """Malformed dataset file (bad IDX magic, truncated payload, ...)."""


class PropertyDomainError(ZonotrainError):
    """Robustness property instantiated with a domain it does not support."""
