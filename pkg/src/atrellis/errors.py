"""Exception hierarchy shared across the toolkit."""


class AtrellisError(ValueError):
    """Base class for all toolkit errors."""


# --- packet / flow domain ---

class MalformedAddress(AtrellisError):
    """An address string did not parse as IPv4."""


class ForeignPacket(AtrellisError):
    """Neither endpoint of the packet is the monitored device."""


class SchemaError(AtrellisError):
    """A serialized artifact violates its schema (unknown field, bad version)."""


# --- clustering tree ---

class NonMonotonicTimestamp(AtrellisError):
    """Per-direction timestamps must be non-decreasing."""


class NoPacketsInDirection(AtrellisError):
    pass


class EmptyTree(AtrellisError):
    pass


# --- cluster metrics ---

class NeedTwoClusters(AtrellisError):
    pass


class DegenerateDiameter(AtrellisError):
    """Every cluster has zero diameter; the index is undefined."""


class BadK(AtrellisError):
    pass


class LengthMismatch(AtrellisError):
    pass


# --- feature pipeline ---

class EmptyFlow(AtrellisError):
    pass


class UnorderedTimestamps(AtrellisError):
    pass


class EmptyTrainingSet(AtrellisError):
    pass


# --- autoencoder ---

class BadArchitecture(AtrellisError):
    pass


class ShapeMismatch(AtrellisError):
    pass


class EmptyData(AtrellisError):
    pass


class DivergedLoss(AtrellisError):
    """Training encountered a non-finite loss or gradient."""


# --- ensemble ---

class EmptyActivity(AtrellisError):
    """An activity key has no trainable member flows."""


class EmptyErrors(AtrellisError):
    pass


# --- simulator ---

class BadSpec(AtrellisError):
    pass
