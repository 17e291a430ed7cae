"""Domain error types shared across the control centre.

Errors are part of the module contracts: callers match on the class, so
subclassing is only used where a failure genuinely is-a more general one
(an unreachable provider is one way a transfer fails).
"""


class PiControlError(Exception):
    """Base class for every domain failure raised by this package."""


# --- object model ---

class InvalidObject(PiControlError):
    """A digital object violates a structural invariant."""


class MalformedManifest(PiControlError):
    """An object manifest file does not match the documented schema."""


class InvalidResourceURI(PiControlError):
    """A resource object was given an empty or unusable URI."""


class UnresolvedDependency(PiControlError):
    def __init__(self, target: str):
        super().__init__(f"dependency target not in catalog: {target}")
        self.target = target


class CyclicDependency(PiControlError):
    """The dependency graph contains a cycle; resources are sinks, so valid graphs are acyclic."""


# --- trust ---

class UnknownSubject(PiControlError):
    """Trust was requested for a subject the federation graph does not contain."""


class UnassignedRoot(PiControlError):
    """A root directory has neither an override nor a declared trust level."""


class InvalidTrustLevel(PiControlError):
    """Trust levels are non-negative integers; device-local directories are pinned to 0."""


# --- federation ---

class DirectoryUnavailable(PiControlError):
    """The directory endpoint could not be reached."""


class MalformedDirectory(PiControlError):
    """A directory listing did not parse as the documented wire format."""


class CyclicDirectory(PiControlError):
    """Registering this directory would create a parent cycle."""


class InvalidDescription(PiControlError):
    def __init__(self, violations):
        names = ", ".join(v.attribute for v in violations)
        super().__init__(f"service description incomplete: {names}")
        self.violations = list(violations)


class LicenseViolation(PiControlError):
    """Placement would exceed the license's maximum allowed trust level."""


# --- version store ---

class UnknownCommit(PiControlError):
    pass


class NotAnAncestor(PiControlError):
    """Rollback target is not reachable from any current head of the object."""


class HistoryMismatch(PiControlError):
    """sync was attempted between histories of two different objects."""


class IncompleteResolution(PiControlError):
    """resolve must name every current head (and at least two of them)."""


# --- secret sharing ---

class InvalidThreshold(PiControlError):
    """Parameters must satisfy 1 <= k <= n <= 255 with a non-empty secret."""


class InsufficientShares(PiControlError):
    pass


class ShareSetMismatch(PiControlError):
    """Shares come from different split operations (k, n, digest or index clash)."""


class MalformedShare(PiControlError):
    """A share file does not match the documented binary layout."""


class IntegrityFailure(PiControlError):
    """Reconstruction succeeded arithmetically but the payload digest does not match."""


# --- replication / providers ---

class UnknownObject(PiControlError):
    pass


class ResourceNotReplicable(PiControlError):
    """Resources cannot be copied; migrate them or share access instead."""


class TransferFailed(PiControlError):
    """A payload transfer did not complete; safe to retry."""


class Unreachable(TransferFailed):
    """The provider is outside an availability window or timed out."""


class NotFound(PiControlError):
    """The provider holds no payload under the requested URI."""


class NotSupported(PiControlError):
    """The adapter does not implement this capability."""


class VerificationFailed(PiControlError):
    """Digest check of transferred bytes failed."""


class UnsupportedKind(PiControlError):
    """The operation is not defined for this object kind."""


class NotOwner(PiControlError):
    pass


class EmptyScope(PiControlError):
    """Partial access scopes must select a non-empty slice of the resource."""


class InvalidScope(PiControlError):
    """Scope lies outside the underlying resource's extent."""


# --- planning ---

class NoStorageContract(PiControlError):
    pass


class NoComputeContract(PiControlError):
    pass


class ThresholdUnsatisfiable(PiControlError):
    """Fewer reachable storage contracts than the requested threshold k."""


class DeployFailed(PiControlError):
    pass


# --- control service ---

class Unauthorized(PiControlError):
    pass


class CorruptState(PiControlError):
    def __init__(self, section: str, detail: str = ""):
        msg = f"persisted state corrupt in section '{section}'"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.section = section
