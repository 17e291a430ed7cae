"""Authorization: user-managed privilege sets applied together with object
licensing.

Rule sets are themselves data objects with a canonical byte serialization,
so they version, replicate and propagate to providers exactly like any
other data set. Evaluation is deny-overrides with a fail-closed default;
the one license-driven exception is public-open data, which any logged-in
principal may read.
"""

from __future__ import annotations

import fnmatch
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .errors import PiControlError, TransferFailed, UnknownObject
from .model import DATA, Dependency, DependencyMode, DigitalObject, LicenseTag, proprietary
from .versionstore import VersionStore

ACTIONS = ("read", "write", "deploy", "share")


class PrincipalKind(str, Enum):
    USER = "user"
    GROUP = "group"


@dataclass(frozen=True)
class Principal:
    id: str
    kind: PrincipalKind = PrincipalKind.USER
    members: tuple[str, ...] = ()


class PrincipalDirectory:
    """Users and groups; the membership graph must stay acyclic."""

    def __init__(self):
        self.principals: dict[str, Principal] = {}

    def add(self, principal: Principal) -> None:
        previous = self.principals.get(principal.id)
        self.principals[principal.id] = principal
        if self._has_cycle():
            if previous is None:
                del self.principals[principal.id]
            else:
                self.principals[principal.id] = previous
            raise PiControlError(f"group membership cycle through {principal.id}")

    def _has_cycle(self) -> bool:
        WHITE, GRAY, BLACK = 0, 1, 2
        color = {pid: WHITE for pid in self.principals}

        def visit(pid: str) -> bool:
            color[pid] = GRAY
            for member in self.principals[pid].members:
                if member not in self.principals:
                    continue
                if color[member] == GRAY:
                    return True
                if color[member] == WHITE and visit(member):
                    return True
            color[pid] = BLACK
            return False

        return any(color[pid] == WHITE and visit(pid) for pid in list(self.principals))

    def groups_containing(self, principal_id: str) -> set[str]:
        """Transitive closure of groups the principal belongs to."""
        containing = set()
        changed = True
        known = {principal_id} | containing
        while changed:
            changed = False
            for group in self.principals.values():
                if group.kind != PrincipalKind.GROUP or group.id in containing:
                    continue
                if any(m in known for m in group.members):
                    containing.add(group.id)
                    known.add(group.id)
                    changed = True
        return containing

    def to_list(self) -> list[dict]:
        return [
            {"id": p.id, "kind": p.kind.value, "members": list(p.members)}
            for p in sorted(self.principals.values(), key=lambda p: p.id)
        ]

    @classmethod
    def from_list(cls, data: Iterable[Mapping]) -> "PrincipalDirectory":
        directory = cls()
        for item in data:
            directory.add(
                Principal(item["id"], PrincipalKind(item["kind"]), tuple(item.get("members", ())))
            )
        return directory


class Effect(str, Enum):
    ALLOW = "allow"
    DENY = "deny"


@dataclass(frozen=True)
class AccessRule:
    principal: str
    pattern: str  # object id or fnmatch pattern
    action: str
    effect: Effect

    def matches_object(self, object_id: str) -> bool:
        return self.pattern == object_id or fnmatch.fnmatchcase(object_id, self.pattern)


@dataclass(frozen=True)
class AccessControlSet:
    id: str
    rules: tuple[AccessRule, ...] = ()

    def sorted_rules(self) -> tuple[AccessRule, ...]:
        return tuple(
            sorted(self.rules, key=lambda r: (r.principal, r.pattern, r.action, r.effect.value))
        )


def canonical_acl_bytes(acl: AccessControlSet) -> bytes:
    """Rules sorted by (principal, pattern, action, effect), compact JSON,
    newline-terminated: bit-stable for digesting and replication."""
    payload = {
        "id": acl.id,
        "rules": [
            {"principal": r.principal, "pattern": r.pattern, "action": r.action, "effect": r.effect.value}
            for r in acl.sorted_rules()
        ],
    }
    return (json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def acl_from_bytes(data: bytes) -> AccessControlSet:
    parsed = json.loads(data.decode("utf-8"))
    return AccessControlSet(
        parsed["id"],
        tuple(
            AccessRule(r["principal"], r["pattern"], r["action"], Effect(r["effect"]))
            for r in parsed["rules"]
        ),
    )


def acl_object_id(acl_id: str) -> str:
    # stable across edits: the version store heads track content changes
    return f"da:acl/{acl_id}"


def acl_object(acl: AccessControlSet, provider_info_name: str = "local") -> DigitalObject:
    """The privilege set as a data object, replicable like any other set."""
    from .model import Identification, Pricing, ProviderInfo, ServiceDescription

    return DigitalObject(
        id=acl_object_id(acl.id),
        kind=DATA,
        name=f"access rules '{acl.id}'",
        description=ServiceDescription(
            identification=Identification(f"acl-{acl.id}", "1"),
            function="access control rule set",
            provider_info=ProviderInfo(provider_info_name),
            pricing=Pricing(0, "EUR", "flat"),
        ),
        license=proprietary(None),
        dependencies=(Dependency("kind:resource", DependencyMode.STORAGE),),
    )


@dataclass(frozen=True)
class Decision:
    allowed: bool
    basis: str  # "rule" | "license:public_open" | "default_deny"
    rule: AccessRule | None = None


def authorize(
    principal: Principal,
    obj: DigitalObject,
    action: str,
    acl: AccessControlSet,
    directory: PrincipalDirectory | None = None,
    logged_in: bool = False,
) -> Decision:
    """Deny-overrides over the matching rules (direct or via group
    membership); with no matching rule, public-open data is readable by any
    logged-in principal and everything else is denied."""
    applicable = {principal.id}
    if directory is not None:
        applicable |= directory.groups_containing(principal.id)
    matching = [
        r
        for r in acl.sorted_rules()
        if r.principal in applicable and r.action == action and r.matches_object(obj.id)
    ]
    for rule in matching:
        if rule.effect == Effect.DENY:
            return Decision(False, "rule", rule)
    for rule in matching:
        if rule.effect == Effect.ALLOW:
            return Decision(True, "rule", rule)
    if obj.license.tag == LicenseTag.PUBLIC_OPEN and action == "read" and logged_in:
        return Decision(True, "license:public_open")
    return Decision(False, "default_deny")


@dataclass(frozen=True)
class PropagationItem:
    provider_id: str
    ok: bool
    commit_id: str | None = None
    transferred: bool = False
    error: str = ""


@dataclass(frozen=True)
class PropagationReport:
    acl_id: str
    items: tuple[PropagationItem, ...]

    @property
    def failures(self) -> list[PropagationItem]:
        return [i for i in self.items if not i.ok]


def propagate_acl(
    acl: AccessControlSet,
    targets: Iterable[str],
    engine,
    store: VersionStore,
    caller: str = "local",
) -> PropagationReport:
    """Replicate the committed rule set to each target provider.

    Plain replication of the ACL data object: per-provider success or
    failure, with the version-store commit id recorded so staleness of a
    provider copy is detectable. Re-running transfers only what is missing."""
    object_id = acl_object_id(acl.id)
    heads = store.heads(object_id)
    payload = canonical_acl_bytes(acl)
    if not heads or store.get_blob(store.get_commit(sorted(heads)[0]).blob) != payload:
        raise PiControlError(f"acl {acl.id} must be committed to the version store first")

    items = []
    for provider_id in targets:
        try:
            replica, transferred = engine.replicate_tracked(object_id, provider_id, caller=caller)
            items.append(
                PropagationItem(provider_id, True, replica.commit_id, transferred)
            )
        except (TransferFailed, UnknownObject) as exc:
            items.append(PropagationItem(provider_id, False, error=f"{type(exc).__name__}: {exc}"))
    return PropagationReport(acl.id, tuple(items))
