"""Trust levels over the federation hierarchy.

A trust level is a plain non-negative integer: 0 is the personal domain,
1 a community, 2 and up public or commercial operators. Lower is more
trusted. The value is subjective; the only thing the rest of the system
relies on is the total order it induces over placements.

Levels inherit downwards (directory -> provider -> service entry) until a
user override cuts the walk short. No arithmetic is ever done on levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol, Sequence

from .errors import InvalidTrustLevel, PiControlError, UnassignedRoot, UnknownSubject
from .model import ServiceDescription

TRUST_PERSONAL = 0
TRUST_COMMUNITY = 1
TRUST_PUBLIC = 2


def validate_trust_level(value: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise InvalidTrustLevel(f"trust level must be a non-negative integer, got {value!r}")
    return value


class AssignmentSource(str, Enum):
    USER_OVERRIDE = "user_override"
    INHERITED = "inherited"
    DEFAULT = "default"


@dataclass(frozen=True)
class TrustAssignment:
    subject: str
    level: int
    source: AssignmentSource


class Hierarchy(Protocol):
    """Parent edges of the federation graph, service entry up to root directory."""

    def contains(self, subject: str) -> bool: ...

    def parent(self, subject: str) -> str | None: ...


class MappingHierarchy:
    """Dict-backed hierarchy, used by tests and anywhere a real registry is overkill."""

    def __init__(self, parents: dict[str, str | None]):
        self.parents = dict(parents)

    def contains(self, subject: str) -> bool:
        return subject in self.parents

    def parent(self, subject: str) -> str | None:
        return self.parents[subject]


class TrustTable:
    """Explicit assignments: at most one user override per subject, plus the
    declared (default) levels of root directories."""

    def __init__(self):
        self.overrides: dict[str, int] = {}
        self.defaults: dict[str, int] = {}

    def set_override(self, subject: str, level: int | None, hierarchy: Hierarchy) -> None:
        """Replace any prior override; None removes it and restores inheritance."""
        if not hierarchy.contains(subject):
            raise UnknownSubject(subject)
        if level is None:
            self.overrides.pop(subject, None)
        else:
            self.overrides[subject] = validate_trust_level(level)

    def set_default(self, subject: str, level: int) -> None:
        self.defaults[subject] = validate_trust_level(level)

    def to_dict(self) -> dict:
        return {"overrides": dict(self.overrides), "defaults": dict(self.defaults)}

    @classmethod
    def from_dict(cls, data: dict) -> "TrustTable":
        table = cls()
        for subject, level in (data.get("overrides") or {}).items():
            table.overrides[subject] = validate_trust_level(level)
        for subject, level in (data.get("defaults") or {}).items():
            table.defaults[subject] = validate_trust_level(level)
        return table


def effective_assignment(subject: str, hierarchy: Hierarchy, table: TrustTable) -> TrustAssignment:
    """Nearest ancestor-or-self override, else the root's declared level."""
    if not hierarchy.contains(subject):
        raise UnknownSubject(subject)
    node = subject
    seen = set()
    while True:
        if node in seen:
            raise PiControlError(f"parent cycle in federation graph at {node}")
        seen.add(node)
        if node in table.overrides:
            source = AssignmentSource.USER_OVERRIDE if node == subject else AssignmentSource.INHERITED
            return TrustAssignment(subject, table.overrides[node], source)
        parent = hierarchy.parent(node)
        if parent is None:
            if node in table.defaults:
                source = AssignmentSource.DEFAULT if node == subject else AssignmentSource.INHERITED
                return TrustAssignment(subject, table.defaults[node], source)
            raise UnassignedRoot(node)
        if not hierarchy.contains(parent):
            raise UnknownSubject(parent)
        node = parent


def effective_trust(subject: str, hierarchy: Hierarchy, table: TrustTable) -> int:
    return effective_assignment(subject, hierarchy, table).level


def preference_order(
    candidates: Sequence[tuple[str, ServiceDescription]],
    trust_of: Callable[[str], int],
) -> list[tuple[str, ServiceDescription]]:
    """Total preference order: trust ascending, then price, then subject id.

    The result is a permutation of the input better-first; candidates whose
    description carries no pricing sort after priced ones at equal trust.
    """

    def key(candidate: tuple[str, ServiceDescription]):
        subject, desc = candidate
        if desc.pricing is None:
            return (trust_of(subject), 1, 0, subject)
        return (trust_of(subject), 0, desc.pricing.amount_minor, subject)

    return sorted(candidates, key=key)
