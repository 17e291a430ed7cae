"""The digital object universe: software, data and resources as services.

Objects carry a service description, an author-defined license class and a
dependency list. Software needs resources at runtime; software and data both
need resources for storage; resources are sinks and depend on nothing.
The kind set is deliberately open: the three built-in tags are always
recognized, user-defined tags are preserved and listed but get no extra
semantics.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Union

from .errors import (
    CyclicDependency,
    InvalidObject,
    InvalidResourceURI,
    MalformedManifest,
    UnresolvedDependency,
)


@dataclass(frozen=True)
class ObjectKind:
    """One tag per object; unknown tags are legal and kept verbatim."""

    tag: str

    def __post_init__(self):
        if not self.tag or not isinstance(self.tag, str):
            raise InvalidObject("object kind tag must be a non-empty string")

    @property
    def is_builtin(self) -> bool:
        return self.tag in _BUILTIN_TAGS


SOFTWARE = ObjectKind("software")
DATA = ObjectKind("data")
RESOURCE = ObjectKind("resource")

_BUILTIN_TAGS = {"software", "data", "resource"}
_ID_PREFIXES = {"software": "sw", "data": "da", "resource": "re"}


def kind_from_tag(tag: str) -> ObjectKind:
    lowered = tag.lower()
    if lowered in _BUILTIN_TAGS:
        return ObjectKind(lowered)
    return ObjectKind(tag)


class DependencyMode(str, Enum):
    RUNTIME = "runtime"
    STORAGE = "storage"


@dataclass(frozen=True)
class Dependency:
    """Edge to a concrete object id, or a kind-level requirement ("kind:resource")."""

    target: str
    mode: DependencyMode

    @staticmethod
    def on_kind(kind: ObjectKind, mode: DependencyMode) -> "Dependency":
        return Dependency(f"kind:{kind.tag}", mode)

    @property
    def is_kind_level(self) -> bool:
        return self.target.startswith("kind:")

    def targets_resource(self) -> bool:
        if self.is_kind_level:
            return self.target == f"kind:{RESOURCE.tag}"
        return self.target.startswith("re:")


@dataclass(frozen=True)
class Identification:
    name: str
    version: str = ""


@dataclass(frozen=True)
class ProviderInfo:
    provider_id: str
    contact: str = ""


@dataclass(frozen=True)
class Pricing:
    """Money in integer minor units; zero is a legal price."""

    amount_minor: int
    currency: str
    unit: str = "flat"

    def __post_init__(self):
        if not isinstance(self.amount_minor, int) or isinstance(self.amount_minor, bool):
            raise InvalidObject("pricing amount must be an integer of minor currency units")
        if self.amount_minor < 0:
            raise InvalidObject("pricing amount must not be negative")


@dataclass(frozen=True)
class ServiceDescription:
    """Identification, function, provider info and pricing are mandatory;
    the two property maps may be empty."""

    identification: Identification | None = None
    function: str = ""
    provider_info: ProviderInfo | None = None
    pricing: Pricing | None = None
    nonfunctional: Mapping[str, object] = field(default_factory=dict)
    technical_requirements: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Violation:
    """A missing or empty mandatory description attribute. Data, not a failure."""

    attribute: str
    problem: str = "missing"

    @staticmethod
    def missing(attribute: str) -> "Violation":
        return Violation(attribute)


# checked in this order, so violation lists are deterministic
_MANDATORY_ATTRIBUTES = ("identification", "function", "provider_info", "pricing")


def validate_description(desc: ServiceDescription) -> list[Violation]:
    """Empty list iff all four mandatory attributes are present and non-empty."""
    violations = []
    if desc.identification is None or not desc.identification.name:
        violations.append(Violation.missing("identification"))
    if not desc.function:
        violations.append(Violation.missing("function"))
    if desc.provider_info is None or not desc.provider_info.provider_id:
        violations.append(Violation.missing("provider_info"))
    if desc.pricing is None or not desc.pricing.currency:
        violations.append(Violation.missing("pricing"))
    return violations


class LicenseTag(str, Enum):
    PUBLIC_OPEN = "public_open"
    COMMUNITY = "community"
    PROPRIETARY = "proprietary"
    PRIVATE = "private"


@dataclass(frozen=True)
class LicenseClass:
    """Author-defined rule: the highest trust level replicas may be placed at.

    None means unbounded. Public-open forces unbounded, private forces 0.
    """

    tag: LicenseTag
    replication_allowed_to: int | None = None

    def __post_init__(self):
        if self.tag == LicenseTag.PUBLIC_OPEN and self.replication_allowed_to is not None:
            raise InvalidObject("public_open licenses are replicable without bound")
        if self.tag == LicenseTag.PRIVATE and self.replication_allowed_to != 0:
            raise InvalidObject("private licenses restrict replicas to the personal domain")
        if self.replication_allowed_to is not None and self.replication_allowed_to < 0:
            raise InvalidObject("replication bound must be a non-negative trust level")

    def allows_placement_at(self, trust_level: int) -> bool:
        return self.replication_allowed_to is None or trust_level <= self.replication_allowed_to


def public_open() -> LicenseClass:
    return LicenseClass(LicenseTag.PUBLIC_OPEN, None)


def private() -> LicenseClass:
    return LicenseClass(LicenseTag.PRIVATE, 0)


def community(allowed_to: int = 1) -> LicenseClass:
    return LicenseClass(LicenseTag.COMMUNITY, allowed_to)


def proprietary(allowed_to: int | None = None) -> LicenseClass:
    return LicenseClass(LicenseTag.PROPRIETARY, allowed_to)


@dataclass(frozen=True)
class DigitalObject:
    id: str
    kind: ObjectKind
    name: str
    description: ServiceDescription
    license: LicenseClass
    dependencies: tuple[Dependency, ...] = ()

    def __post_init__(self):
        deps = tuple(self.dependencies)
        object.__setattr__(self, "dependencies", deps)
        tag = self.kind.tag
        if tag == RESOURCE.tag and deps:
            raise InvalidObject("resources have no outgoing dependencies")
        if tag == SOFTWARE.tag:
            if not any(d.mode == DependencyMode.RUNTIME and d.targets_resource() for d in deps):
                raise InvalidObject("software needs at least one runtime dependency on a resource")
        if tag in (SOFTWARE.tag, DATA.tag):
            if not any(d.mode == DependencyMode.STORAGE and d.targets_resource() for d in deps):
                raise InvalidObject(f"{tag} objects need at least one storage dependency on a resource")
        if tag != SOFTWARE.tag and any(d.mode == DependencyMode.RUNTIME for d in deps):
            raise InvalidObject("only software declares runtime dependencies")


def canonical_object_id(kind: ObjectKind, payload_or_uri: Union[bytes, str]) -> str:
    """Deterministic id: kind prefix plus a sha256 hex digest of the payload.

    Resources are identified by their URI instead of a content digest.
    """
    if kind.tag == RESOURCE.tag:
        uri = payload_or_uri
        if isinstance(uri, bytes):
            uri = uri.decode("utf-8", errors="replace")
        if not isinstance(uri, str) or not uri.strip():
            raise InvalidResourceURI("resource objects need a non-empty URI")
        return f"re:{uri}"
    if isinstance(payload_or_uri, str):
        payload = payload_or_uri.encode("utf-8")
    elif isinstance(payload_or_uri, (bytes, bytearray)):
        payload = bytes(payload_or_uri)
    else:
        raise InvalidObject("content-addressed kinds take a bytes payload")
    prefix = _ID_PREFIXES.get(kind.tag, kind.tag.lower())
    return f"{prefix}:{hashlib.sha256(payload).hexdigest()}"


def id_digest(object_id: str) -> str | None:
    """The sha256 hex digest embedded in a canonical content-addressed id, if any."""
    _, _, suffix = object_id.partition(":")
    if len(suffix) == 64 and all(c in "0123456789abcdef" for c in suffix):
        return suffix
    return None


def dependency_closure(
    obj: DigitalObject, catalog: Union[Iterable[DigitalObject], Mapping[str, DigitalObject]]
) -> set[str]:
    """Transitive concrete dependencies of obj, excluding obj itself.

    Kind-level requirements constrain planning but are not graph edges, so
    they are skipped here. A missing concrete target raises
    UnresolvedDependency; any cycle raises CyclicDependency.
    """
    if isinstance(catalog, Mapping):
        by_id = dict(catalog)
    else:
        by_id = {o.id: o for o in catalog}
    by_id.setdefault(obj.id, obj)

    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[str, int] = {}
    result: set[str] = set()

    def visit(node_id: str) -> None:
        color[node_id] = GRAY
        node = by_id[node_id]
        for dep in node.dependencies:
            if dep.is_kind_level:
                continue
            target = dep.target
            if target not in by_id:
                raise UnresolvedDependency(target)
            state = color.get(target, WHITE)
            if state == GRAY:
                raise CyclicDependency(f"dependency cycle through {target}")
            if state == WHITE:
                visit(target)
            result.add(target)
        color[node_id] = BLACK

    visit(obj.id)
    result.discard(obj.id)
    return result


# --- manifest wire format ---
# One object per UTF-8 JSON file; field names are part of the contract.

def object_to_manifest(obj: DigitalObject) -> dict:
    desc = obj.description
    return {
        "id": obj.id,
        "kind": obj.kind.tag,
        "name": obj.name,
        "description": {
            "identification": (
                {"name": desc.identification.name, "version": desc.identification.version}
                if desc.identification
                else None
            ),
            "function": desc.function,
            "provider_info": (
                {"provider_id": desc.provider_info.provider_id, "contact": desc.provider_info.contact}
                if desc.provider_info
                else None
            ),
            "pricing": (
                {
                    "amount_minor": desc.pricing.amount_minor,
                    "currency": desc.pricing.currency,
                    "unit": desc.pricing.unit,
                }
                if desc.pricing
                else None
            ),
            "nonfunctional": dict(desc.nonfunctional),
            "technical_requirements": dict(desc.technical_requirements),
        },
        "license": {
            "tag": obj.license.tag.value,
            "replication_allowed_to": obj.license.replication_allowed_to,
        },
        "dependencies": [{"target": d.target, "mode": d.mode.value} for d in obj.dependencies],
    }


def object_from_manifest(data: Mapping) -> DigitalObject:
    try:
        desc_data = data.get("description") or {}
        ident = desc_data.get("identification")
        prov = desc_data.get("provider_info")
        pricing = desc_data.get("pricing")
        description = ServiceDescription(
            identification=Identification(ident["name"], ident.get("version", "")) if ident else None,
            function=desc_data.get("function") or "",
            provider_info=ProviderInfo(prov["provider_id"], prov.get("contact", "")) if prov else None,
            pricing=Pricing(pricing["amount_minor"], pricing["currency"], pricing.get("unit", "flat"))
            if pricing
            else None,
            nonfunctional=dict(desc_data.get("nonfunctional") or {}),
            technical_requirements=dict(desc_data.get("technical_requirements") or {}),
        )
        license_data = data["license"]
        lic = LicenseClass(LicenseTag(license_data["tag"]), license_data.get("replication_allowed_to"))
        deps = tuple(
            Dependency(d["target"], DependencyMode(d["mode"])) for d in data.get("dependencies", [])
        )
        return DigitalObject(
            id=data["id"],
            kind=kind_from_tag(data["kind"]),
            name=data["name"],
            description=description,
            license=lic,
            dependencies=deps,
        )
    except InvalidObject:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedManifest(f"object manifest missing or malformed field: {exc}") from exc


def load_object(path: Union[str, Path]) -> DigitalObject:
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"manifest is not valid JSON: {exc}") from exc
    return object_from_manifest(data)


def dump_object(obj: DigitalObject, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(object_to_manifest(obj), indent=2) + "\n", encoding="utf-8")
