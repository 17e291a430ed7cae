"""Replication, migration, access sharing and bulk localization.

Kind and license rules are enforced here: resources are never copied (their
access is shared or migrated instead), software and data only travel to
domains whose trust level their license allows, and physical migration is
copy-then-verify-then-release so a failure never leaves zero intact copies.

Localization is the bulk form of replicate: pull everything matching a
query out of higher trust zones into the personal domain, refreshing the
source directories' mirrors in the same pass, so the system keeps working
when those zones go dark.
"""

from __future__ import annotations

import hashlib
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable

from .clock import Clock
from .errors import (
    EmptyScope,
    InvalidScope,
    LicenseViolation,
    NotFound,
    NotOwner,
    PiControlError,
    ResourceNotReplicable,
    TransferFailed,
    UnknownObject,
    UnsupportedKind,
    VerificationFailed,
)
from .federation import FederationRegistry
from .model import DATA, RESOURCE, SOFTWARE, DigitalObject, ObjectKind, id_digest
from .versionstore import VersionStore

EventSink = Callable[[str, str, dict], None]


class ReplicaState(str, Enum):
    PENDING = "pending"
    LIVE = "live"
    STALE = "stale"
    LOST = "lost"


@dataclass(frozen=True)
class Location:
    provider_id: str
    uri: str


@dataclass(frozen=True)
class Replica:
    object_id: str
    provider_id: str
    uri: str
    commit_id: str | None
    state: ReplicaState
    digest: str | None = None


class MigrationMode(str, Enum):
    PHYSICAL = "physical"
    ACCESS = "access"


class TicketStatus(str, Enum):
    PLANNED = "planned"
    COPIED = "copied"
    VERIFIED = "verified"
    SOURCE_RELEASED = "source_released"
    DONE = "done"
    ABORTED = "aborted"


@dataclass
class MigrationTicket:
    id: str
    object_id: str
    source: Location
    destination: Location
    mode: MigrationMode
    status: TicketStatus = TicketStatus.PLANNED
    detail: str = ""

    def _advance(self, status: TicketStatus) -> None:
        # copy-then-delete ordering: releasing the source needs a verified copy
        if status == TicketStatus.SOURCE_RELEASED and self.status != TicketStatus.VERIFIED:
            raise PiControlError("source may only be released after verification")
        self.status = status


@dataclass(frozen=True)
class Scope:
    whole: bool = True
    paths: tuple[str, ...] = ()
    byte_range: tuple[int, int] | None = None

    @classmethod
    def entire(cls) -> "Scope":
        return cls(True)

    @classmethod
    def subpaths(cls, *paths: str) -> "Scope":
        return cls(False, tuple(paths))

    @classmethod
    def byte_slice(cls, start: int, end: int) -> "Scope":
        return cls(False, (), (start, end))

    def covers_path(self, path: str) -> bool:
        if self.whole:
            return True
        return any(path == p or path.startswith(p.rstrip("/") + "/") for p in self.paths)


ALL_RIGHTS = frozenset({"read", "write", "deploy"})


@dataclass(frozen=True)
class VirtualObject:
    """A shareable handle granting whole or partial access to a resource."""

    id: str
    resource_id: str
    scope: Scope
    grantee: str
    rights: frozenset[str]

    def permits(self, principal: str, action: str, path: str | None = None) -> bool:
        if principal != self.grantee or action not in self.rights:
            return False
        return path is None or self.scope.covers_path(path)


@dataclass(frozen=True)
class LocalizeItem:
    object_id: str
    directory: str
    provider: str
    status: str  # replicated | already_local | failed
    error: str = ""
    transferred: bool = False


@dataclass(frozen=True)
class LocalizeReport:
    items: tuple[LocalizeItem, ...]
    mirror_warnings: tuple[str, ...] = ()

    @property
    def transfers(self) -> int:
        return sum(1 for i in self.items if i.transferred)


class ReplicationEngine:
    def __init__(
        self,
        registry: FederationRegistry,
        store: VersionStore,
        clock: Clock,
        catalog: dict[str, DigitalObject] | None = None,
        owners: dict[str, str] | None = None,
        on_event: EventSink | None = None,
        transfer_workers: int = 4,
    ):
        self.registry = registry
        self.store = store
        self.clock = clock
        self.catalog = catalog if catalog is not None else {}
        self.owners = owners if owners is not None else {}
        self.replicas: dict[tuple[str, str], Replica] = {}
        self.virtual_objects: dict[str, VirtualObject] = {}
        self.tickets: dict[str, MigrationTicket] = {}
        self._on_event = on_event or (lambda *_: None)
        self._ticket_seq = 0
        self._virtual_seq = 0
        self._lock = threading.RLock()
        self._transfer_pool = ThreadPoolExecutor(max_workers=transfer_workers)

    # --- helpers ---

    def _emit(self, event: str, subject: str, **details) -> None:
        self._on_event(event, subject, details)

    def _set_replica(self, replica: Replica) -> Replica:
        with self._lock:
            self.replicas[(replica.object_id, replica.provider_id)] = replica
        return replica

    def _drop_replica(self, object_id: str, provider_id: str) -> None:
        with self._lock:
            self.replicas.pop((object_id, provider_id), None)

    def live_replicas(self, object_id: str) -> list[Replica]:
        with self._lock:
            return [
                r
                for (oid, _), r in sorted(self.replicas.items())
                if oid == object_id and r.state == ReplicaState.LIVE
            ]

    def _expected_digest(self, object_id: str) -> str | None:
        heads = self.store.heads(object_id)
        if heads:
            return self.store.get_commit(sorted(heads)[0]).blob
        return id_digest(object_id)

    def _adapter(self, provider_id: str):
        adapter = self.registry.adapter(provider_id)
        if adapter is None:
            raise TransferFailed(f"no adapter bound for provider {provider_id}")
        return adapter

    def _fetch_source(self, object_id: str, source: Location | None) -> bytes:
        if source is not None:
            return self._adapter(source.provider_id).get(source.uri)
        # the version store is the personal-domain copy and the preferred source
        heads = self.store.heads(object_id)
        if heads:
            return self.store.checkout(object_id, sorted(heads)[0])
        errors = []
        for replica in self.live_replicas(object_id):
            try:
                return self._adapter(replica.provider_id).get(replica.uri)
            except (TransferFailed, NotFound) as exc:
                errors.append(f"{replica.provider_id}: {exc}")
        raise TransferFailed(
            f"no live source for {object_id}" + (f" ({'; '.join(errors)})" if errors else "")
        )

    def register_object(self, obj: DigitalObject, owner: str, payload: bytes | None = None):
        """Catalog an object; committing the payload makes it the local copy."""
        with self._lock:
            self.catalog[obj.id] = obj
            self.owners.setdefault(obj.id, owner)
        if payload is not None:
            expected = id_digest(obj.id)
            if expected is not None and hashlib.sha256(payload).hexdigest() != expected:
                raise VerificationFailed(f"payload does not match the content digest in {obj.id}")
            commit, created = self.store.commit_if_changed(
                obj.id, payload, author=owner, message="register"
            )
            if created:
                self._emit("object_committed", obj.id, commit=commit.id)
            return commit
        return None

    # --- operations ---

    def replicate(
        self,
        object_id: str,
        to_provider: str,
        source: Location | None = None,
        obj: DigitalObject | None = None,
        caller: str = "local",
        source_trust: int | None = None,
    ) -> Replica:
        replica, _ = self.replicate_tracked(object_id, to_provider, source, obj, caller, source_trust)
        return replica

    def _source_zone_trust(self, source: Location | None) -> int | None:
        if source is None:
            return 0  # the local store is the personal domain
        try:
            return self.registry.effective_trust(source.provider_id)
        except PiControlError:
            return None

    def replicate_tracked(
        self,
        object_id: str,
        to_provider: str,
        source: Location | None = None,
        obj: DigitalObject | None = None,
        caller: str = "local",
        source_trust: int | None = None,
    ) -> tuple[Replica, bool]:
        """replicate() plus whether bytes actually moved; a live replica
        already holding the expected digest short-circuits to (replica, False)."""
        obj = obj or self.catalog.get(object_id)
        if obj is None:
            raise UnknownObject(object_id)
        if obj.kind.tag == RESOURCE.tag:
            raise ResourceNotReplicable(f"{object_id} is a resource")
        # the license bounds every placement the copy chain touches: the zone
        # the bytes come from as much as the zone they go to
        if source_trust is None:
            source_trust = self._source_zone_trust(source)
        checks = (("destination", self.registry.effective_trust(to_provider)), ("source", source_trust))
        for endpoint, trust_level in checks:
            if trust_level is not None and not obj.license.allows_placement_at(trust_level):
                raise LicenseViolation(
                    f"license {obj.license.tag.value} (bound "
                    f"{obj.license.replication_allowed_to}) forbids the {endpoint} zone "
                    f"at trust {trust_level}"
                )

        expected = self._expected_digest(object_id)
        existing = self.replicas.get((object_id, to_provider))
        if (
            existing is not None
            and existing.state == ReplicaState.LIVE
            and expected is not None
            and existing.digest == expected
        ):
            return existing, False

        payload = self._fetch_source(object_id, source)
        digest = hashlib.sha256(payload).hexdigest()
        if expected is not None and digest != expected:
            raise VerificationFailed(
                f"source bytes for {object_id} hash to {digest[:12]}, expected {expected[:12]}"
            )

        uri = f"objects/{object_id}"
        replica = self._set_replica(
            Replica(object_id, to_provider, uri, None, ReplicaState.PENDING)
        )
        adapter = self._adapter(to_provider)
        try:
            adapter.put(uri, payload)
            written = adapter.get(uri)
        except (TransferFailed, NotFound) as exc:
            self._emit("replicate_failed", object_id, provider=to_provider, error=str(exc))
            raise TransferFailed(f"transfer to {to_provider} failed: {exc}") from exc
        if hashlib.sha256(written).hexdigest() != digest:
            self._emit("replicate_failed", object_id, provider=to_provider, error="digest mismatch")
            raise VerificationFailed(f"{to_provider} returned different bytes for {uri}")

        with self._lock:
            self.catalog.setdefault(object_id, obj)
            # a localized foreign object comes under the caller's control
            self.owners.setdefault(object_id, caller)
        commit, _ = self.store.commit_if_changed(
            object_id, payload, author=caller, message=f"replicated to {to_provider}"
        )
        replica = self._set_replica(replace(replica, state=ReplicaState.LIVE, commit_id=commit.id, digest=digest))
        if to_provider == self.registry.self_provider_id:
            self.registry.add_personal_entry(obj, payload_ref=uri)
        self._emit("replicated", object_id, provider=to_provider, commit=commit.id)
        return replica, True

    def migrate(
        self,
        object_id: str,
        destination: Location,
        source: Location | None = None,
        mode: MigrationMode = MigrationMode.PHYSICAL,
        caller: str = "local",
    ) -> MigrationTicket:
        obj = self.catalog.get(object_id)
        if obj is None:
            raise UnknownObject(object_id)
        if source is None:
            live = self.live_replicas(object_id)
            if not live:
                raise TransferFailed(f"no live replica of {object_id} to migrate")
            source = Location(live[0].provider_id, live[0].uri)
        with self._lock:
            self._ticket_seq += 1
            ticket = MigrationTicket(
                f"ticket-{self._ticket_seq}", object_id, source, destination, mode
            )
            self.tickets[ticket.id] = ticket

        if mode == MigrationMode.ACCESS:
            return self._migrate_access(ticket, obj, caller)
        return self._migrate_physical(ticket, obj, caller)

    def _migrate_physical(self, ticket: MigrationTicket, obj: DigitalObject, caller: str) -> MigrationTicket:
        if obj.kind.tag == RESOURCE.tag:
            ticket.status = TicketStatus.ABORTED
            ticket.detail = "shipped adapters cannot relocate resources; migrate access instead"
            raise UnsupportedKind(ticket.detail)

        def abort(exc: PiControlError, detail: str) -> PiControlError:
            ticket.status = TicketStatus.ABORTED
            ticket.detail = detail
            self._emit("migration_aborted", ticket.object_id, ticket=ticket.id, error=detail)
            return exc

        try:
            payload = self._adapter(ticket.source.provider_id).get(ticket.source.uri)
        except (TransferFailed, NotFound) as exc:
            raise abort(TransferFailed(f"source read failed: {exc}"), str(exc))
        digest = hashlib.sha256(payload).hexdigest()

        destination_adapter = self._adapter(ticket.destination.provider_id)
        try:
            destination_adapter.put(ticket.destination.uri, payload)
        except (TransferFailed, NotFound) as exc:
            raise abort(TransferFailed(f"copy failed: {exc}"), str(exc))
        ticket._advance(TicketStatus.COPIED)

        try:
            written = destination_adapter.get(ticket.destination.uri)
        except (TransferFailed, NotFound) as exc:
            raise abort(TransferFailed(f"verification read failed: {exc}"), str(exc))
        if hashlib.sha256(written).hexdigest() != digest:
            try:  # best effort: do not leave a corrupt copy behind
                destination_adapter.delete(ticket.destination.uri)
            except PiControlError:
                pass
            raise abort(
                VerificationFailed("destination bytes differ from source"), "digest mismatch"
            )
        ticket._advance(TicketStatus.VERIFIED)

        try:
            self._adapter(ticket.source.provider_id).delete(ticket.source.uri)
        except (TransferFailed, NotFound) as exc:
            # both copies intact; the ticket stays verified and can be released later
            ticket.detail = f"source release failed: {exc}"
            raise TransferFailed(ticket.detail)
        ticket._advance(TicketStatus.SOURCE_RELEASED)

        commit, _ = self.store.commit_if_changed(
            ticket.object_id, payload, author=caller, message="migrated"
        )
        self._drop_replica(ticket.object_id, ticket.source.provider_id)
        self._set_replica(
            Replica(
                ticket.object_id,
                ticket.destination.provider_id,
                ticket.destination.uri,
                commit.id,
                ReplicaState.LIVE,
                digest,
            )
        )
        if ticket.source.provider_id == self.registry.self_provider_id:
            self.registry.remove_personal_entry(ticket.object_id)
        if ticket.destination.provider_id == self.registry.self_provider_id:
            self.registry.add_personal_entry(obj, payload_ref=ticket.destination.uri)
        ticket._advance(TicketStatus.DONE)
        self._emit("migrated", ticket.object_id, ticket=ticket.id)
        return ticket

    def _migrate_access(self, ticket: MigrationTicket, obj: DigitalObject, caller: str) -> MigrationTicket:
        if obj.kind.tag != RESOURCE.tag:
            ticket.status = TicketStatus.ABORTED
            ticket.detail = "access migration is defined for resources"
            raise UnsupportedKind(ticket.detail)
        grantee = ticket.destination.provider_id
        virtual = self._register_virtual(obj, grantee, Scope.entire(), ALL_RIGHTS)
        with self._lock:
            self.owners[obj.id] = grantee  # rights move with the migration
        ticket.status = TicketStatus.DONE
        ticket.detail = f"virtual object {virtual.id}"
        self._emit("access_migrated", obj.id, ticket=ticket.id, virtual_object=virtual.id)
        return ticket

    def _register_virtual(
        self, obj: DigitalObject, grantee: str, scope: Scope, rights: frozenset[str]
    ) -> VirtualObject:
        with self._lock:
            self._virtual_seq += 1
            virtual = VirtualObject(f"vo-{self._virtual_seq}", obj.id, scope, grantee, rights)
            self.virtual_objects[virtual.id] = virtual
        shared = DigitalObject(
            id=f"re:virtual/{virtual.id}",
            kind=RESOURCE,
            name=f"{obj.name} (shared with {grantee})",
            description=obj.description,
            license=obj.license,
        )
        with self._lock:
            self.catalog[shared.id] = shared
        self.registry.add_personal_entry(shared)
        return virtual

    def share_access(
        self,
        resource_id: str,
        grantee: str,
        scope: Scope,
        rights: Iterable[str],
        caller: str,
    ) -> VirtualObject:
        obj = self.catalog.get(resource_id)
        if obj is None:
            raise UnknownObject(resource_id)
        if obj.kind.tag != RESOURCE.tag:
            raise UnsupportedKind("only resources are shared as virtual objects")
        if self.owners.get(resource_id) != caller:
            raise NotOwner(f"{caller} does not own {resource_id}")
        rights = frozenset(rights)
        if not rights or not rights <= ALL_RIGHTS:
            raise PiControlError(f"rights must be a non-empty subset of {sorted(ALL_RIGHTS)}")
        if not scope.whole:
            if not scope.paths and scope.byte_range is None:
                raise EmptyScope("partial scope selects nothing")
            if scope.byte_range is not None:
                start, end = scope.byte_range
                if start < 0 or end <= start:
                    raise EmptyScope(f"byte range [{start}, {end}) is empty")
                extent = obj.description.nonfunctional.get("size_bytes")
                if isinstance(extent, int) and end > extent:
                    raise InvalidScope(f"byte range ends at {end}, resource extent is {extent}")
            if any(not p or not p.startswith("/") for p in scope.paths):
                raise InvalidScope("sub-paths must be non-empty and absolute within the resource")
        virtual = self._register_virtual(obj, grantee, scope, rights)
        self._emit("access_shared", resource_id, virtual_object=virtual.id, grantee=grantee)
        return virtual

    def revoke_share(self, virtual_id: str, caller: str) -> None:
        virtual = self.virtual_objects.get(virtual_id)
        if virtual is None:
            raise UnknownObject(virtual_id)
        if self.owners.get(virtual.resource_id) != caller:
            raise NotOwner(f"{caller} does not own {virtual.resource_id}")
        with self._lock:
            del self.virtual_objects[virtual_id]
        self.registry.remove_personal_entry(f"re:virtual/{virtual_id}")
        self._emit("share_revoked", virtual.resource_id, virtual_object=virtual_id)

    def localize(
        self,
        query: str,
        kind: ObjectKind | str | None = None,
        caller: str = "local",
    ) -> LocalizeReport:
        """Replicate every matching entry from trust zones above 0 into the
        personal domain, refreshing source-directory mirrors along the way."""
        result = self.registry.search(query, kind=kind)
        selection = [hit for hit in result.hits if hit.trust > 0]

        mirror_warnings = []
        for directory_id in sorted({hit.entry.directory for hit in selection}):
            try:
                self.registry.mirror(directory_id)
            except PiControlError as exc:
                mirror_warnings.append(f"{directory_id}: {type(exc).__name__}: {exc}")

        def pull(hit) -> LocalizeItem:
            entry = hit.entry
            source = Location(entry.provider, entry.payload_ref or f"objects/{entry.object.id}")
            try:
                _, transferred = self.replicate_tracked(
                    entry.object.id,
                    self.registry.self_provider_id,
                    source,
                    entry.object,
                    caller,
                    source_trust=hit.trust,
                )
            except PiControlError as exc:
                return LocalizeItem(
                    entry.object.id, entry.directory, entry.provider,
                    "failed", f"{type(exc).__name__}: {exc}",
                )
            status = "replicated" if transferred else "already_local"
            return LocalizeItem(
                entry.object.id, entry.directory, entry.provider, status, transferred=transferred
            )

        items = list(self._transfer_pool.map(pull, selection))
        report = LocalizeReport(tuple(items), tuple(mirror_warnings))
        self._emit(
            "localized", query,
            matched=len(items), transferred=report.transfers,
            failed=sum(1 for i in items if i.status == "failed"),
        )
        return report
