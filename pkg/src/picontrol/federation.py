"""Federated service directories: import, discovery, search, advertising,
mirroring and availability probing.

A directory is anything that serves the listing wire format: a public
marketplace, a community registry, a local auto-discovery scan or the
device-local personal directory. Trust levels inherit directory ->
provider -> service entry (see trust.py); every directory's entries
partition into per-kind views.

Listing wire format (HTTP GET <endpoint>/listing, or a local file):
UTF-8 JSON {"directory_id", "child_directories": [{"endpoint"}],
"providers": [{"id", "name"}], "entries": [object manifest +
{"provider", "advertised_as", "payload_ref"?}]}.

Mirrors keep the fetched bytes bit-exact and are committed to the version
store, so search keeps working against directories that have gone dark.
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FuturesTimeoutError
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .clock import Clock, SystemClock
from .errors import (
    CyclicDirectory,
    DirectoryUnavailable,
    InvalidDescription,
    InvalidTrustLevel,
    LicenseViolation,
    MalformedDirectory,
    NotSupported,
    TransferFailed,
    UnknownSubject,
)
from .model import (
    DigitalObject,
    ObjectKind,
    object_from_manifest,
    object_to_manifest,
    validate_description,
)
from .providers import ProviderAdapter
from .trust import TrustTable, effective_trust, preference_order
from .versionstore import VersionStore


class DirectoryKind(str, Enum):
    MARKETPLACE = "marketplace"
    COMMUNITY_REGISTRY = "community_registry"
    LOCAL_AUTO_DISCOVERY = "local_auto_discovery"
    DEVICE_LOCAL = "device_local"


class AdvertiseMode(str, Enum):
    LINK = "link"
    EXPORT = "export"


@dataclass(frozen=True)
class ServiceEntry:
    object: DigitalObject
    provider: str
    directory: str
    advertised_as: AdvertiseMode
    payload_ref: str | None = None

    @property
    def id(self) -> str:
        return f"{self.directory}::{self.provider}::{self.object.id}"


@dataclass
class Provider:
    id: str
    name: str = ""
    contracts: tuple[str, ...] = ()
    adapter: ProviderAdapter | None = None


@dataclass
class Directory:
    id: str
    endpoint: str
    kind: DirectoryKind
    parent: str | None = None
    entries: list[ServiceEntry] = field(default_factory=list)


@dataclass(frozen=True)
class MirrorState:
    directory_id: str
    raw: bytes  # bit-exact as fetched
    entries: tuple[ServiceEntry, ...]
    taken_at: float
    version: str  # commit id in the version store


@dataclass(frozen=True)
class AvailabilityRecord:
    provider_id: str
    reachable: bool
    latency_ms: float | None
    probed_at: float
    detail: str = ""


@dataclass(frozen=True)
class SearchHit:
    entry: ServiceEntry
    trust: int


@dataclass(frozen=True)
class SearchResult:
    hits: tuple[SearchHit, ...]
    warnings: tuple[str, ...] = ()

    @property
    def entries(self) -> list[ServiceEntry]:
        return [h.entry for h in self.hits]


@dataclass(frozen=True)
class DiscoveryReport:
    registered: tuple[Directory, ...]
    failures: dict[str, str]  # endpoint -> error


@dataclass(frozen=True)
class Listing:
    directory_id: str
    child_endpoints: tuple[str, ...]
    providers: tuple[tuple[str, str], ...]  # (id, name)
    entries: tuple[tuple[DigitalObject, str, AdvertiseMode, str | None], ...]


def parse_listing(raw: bytes) -> Listing:
    try:
        data = json.loads(raw.decode("utf-8"))
        directory_id = data["directory_id"]
        if not isinstance(directory_id, str) or not directory_id:
            raise MalformedDirectory("directory_id must be a non-empty string")
        children = tuple(c["endpoint"] for c in data.get("child_directories", []))
        providers = tuple((p["id"], p.get("name", "")) for p in data.get("providers", []))
        entries = []
        for item in data.get("entries", []):
            obj = object_from_manifest(item)
            entries.append(
                (
                    obj,
                    item["provider"],
                    AdvertiseMode(item.get("advertised_as", "link")),
                    item.get("payload_ref"),
                )
            )
        return Listing(directory_id, children, providers, tuple(entries))
    except MalformedDirectory:
        raise
    except Exception as exc:
        raise MalformedDirectory(f"listing does not match the wire format: {exc}") from exc


def encode_listing(
    directory_id: str,
    child_endpoints: Iterable[str] = (),
    providers: Iterable[tuple[str, str]] = (),
    entries: Iterable[ServiceEntry] = (),
) -> bytes:
    payload = {
        "directory_id": directory_id,
        "child_directories": [{"endpoint": e} for e in child_endpoints],
        "providers": [{"id": pid, "name": name} for pid, name in providers],
        "entries": [
            dict(
                object_to_manifest(e.object),
                provider=e.provider,
                advertised_as=e.advertised_as.value,
                **({"payload_ref": e.payload_ref} if e.payload_ref else {}),
            )
            for e in entries
        ],
    }
    return (json.dumps(payload, indent=2) + "\n").encode("utf-8")


# --- transports ---

class Transport:
    """Fetches and (where supported) rewrites directory listings."""

    def fetch(self, endpoint: str) -> bytes:
        raise NotImplementedError

    def store(self, endpoint: str, data: bytes) -> None:
        raise NotSupported(f"{type(self).__name__} cannot write listings")


class FileTransport(Transport):
    """endpoint is a path to the listing file, or a directory holding 'listing'."""

    def _path(self, endpoint: str) -> Path:
        raw = endpoint[len("file://"):] if endpoint.startswith("file://") else endpoint
        path = Path(raw)
        if path.is_dir():
            path = path / "listing"
        return path

    def fetch(self, endpoint: str) -> bytes:
        path = self._path(endpoint)
        try:
            return path.read_bytes()
        except OSError as exc:
            raise DirectoryUnavailable(f"{endpoint}: {exc}") from exc

    def store(self, endpoint: str, data: bytes) -> None:
        path = self._path(endpoint)
        if not path.parent.is_dir():
            raise DirectoryUnavailable(f"{endpoint}: parent directory missing")
        path.write_bytes(data)


class HttpTransport(Transport):
    def __init__(self, timeout_s: float = 10.0):
        self.timeout_s = timeout_s

    def fetch(self, endpoint: str) -> bytes:
        url = endpoint.rstrip("/") + "/listing"
        try:
            with urllib.request.urlopen(url, timeout=self.timeout_s) as response:
                return response.read()
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise DirectoryUnavailable(f"{endpoint}: {exc}") from exc


class DefaultTransport(Transport):
    def __init__(self, timeout_s: float = 10.0):
        self._http = HttpTransport(timeout_s)
        self._file = FileTransport()

    def _pick(self, endpoint: str) -> Transport:
        if endpoint.startswith(("http://", "https://")):
            return self._http
        return self._file

    def fetch(self, endpoint: str) -> bytes:
        return self._pick(endpoint).fetch(endpoint)

    def store(self, endpoint: str, data: bytes) -> None:
        self._pick(endpoint).store(endpoint, data)


class ScriptedTransport(Transport):
    """In-memory listings with per-endpoint up/down switches, for tests and demos."""

    def __init__(self):
        self.listings: dict[str, bytes] = {}
        self.down: set[str] = set()

    def set_listing(self, endpoint: str, data: bytes) -> None:
        self.listings[endpoint] = data

    def set_down(self, endpoint: str, down: bool = True) -> None:
        if down:
            self.down.add(endpoint)
        else:
            self.down.discard(endpoint)

    def fetch(self, endpoint: str) -> bytes:
        if endpoint in self.down:
            raise DirectoryUnavailable(f"{endpoint}: scripted offline")
        if endpoint not in self.listings:
            raise DirectoryUnavailable(f"{endpoint}: no such endpoint")
        return self.listings[endpoint]

    def store(self, endpoint: str, data: bytes) -> None:
        if endpoint in self.down:
            raise DirectoryUnavailable(f"{endpoint}: scripted offline")
        self.listings[endpoint] = data


def scan_local_objects(path: Path | str, directory_id: str, provider_id: str = "device") -> bytes:
    """Static-file auto-discovery scanner: builds a listing from a folder of
    object manifest files (*.json)."""
    root = Path(path)
    entries = []
    for manifest_path in sorted(root.glob("*.json")):
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
        entries.append(
            ServiceEntry(
                object=object_from_manifest(data),
                provider=provider_id,
                directory=directory_id,
                advertised_as=AdvertiseMode.LINK,
            )
        )
    return encode_listing(
        directory_id, providers=[(provider_id, provider_id)], entries=entries
    )


# --- the registry ---

class FederationRegistry:
    """All registered directories, providers and their trust relations.

    Implements the trust Hierarchy protocol: service entry -> provider ->
    first registering directory -> parent directory. Reads are concurrent;
    registration and mirroring go through the owning control service's
    command queue, which serializes them.
    """

    def __init__(
        self,
        trust: TrustTable,
        store: VersionStore,
        transport: Transport | None = None,
        clock: Clock | None = None,
        personal_directory_id: str = "personal",
        self_provider_id: str = "local",
        probe_timeout_s: float = 5.0,
        probe_workers: int = 8,
    ):
        self.trust = trust
        self.store = store
        self.transport = transport or DefaultTransport()
        self.clock = clock or SystemClock()
        self.personal_directory_id = personal_directory_id
        self.self_provider_id = self_provider_id
        self.probe_timeout_s = probe_timeout_s

        self.directories: dict[str, Directory] = {}
        self.providers: dict[str, Provider] = {}
        self.mirrors: dict[str, MirrorState] = {}
        self._endpoint_to_directory: dict[str, str] = {}
        self._parents: dict[str, str | None] = {}
        self._probe_pool = ThreadPoolExecutor(max_workers=probe_workers)
        self._lock = threading.RLock()

        personal = Directory(
            id=personal_directory_id,
            endpoint=f"local://{personal_directory_id}",
            kind=DirectoryKind.DEVICE_LOCAL,
        )
        self.directories[personal.id] = personal
        self._endpoint_to_directory[personal.endpoint] = personal.id
        self._parents[personal.id] = None
        self.trust.set_default(personal.id, 0)
        self.register_provider(self_provider_id, name="this device", directory_id=personal.id)

    # --- Hierarchy protocol ---

    def contains(self, subject: str) -> bool:
        return subject in self._parents

    def parent(self, subject: str) -> str | None:
        return self._parents[subject]

    def effective_trust(self, subject: str) -> int:
        return effective_trust(subject, self, self.trust)

    def set_trust(self, subject: str, level: int | None) -> None:
        directory = self.directories.get(subject)
        if directory and directory.kind == DirectoryKind.DEVICE_LOCAL and level not in (None, 0):
            raise InvalidTrustLevel("device-local directories are always trust 0")
        self.trust.set_override(subject, level, self)

    # --- registration plumbing ---

    def register_provider(
        self,
        provider_id: str,
        name: str = "",
        directory_id: str | None = None,
        adapter: ProviderAdapter | None = None,
    ) -> Provider:
        with self._lock:
            provider = self.providers.get(provider_id)
            if provider is None:
                provider = Provider(id=provider_id, name=name or provider_id)
                self.providers[provider_id] = provider
                # trust parent is the first directory the provider was seen in
                self._parents[provider_id] = directory_id
            elif self._parents.get(provider_id) is None and directory_id is not None:
                self._parents[provider_id] = directory_id
            if adapter is not None:
                provider.adapter = adapter
            return provider

    def bind_adapter(self, provider_id: str, adapter: ProviderAdapter) -> None:
        self.register_provider(provider_id, adapter=adapter)

    def adapter(self, provider_id: str) -> ProviderAdapter | None:
        provider = self.providers.get(provider_id)
        return provider.adapter if provider else None

    def _register_entries(self, directory: Directory, parsed: Listing) -> list[ServiceEntry]:
        for pid, name in parsed.providers:
            self.register_provider(pid, name=name, directory_id=directory.id)
        entries = []
        for obj, provider_id, mode, payload_ref in parsed.entries:
            self.register_provider(provider_id, directory_id=directory.id)
            entry = ServiceEntry(obj, provider_id, directory.id, mode, payload_ref)
            self._parents[entry.id] = provider_id
            entries.append(entry)
        directory.entries = entries
        return entries

    # --- operations ---

    def import_directory(
        self,
        endpoint: str,
        declared_trust: int | None,
        kind: DirectoryKind = DirectoryKind.MARKETPLACE,
        parent: str | None = None,
    ) -> Directory:
        """Register the directory serving this endpoint and index its entries.

        Roots must declare a trust level; children discovered through a meta
        directory inherit instead. Re-importing a known endpoint refreshes it.
        """
        raw = self.transport.fetch(endpoint)
        parsed = parse_listing(raw)
        with self._lock:
            existing_id = self._endpoint_to_directory.get(endpoint)
            if existing_id is not None:
                directory = self.directories[existing_id]
                self._register_entries(directory, parsed)
                return directory
            if parsed.directory_id in self.directories:
                raise MalformedDirectory(
                    f"directory id {parsed.directory_id} is already registered from another endpoint"
                )
            if kind == DirectoryKind.DEVICE_LOCAL:
                declared_trust = 0
            directory = Directory(parsed.directory_id, endpoint, kind, parent=parent)
            self.directories[directory.id] = directory
            self._endpoint_to_directory[endpoint] = directory.id
            self._parents[directory.id] = parent
            if declared_trust is not None:
                self.trust.set_default(directory.id, declared_trust)
            self._register_entries(directory, parsed)
            return directory

    def discover_from_meta(self, directory_id: str) -> DiscoveryReport:
        """Register the child directories a meta directory lists.

        Children inherit the meta directory's trust through the hierarchy.
        Already-known endpoints are skipped, so re-running is idempotent;
        failures are reported per child."""
        meta = self.directories.get(directory_id)
        if meta is None:
            raise UnknownSubject(directory_id)
        parsed = parse_listing(self.transport.fetch(meta.endpoint))
        registered: list[Directory] = []
        failures: dict[str, str] = {}
        ancestor_endpoints = self._ancestor_endpoints(meta)
        for child_endpoint in parsed.child_endpoints:
            if child_endpoint in ancestor_endpoints:
                failures[child_endpoint] = f"CyclicDirectory: {CyclicDirectory(child_endpoint)}"
                continue
            if child_endpoint in self._endpoint_to_directory:
                continue  # duplicates are not re-registered
            try:
                child = self.import_directory(
                    child_endpoint, declared_trust=None, kind=meta.kind, parent=meta.id
                )
                registered.append(child)
            except (DirectoryUnavailable, MalformedDirectory) as exc:
                failures[child_endpoint] = f"{type(exc).__name__}: {exc}"
        return DiscoveryReport(tuple(registered), failures)

    def _ancestor_endpoints(self, directory: Directory) -> set[str]:
        endpoints = {directory.endpoint}
        node = directory
        while node.parent is not None:
            node = self.directories[node.parent]
            endpoints.add(node.endpoint)
        return endpoints

    def refresh_entries(self, directory_id: str) -> list[ServiceEntry]:
        """Live re-fetch of a directory's listing; raises DirectoryUnavailable."""
        directory = self.directories.get(directory_id)
        if directory is None:
            raise UnknownSubject(directory_id)
        if directory.kind == DirectoryKind.DEVICE_LOCAL:
            return list(directory.entries)
        raw = self.transport.fetch(directory.endpoint)
        parsed = parse_listing(raw)
        if parsed.directory_id != directory.id:
            raise MalformedDirectory(
                f"endpoint {directory.endpoint} now serves directory {parsed.directory_id}"
            )
        with self._lock:
            return list(self._register_entries(directory, parsed))

    def views(self, directory_id: str) -> dict[str, list[ServiceEntry]]:
        """Partition a directory's entries into per-kind views (software,
        data, resource, plus one view per unknown kind tag)."""
        directory = self.directories.get(directory_id)
        if directory is None:
            raise UnknownSubject(directory_id)
        partition: dict[str, list[ServiceEntry]] = {"software": [], "data": [], "resource": []}
        for entry in directory.entries:
            partition.setdefault(entry.object.kind.tag, []).append(entry)
        return partition

    def search(
        self,
        query: str,
        kind: ObjectKind | str | None = None,
        max_trust: int | None = None,
    ) -> SearchResult:
        """Case-insensitive substring search over names and function texts of
        every registered directory, mirrors standing in for unreachable ones."""
        wanted_kind = kind.tag if isinstance(kind, ObjectKind) else kind
        needle = query.lower()
        warnings: list[str] = []
        matched: list[SearchHit] = []
        for directory in list(self.directories.values()):
            try:
                entries = self.refresh_entries(directory.id)
            except (DirectoryUnavailable, MalformedDirectory) as exc:
                mirror = self.mirrors.get(directory.id)
                if mirror is None:
                    warnings.append(f"{directory.id}: skipped, {type(exc).__name__}: {exc}")
                    continue
                warnings.append(f"{directory.id}: served from mirror taken at {mirror.taken_at}")
                entries = list(mirror.entries)
                with self._lock:
                    for entry in entries:
                        self.register_provider(entry.provider, directory_id=directory.id)
                        self._parents[entry.id] = entry.provider
            for entry in entries:
                obj = entry.object
                if wanted_kind is not None and obj.kind.tag != wanted_kind:
                    continue
                function = obj.description.function or ""
                if needle and needle not in obj.name.lower() and needle not in function.lower():
                    continue
                trust = self.effective_trust(entry.id)
                if max_trust is not None and trust > max_trust:
                    continue
                matched.append(SearchHit(entry, trust))
        by_id = {hit.entry.id: hit for hit in matched}
        ordered = preference_order(
            [(hit.entry.id, hit.entry.object.description) for hit in matched],
            lambda subject: by_id[subject].trust,
        )
        return SearchResult(tuple(by_id[subject] for subject, _ in ordered), tuple(warnings))

    def advertise(
        self,
        obj: DigitalObject,
        directory_id: str,
        mode: AdvertiseMode,
        payload: bytes | None = None,
        as_provider: str | None = None,
    ) -> ServiceEntry:
        """Register an own object in a directory, as a link or as an export.

        Export uploads the payload through the advertising provider's
        adapter and records the reference; link registers metadata only."""
        violations = validate_description(obj.description)
        if violations:
            raise InvalidDescription(violations)
        directory = self.directories.get(directory_id)
        if directory is None:
            raise UnknownSubject(directory_id)
        trust = self.effective_trust(directory_id)
        if not obj.license.allows_placement_at(trust):
            raise LicenseViolation(
                f"license {obj.license.tag.value} allows trust <= "
                f"{obj.license.replication_allowed_to}, directory {directory_id} is at {trust}"
            )
        provider_id = as_provider or self.self_provider_id
        payload_ref = None
        if mode == AdvertiseMode.EXPORT:
            if payload is None:
                raise TransferFailed("export advertising needs the payload bytes")
            adapter = self.adapter(provider_id)
            if adapter is None:
                raise TransferFailed(f"no adapter bound for provider {provider_id}")
            payload_ref = f"exports/{obj.id}"
            adapter.put(payload_ref, payload)
        entry = ServiceEntry(obj, provider_id, directory_id, mode, payload_ref)
        with self._lock:
            if directory.kind == DirectoryKind.DEVICE_LOCAL:
                directory.entries = [e for e in directory.entries if e.id != entry.id] + [entry]
            else:
                parsed = parse_listing(self.transport.fetch(directory.endpoint))
                existing = self._register_entries(directory, parsed)
                existing = [e for e in existing if e.id != entry.id] + [entry]
                providers = {pid: name for pid, name in parsed.providers}
                providers.setdefault(provider_id, provider_id)
                self.transport.store(
                    directory.endpoint,
                    encode_listing(
                        directory.id,
                        parsed.child_endpoints,
                        sorted(providers.items()),
                        existing,
                    ),
                )
                directory.entries = existing
            self.register_provider(provider_id, directory_id=directory_id)
            self._parents[entry.id] = provider_id
        return entry

    def add_personal_entry(self, obj: DigitalObject, payload_ref: str | None = None) -> ServiceEntry:
        """Place an object in the device-local directory (trust 0), bypassing
        description validation: localized foreign objects keep whatever
        description they came with."""
        entry = ServiceEntry(
            obj, self.self_provider_id, self.personal_directory_id, AdvertiseMode.LINK, payload_ref
        )
        with self._lock:
            personal = self.directories[self.personal_directory_id]
            personal.entries = [e for e in personal.entries if e.id != entry.id] + [entry]
            self._parents[entry.id] = self.self_provider_id
        return entry

    def remove_personal_entry(self, object_id: str) -> None:
        with self._lock:
            personal = self.directories[self.personal_directory_id]
            personal.entries = [e for e in personal.entries if e.object.id != object_id]

    def mirror(self, directory_id: str) -> MirrorState:
        """Snapshot a directory's listing bit-exact into the version store.

        Mirroring unchanged content reuses the previous commit; a changed
        listing becomes a child commit of the prior mirror."""
        directory = self.directories.get(directory_id)
        if directory is None:
            raise UnknownSubject(directory_id)
        if directory.kind == DirectoryKind.DEVICE_LOCAL:
            raw = encode_listing(directory.id, (), (), directory.entries)
        else:
            raw = self.transport.fetch(directory.endpoint)
        parsed = parse_listing(raw)
        commit, _ = self.store.commit_if_changed(
            f"mirror::{directory_id}", raw, message=f"mirror of {directory_id}"
        )
        entries = tuple(
            ServiceEntry(obj, provider, directory_id, mode, payload_ref)
            for obj, provider, mode, payload_ref in parsed.entries
        )
        state = MirrorState(directory_id, raw, entries, self.clock.now(), commit.id)
        with self._lock:
            self.mirrors[directory_id] = state
        return state

    # --- availability ---

    def _probe_adapter(self, adapter: ProviderAdapter) -> tuple[bool, str, float]:
        started = self.clock.now()
        try:
            ok, detail = bool(adapter.probe()), ""
        except TransferFailed as exc:  # includes Unreachable
            ok, detail = False, str(exc)
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        return ok, detail, self.clock.now() - started

    def probe_all(
        self, provider_ids: Sequence[str] | None = None, timeout_s: float | None = None
    ) -> dict[str, AvailabilityRecord]:
        """Probe providers concurrently (bounded by the probe pool), never
        blocking past the timeout per provider.

        Unreachable is a result here, not an error; providers without a
        bound adapter report unreachable."""
        timeout = self.probe_timeout_s if timeout_s is None else timeout_s
        ids = list(provider_ids) if provider_ids is not None else sorted(self.providers)
        records: dict[str, AvailabilityRecord] = {}
        futures = {}
        for pid in ids:
            adapter = self.adapter(pid)
            if adapter is None:
                records[pid] = AvailabilityRecord(
                    pid, False, None, self.clock.now(), "no adapter bound"
                )
            else:
                futures[pid] = self._probe_pool.submit(self._probe_adapter, adapter)
        for pid, future in futures.items():
            try:
                ok, detail, elapsed = future.result(timeout=max(timeout, 0.05))
            except FuturesTimeoutError:
                # the worker is abandoned; pool size bounds the leak
                records[pid] = AvailabilityRecord(
                    pid, False, timeout * 1000.0, self.clock.now(), f"probe exceeded {timeout}s"
                )
                continue
            if ok and elapsed > timeout:
                ok, detail = False, f"probe exceeded {timeout}s"
            records[pid] = AvailabilityRecord(pid, ok, elapsed * 1000.0, self.clock.now(), detail)
        return records

    def probe(self, provider_id: str, timeout_s: float | None = None) -> AvailabilityRecord:
        return self.probe_all([provider_id], timeout_s)[provider_id]
