"""The control centre daemon core.

One mutation queue, an append-only activity history, and a JSON snapshot:
every state change in the system enters through exactly one Command, is
serialized behind the write lock, lands in the event log (failures
included) and is persisted before the next command runs. Read commands
(search, status) bypass the queue entirely and never wait on transfers.

Authorization is fail-closed: the configured owner may do everything,
other logged-in principals get read verbs, public-open reads, whatever the
ACL rule sets grant them, and whatever virtual-object shares grant them.

Persistence layout under the state directory (PICTL_HOME, default
~/.picontrol): state.json (snapshot, written atomically), events.jsonl
(append-only), sessions.json, store/ (version store), localstore/ (the
device's own payload storage).
"""

from __future__ import annotations

import base64
import json
import os
import queue
import random
import secrets
import threading
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from . import accesscontrol
from .accesscontrol import (
    AccessControlSet,
    AccessRule,
    Effect,
    Principal,
    PrincipalDirectory,
    PrincipalKind,
    acl_object,
    acl_object_id,
    canonical_acl_bytes,
)
from .clock import Clock, SystemClock
from .errors import (
    CorruptState,
    NotFound,
    PiControlError,
    TransferFailed,
    Unauthorized,
    UnknownObject,
)
from .federation import (
    AdvertiseMode,
    AvailabilityRecord,
    Directory,
    DirectoryKind,
    FederationRegistry,
    MirrorState,
    ServiceEntry,
    Transport,
    parse_listing,
)
from .model import (
    DigitalObject,
    object_from_manifest,
    object_to_manifest,
)
from .planner import (
    AvailabilityContext,
    Contract,
    ContractKind,
    Plan,
    PlanExecutor,
    PlanIntent,
    RetryPolicy,
    plan_backup,
    plan_deployment,
    refresh_context,
)
from .providers import (
    LocalFilesystemProvider,
    ProviderAdapter,
    ScriptedProvider,
    scripted_provider_from_config,
)
from .replication import (
    Location,
    MigrationMode,
    Replica,
    ReplicaState,
    ReplicationEngine,
    Scope,
)
from .trust import TrustTable, effective_assignment
from .versionstore import Commit, HistoryRef, VersionStore, sync_pair

SNAPSHOT_FORMAT = 1

READ_VERBS = frozenset({"search", "status"})

MUTATING_VERBS = frozenset({
    "import_directory", "discover", "mirror", "advertise",
    "replicate", "migrate", "localize",
    "plan_backup", "plan_deploy", "execute_plan",
    "set_trust", "share_access", "revoke_share",
    "propagate_acl", "set_acl", "add_principal",
    "commit", "rollback", "resolve", "sync",
    "add_object", "add_provider", "add_contract",
    "refresh_context",
})

# verb -> (argument naming the subject object, ACL action); verbs not listed
# here are system-level and owner-only unless a rule allows "system:<verb>"
OBJECT_VERB_ACTIONS = {
    "advertise": ("object_id", "share"),
    "replicate": ("object_id", "write"),
    "migrate": ("object_id", "write"),
    "plan_backup": ("object_id", "write"),
    "plan_deploy": ("object_id", "deploy"),
    "share_access": ("resource_id", "share"),
    "commit": ("object_id", "write"),
    "rollback": ("object_id", "write"),
    "resolve": ("object_id", "write"),
    "sync": ("object_id", "write"),
}

OPEN_VERBS = frozenset({"add_object"}) | READ_VERBS  # any authenticated principal


@dataclass(frozen=True)
class Command:
    verb: str
    arguments: Mapping[str, object] = field(default_factory=dict)
    token: str | None = None
    issuer: str | None = None  # must match the session principal when given
    id: str | None = None


@dataclass(frozen=True)
class ActivityEvent:
    seq: int
    timestamp: float
    command_id: str
    subject: str
    outcome: str  # "ok" or the domain error class name
    details: dict

    def to_dict(self) -> dict:
        return {
            "seq": self.seq, "timestamp": self.timestamp, "command_id": self.command_id,
            "subject": self.subject, "outcome": self.outcome, "details": self.details,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ActivityEvent":
        return cls(
            data["seq"], data["timestamp"], data["command_id"],
            data["subject"], data["outcome"], dict(data.get("details") or {}),
        )


@dataclass(frozen=True)
class CommandResult:
    command_id: str
    verb: str
    ok: bool
    result: object = None
    error_type: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        out = {"command_id": self.command_id, "verb": self.verb, "ok": self.ok, "result": self.result}
        if not self.ok:
            out["error"] = {"type": self.error_type, "message": self.error}
        return out


GAP_MARKER = {"gap": True}


class Subscription:
    """Bounded live feed; overflow drops events and surfaces a gap marker."""

    def __init__(self, maxsize: int = 256):
        self._queue: queue.Queue = queue.Queue(maxsize=maxsize)
        self._dropped = 0
        self._lock = threading.Lock()
        self.closed = False

    def publish(self, event: ActivityEvent) -> None:
        with self._lock:
            if self._dropped:
                try:
                    self._queue.put_nowait(dict(GAP_MARKER, dropped=self._dropped, before_seq=event.seq))
                    self._dropped = 0
                except queue.Full:
                    self._dropped += 1
                    return
            try:
                self._queue.put_nowait(event.to_dict())
            except queue.Full:
                self._dropped += 1

    def get(self, timeout: float | None = None) -> dict | None:
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            # drops at the stream tail surface once the consumer catches up
            with self._lock:
                if self._dropped:
                    marker = dict(GAP_MARKER, dropped=self._dropped)
                    self._dropped = 0
                    return marker
            return None


class EventLog:
    """Append-only JSONL activity history with live fan-out."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()
        self._subscribers: list[Subscription] = []
        self.events: list[ActivityEvent] = []
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        for line in self.path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                self.events.append(ActivityEvent.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError):
                break  # a torn final line from a crash is dropped, never parsed past

    @property
    def next_seq(self) -> int:
        return self.events[-1].seq + 1 if self.events else 1

    def append(self, command_id: str, subject: str, outcome: str, details: dict,
               timestamp: float) -> ActivityEvent:
        with self._lock:
            event = ActivityEvent(self.next_seq, timestamp, command_id, subject, outcome, details)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")
                fh.flush()
            self.events.append(event)
            for sub in list(self._subscribers):
                if not sub.closed:
                    sub.publish(event)
            return event

    def subscribe(self) -> Subscription:
        sub = Subscription()
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        sub.closed = True
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)


class SessionStore:
    """Local login tokens; possession of the state directory is the trust root."""

    def __init__(self, path: Path):
        self.path = path
        self.tokens: dict[str, str] = {}
        if path.exists():
            try:
                self.tokens = dict(json.loads(path.read_text(encoding="utf-8")))
            except (json.JSONDecodeError, ValueError):
                self.tokens = {}

    def _save(self) -> None:
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_text(json.dumps(self.tokens, sort_keys=True), encoding="utf-8")
        os.replace(tmp, self.path)

    def login(self, principal: str) -> str:
        token = secrets.token_hex(16)
        self.tokens[token] = principal
        self._save()
        return token

    def logout(self, token: str) -> None:
        if self.tokens.pop(token, None) is not None:
            self._save()

    def principal_for(self, token: str | None) -> str | None:
        if token is None:
            return None
        return self.tokens.get(token)


def _atomic_write_json(path: Path, data: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True, indent=1)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))


class ControlService:
    def __init__(
        self,
        home: Path | str,
        clock: Clock | None = None,
        transport: Transport | None = None,
        config: Mapping[str, object] | None = None,
        rng: random.Random | None = None,
    ):
        self.home = Path(home)
        self.home.mkdir(parents=True, exist_ok=True)
        self.clock = clock or SystemClock()
        self.rng = rng or random.Random()

        file_config = {}
        config_path = self.home / "config.json"
        if config_path.exists():
            file_config = json.loads(config_path.read_text(encoding="utf-8"))
        self.config = {**file_config, **(config or {})}
        self.owner = str(self.config.get("owner", "owner"))

        self.store = VersionStore(self.home / "store", clock=self.clock, author=self.owner)
        self.trust = TrustTable()
        self.registry = FederationRegistry(
            self.trust,
            self.store,
            transport=transport,
            clock=self.clock,
            probe_timeout_s=float(self.config.get("probe_timeout_s", 5.0)),
        )
        self.catalog: dict[str, DigitalObject] = {}
        self.owners: dict[str, str] = {}
        self.engine = ReplicationEngine(
            self.registry, self.store, self.clock,
            catalog=self.catalog, owners=self.owners, on_event=self._inner_event,
        )
        self.contracts: dict[str, Contract] = {}
        self.plans: dict[str, Plan] = {}
        self.acls: dict[str, AccessControlSet] = {}
        self.principals = PrincipalDirectory()
        self.principals.add(Principal(self.owner))
        self.context = AvailabilityContext(
            {}, float(self.config.get("staleness_bound_s", 300.0))
        )
        self._adapter_configs: dict[str, dict] = {}
        self._counters = {"plan": 0}

        self.events = EventLog(self.home / "events.jsonl")
        self.sessions = SessionStore(self.home / "sessions.json")
        self._write_lock = threading.RLock()
        self._command_lock = threading.Lock()
        self._current_command_id = "boot"

        snapshot_path = self.home / "state.json"
        if snapshot_path.exists():
            self._load_snapshot_file(snapshot_path)
        else:
            self._bind_default_local_adapter()

        self.executor = PlanExecutor(
            self.registry.adapter,
            self._payload_of,
            self.clock,
            rng=self.rng,
            on_event=self._inner_event,
            retry=RetryPolicy(
                attempts=int(self.config.get("retry_attempts", 3)),
                base_delay_s=float(self.config.get("retry_base_delay_s", 1.0)),
            ),
        )

    # --- wiring helpers ---

    def _bind_default_local_adapter(self) -> None:
        root = self.home / "localstore"
        root.mkdir(exist_ok=True)
        self.registry.bind_adapter(
            self.registry.self_provider_id, LocalFilesystemProvider(root)
        )
        self._adapter_configs[self.registry.self_provider_id] = {
            "type": "local_fs", "root": str(root),
        }

    def _payload_of(self, object_id: str) -> bytes:
        heads = self.store.heads(object_id)
        if heads:
            return self.store.checkout(object_id, sorted(heads)[0])
        for replica in self.engine.live_replicas(object_id):
            adapter = self.registry.adapter(replica.provider_id)
            if adapter is not None:
                try:
                    return adapter.get(replica.uri)
                except PiControlError:
                    continue
        raise UnknownObject(f"no local payload for {object_id}")

    def _inner_event(self, event_type: str, subject: str, details: dict) -> None:
        self.events.append(
            self._current_command_id, subject, event_type, details, self.clock.now()
        )

    def _next_plan_id(self) -> str:
        self._counters["plan"] += 1
        return f"plan-{self._counters['plan']}"

    # --- sessions & authorization ---

    def login(self, principal: str) -> str:
        if principal != self.owner and principal not in self.principals.principals:
            raise Unauthorized(f"unknown principal {principal}")
        return self.sessions.login(principal)

    def _combined_rules(self) -> AccessControlSet:
        rules = tuple(r for acl in self.acls.values() for r in acl.rules)
        return AccessControlSet("__combined__", rules)

    def _authorize(self, principal: str, verb: str, arguments: Mapping) -> None:
        if principal == self.owner or verb in OPEN_VERBS:
            return
        acl = self._combined_rules()
        principal_obj = self.principals.principals.get(principal, Principal(principal))
        if verb in OBJECT_VERB_ACTIONS:
            subject_arg, action = OBJECT_VERB_ACTIONS[verb]
            object_id = str(arguments.get(subject_arg, ""))
            obj = self.catalog.get(object_id)
            if obj is not None:
                decision = accesscontrol.authorize(
                    principal_obj, obj, action, acl, self.principals, logged_in=True
                )
                if decision.allowed:
                    return
                if decision.basis == "rule":  # explicit deny: nothing overrides it
                    raise Unauthorized(f"{principal} denied {action} on {object_id} by rule")
            for virtual in self.engine.virtual_objects.values():
                if virtual.resource_id == object_id and virtual.permits(principal, action):
                    return
            raise Unauthorized(f"{principal} may not {action} {object_id or verb}")
        if verb == "execute_plan":
            plan = self.plans.get(str(arguments.get("plan_id", "")))
            if plan is not None:
                action = "deploy" if plan.intent == PlanIntent.DEPLOY else "write"
                obj = self.catalog.get(plan.object_id)
                if obj is not None and accesscontrol.authorize(
                    principal_obj, obj, action, acl, self.principals, logged_in=True
                ).allowed:
                    return
            raise Unauthorized(f"{principal} may not execute plans")
        # system verbs: a rule on the synthetic subject "system:<verb>" can delegate them
        matching = [
            r for r in acl.sorted_rules()
            if r.principal in ({principal} | self.principals.groups_containing(principal))
            and r.action == "write" and r.matches_object(f"system:{verb}")
        ]
        if any(r.effect == Effect.DENY for r in matching):
            raise Unauthorized(f"{principal} denied system verb {verb}")
        if any(r.effect == Effect.ALLOW for r in matching):
            return
        raise Unauthorized(f"system verb {verb} is reserved to the owner")

    # --- the command queue ---

    def handle(self, command: Command) -> CommandResult:
        verb = command.verb
        if verb in READ_VERBS:
            return self._handle_inner(command)
        if verb not in MUTATING_VERBS:
            command_id = command.id or f"c{self.events.next_seq}"
            self.events.append(
                command_id, verb, "UnknownVerb", {"verb": verb}, self.clock.now()
            )
            return CommandResult(command_id, verb, False, None, "UnknownVerb", f"no such verb: {verb}")
        with self._write_lock:
            result = self._handle_inner(command)
            self._save()
            return result

    def _handle_inner(self, command: Command) -> CommandResult:
        verb = command.verb
        command_id = command.id or f"c{self.events.next_seq}"
        arguments = dict(command.arguments or {})
        principal = self.sessions.principal_for(command.token)
        subject = str(
            arguments.get("object_id")
            or arguments.get("resource_id")
            or arguments.get("directory_id")
            or arguments.get("endpoint")
            or arguments.get("plan_id")
            or arguments.get("subject")
            or arguments.get("query")
            or verb
        )
        if principal is None or (command.issuer is not None and command.issuer != principal):
            self.events.append(
                command_id, subject, "Unauthorized",
                {"verb": verb, "reason": "no session" if principal is None else "issuer mismatch"},
                self.clock.now(),
            )
            return CommandResult(command_id, verb, False, None, "Unauthorized", "login required")
        try:
            self._authorize(principal, verb, arguments)
        except Unauthorized as exc:
            self.events.append(
                command_id, subject, "Unauthorized",
                {"verb": verb, "principal": principal, "reason": str(exc)}, self.clock.now(),
            )
            return CommandResult(command_id, verb, False, None, "Unauthorized", str(exc))

        handler = getattr(self, f"_cmd_{verb}")
        previous = self._current_command_id
        self._current_command_id = command_id
        try:
            result = handler(arguments, principal)
        except PiControlError as exc:
            self.events.append(
                command_id, subject, type(exc).__name__,
                {"verb": verb, "principal": principal, "error": str(exc)}, self.clock.now(),
            )
            return CommandResult(command_id, verb, False, None, type(exc).__name__, str(exc))
        finally:
            self._current_command_id = previous
        self.events.append(
            command_id, subject, "ok", {"verb": verb, "principal": principal}, self.clock.now()
        )
        return CommandResult(command_id, verb, True, result)

    # --- verb handlers ---

    def _cmd_add_object(self, args: Mapping, principal: str):
        obj = object_from_manifest(args["manifest"])
        payload = None
        if args.get("payload_b64") is not None:
            payload = _unb64(str(args["payload_b64"]))
        elif args.get("payload_path"):
            payload = Path(str(args["payload_path"])).read_bytes()
        commit = self.engine.register_object(obj, owner=principal, payload=payload)
        self.registry.add_personal_entry(obj)
        if payload is not None:
            local = self.registry.adapter(self.registry.self_provider_id)
            if local is not None:
                uri = f"objects/{obj.id}"
                local.put(uri, payload)
                self.engine.replicas[(obj.id, self.registry.self_provider_id)] = Replica(
                    obj.id, self.registry.self_provider_id, uri,
                    commit.id if commit else None, ReplicaState.LIVE,
                    commit.blob if commit else None,
                )
        return {"object": object_to_manifest(obj), "commit": commit.id if commit else None}

    def _cmd_add_provider(self, args: Mapping, principal: str):
        provider_id = str(args["id"])
        adapter = None
        adapter_config = args.get("adapter")
        if adapter_config:
            adapter = self._build_adapter(dict(adapter_config))
            self._adapter_configs[provider_id] = dict(adapter_config)
        self.registry.register_provider(
            provider_id, name=str(args.get("name", "")), directory_id=args.get("directory"),
            adapter=adapter,
        )
        if args.get("trust") is not None:
            self.trust.set_default(provider_id, int(args["trust"]))
        return {"id": provider_id, "trust": args.get("trust")}

    def _build_adapter(self, config: dict) -> ProviderAdapter:
        kind = config.get("type")
        if kind == "local_fs":
            root = Path(str(config["root"]))
            if not root.is_absolute():
                root = self.home / root
            root.mkdir(parents=True, exist_ok=True)
            return LocalFilesystemProvider(root)
        if kind == "scripted":
            return scripted_provider_from_config(
                dict(config.get("config") or {}), self.clock, name=str(config.get("name", "scripted"))
            )
        raise PiControlError(f"unknown adapter type {kind!r}")

    def _cmd_add_contract(self, args: Mapping, principal: str):
        contract = Contract(
            str(args["id"]), str(args["provider_id"]), ContractKind(args["kind"]),
            dict(args.get("properties") or {}), args.get("valid_from"), args.get("valid_to"),
        )
        if contract.provider_id not in self.registry.providers:
            raise UnknownObject(f"provider {contract.provider_id} is not registered")
        self.contracts[contract.id] = contract
        return contract.to_dict()

    def _cmd_import_directory(self, args: Mapping, principal: str):
        kind = DirectoryKind(args.get("kind", "marketplace"))
        directory = self.registry.import_directory(
            str(args["endpoint"]), int(args["trust"]), kind=kind
        )
        return self._directory_dict(directory)

    def _cmd_discover(self, args: Mapping, principal: str):
        report = self.registry.discover_from_meta(str(args["directory_id"]))
        return {
            "registered": [self._directory_dict(d) for d in report.registered],
            "failures": dict(report.failures),
        }

    def _cmd_mirror(self, args: Mapping, principal: str):
        state = self.registry.mirror(str(args["directory_id"]))
        return {
            "directory_id": state.directory_id, "version": state.version,
            "taken_at": state.taken_at, "entries": len(state.entries),
        }

    def _cmd_search(self, args: Mapping, principal: str):
        result = self.registry.search(
            str(args.get("query", "")), kind=args.get("kind") or None,
            max_trust=None if args.get("max_trust") is None else int(args["max_trust"]),
        )
        return {
            "results": [self._hit_dict(h) for h in result.hits],
            "warnings": list(result.warnings),
        }

    def _cmd_advertise(self, args: Mapping, principal: str):
        object_id = str(args["object_id"])
        obj = self.catalog.get(object_id)
        if obj is None:
            raise UnknownObject(object_id)
        mode = AdvertiseMode(args.get("mode", "link"))
        payload = self._payload_of(object_id) if mode == AdvertiseMode.EXPORT else None
        entry = self.registry.advertise(obj, str(args["directory_id"]), mode, payload=payload)
        return self._entry_dict(entry)

    def _find_offer(self, object_id: str):
        """Trust-preferred directory entry offering this object, if any."""
        best = None
        for directory in self.registry.directories.values():
            for entry in directory.entries:
                if entry.object.id != object_id:
                    continue
                try:
                    trust = self.registry.effective_trust(entry.id)
                except PiControlError:
                    continue
                if best is None or trust < best[1]:
                    best = (entry, trust)
        return best

    def _cmd_replicate(self, args: Mapping, principal: str):
        object_id = str(args["object_id"])
        source = None
        if args.get("source"):
            source = Location(str(args["source"]["provider_id"]), str(args["source"]["uri"]))
        obj = None
        source_trust = None
        if object_id not in self.catalog or (source is None and not self.store.heads(object_id)):
            # a foreign directory offer: pull it from its advertising provider
            offer = self._find_offer(object_id)
            if offer is not None:
                entry, trust = offer
                obj = entry.object
                if source is None:
                    source = Location(entry.provider, entry.payload_ref or f"objects/{object_id}")
                    source_trust = trust
        replica = self.engine.replicate(
            object_id, str(args["to_provider"]), source=source, obj=obj,
            caller=principal, source_trust=source_trust,
        )
        return self._replica_dict(replica)

    def _cmd_migrate(self, args: Mapping, principal: str):
        destination = Location(
            str(args["destination"]["provider_id"]), str(args["destination"]["uri"])
        )
        source = None
        if args.get("source"):
            source = Location(str(args["source"]["provider_id"]), str(args["source"]["uri"]))
        mode = MigrationMode.ACCESS if args.get("access") else MigrationMode.PHYSICAL
        ticket = self.engine.migrate(
            str(args["object_id"]), destination, source=source, mode=mode, caller=principal
        )
        return self._ticket_dict(ticket)

    def _cmd_localize(self, args: Mapping, principal: str):
        report = self.engine.localize(
            str(args.get("query", "")), kind=args.get("kind") or None, caller=principal
        )
        return {
            "items": [
                {
                    "object_id": i.object_id, "directory": i.directory, "provider": i.provider,
                    "status": i.status, "error": i.error, "transferred": i.transferred,
                }
                for i in report.items
            ],
            "mirror_warnings": list(report.mirror_warnings),
            "transfers": report.transfers,
        }

    def _cmd_plan_backup(self, args: Mapping, principal: str):
        object_id = str(args["object_id"])
        obj = self.catalog.get(object_id)
        if obj is None:
            raise UnknownObject(object_id)
        contracts = sorted(self.contracts.values(), key=lambda c: c.id)
        self._ensure_context([c.provider_id for c in contracts if c.kind == ContractKind.STORAGE])
        plan = plan_backup(
            obj, contracts, self.context, self.clock.now(), self._next_plan_id(),
            self._trust_of_provider, k_override=args.get("k"),
        )
        self.plans[plan.id] = plan
        return plan.to_dict()

    def _cmd_plan_deploy(self, args: Mapping, principal: str):
        object_id = str(args["object_id"])
        obj = self.catalog.get(object_id)
        if obj is None:
            raise UnknownObject(object_id)
        contracts = sorted(self.contracts.values(), key=lambda c: c.id)
        self._ensure_context([c.provider_id for c in contracts])
        plan = plan_deployment(
            obj, self.catalog, contracts, self.context, self.clock.now(),
            self._next_plan_id(), self._trust_of_provider,
        )
        self.plans[plan.id] = plan
        return plan.to_dict()

    def _cmd_execute_plan(self, args: Mapping, principal: str):
        plan = self.plans.get(str(args["plan_id"]))
        if plan is None:
            raise UnknownObject(str(args["plan_id"]))
        providers = sorted({s.provider_id for s in plan.steps if s.provider_id})
        self._ensure_context(providers, force=True)
        report = self.executor.execute(plan, self.context)
        return {
            "plan_id": report.plan_id, "executed": list(report.executed),
            "skipped": list(report.skipped), "failed": dict(report.failed),
            "degraded": report.degraded, "completed": report.completed,
        }

    def _cmd_refresh_context(self, args: Mapping, principal: str):
        providers = args.get("providers")
        self.context = refresh_context(
            self.registry,
            list(providers) if providers else None,
            args.get("timeout_s"),
            staleness_bound_s=self.context.staleness_bound_s,
        )
        return {
            pid: self._record_dict(record) for pid, record in sorted(self.context.records.items())
        }

    def _cmd_set_trust(self, args: Mapping, principal: str):
        subject = str(args["subject"])
        level = args.get("level")
        self.registry.set_trust(subject, None if level is None else int(level))
        assignment = effective_assignment(subject, self.registry, self.trust)
        return {"subject": subject, "level": assignment.level, "source": assignment.source.value}

    def _cmd_share_access(self, args: Mapping, principal: str):
        scope_args = dict(args.get("scope") or {})
        if scope_args.get("paths"):
            scope = Scope.subpaths(*scope_args["paths"])
        elif scope_args.get("byte_range"):
            start, end = scope_args["byte_range"]
            scope = Scope.byte_slice(int(start), int(end))
        else:
            scope = Scope.entire()
        virtual = self.engine.share_access(
            str(args["resource_id"]), str(args["grantee"]), scope,
            args.get("rights") or ["read"], caller=principal,
        )
        return self._virtual_dict(virtual)

    def _cmd_revoke_share(self, args: Mapping, principal: str):
        self.engine.revoke_share(str(args["virtual_id"]), caller=principal)
        return {"virtual_id": str(args["virtual_id"]), "revoked": True}

    def _cmd_set_acl(self, args: Mapping, principal: str):
        spec = args["acl"]
        acl = AccessControlSet(
            str(spec["id"]),
            tuple(
                AccessRule(r["principal"], r["pattern"], r["action"], Effect(r["effect"]))
                for r in spec.get("rules", [])
            ),
        )
        self.acls[acl.id] = acl
        obj = acl_object(acl)
        commit = self.engine.register_object(obj, owner=principal, payload=canonical_acl_bytes(acl))
        return {"acl_id": acl.id, "object_id": obj.id, "commit": commit.id if commit else None}

    def _cmd_propagate_acl(self, args: Mapping, principal: str):
        acl = self.acls.get(str(args["acl_id"]))
        if acl is None:
            raise UnknownObject(f"acl {args['acl_id']}")
        report = accesscontrol.propagate_acl(
            acl, [str(p) for p in args["providers"]], self.engine, self.store, caller=principal
        )
        return {
            "acl_id": report.acl_id,
            "items": [
                {
                    "provider_id": i.provider_id, "ok": i.ok, "commit_id": i.commit_id,
                    "transferred": i.transferred, "error": i.error,
                }
                for i in report.items
            ],
        }

    def _cmd_add_principal(self, args: Mapping, principal: str):
        new = Principal(
            str(args["id"]), PrincipalKind(args.get("kind", "user")),
            tuple(args.get("members") or ()),
        )
        self.principals.add(new)
        return {"id": new.id, "kind": new.kind.value, "members": list(new.members)}

    def _cmd_commit(self, args: Mapping, principal: str):
        object_id = str(args["object_id"])
        if object_id not in self.catalog:
            raise UnknownObject(object_id)
        payload = _unb64(str(args["payload_b64"]))
        commit = self.store.commit(
            object_id, payload,
            parents=args.get("parents"),
            author=principal, message=str(args.get("message", "")),
        )
        return {"commit": commit.id, "heads": list(self.store.heads(object_id))}

    def _cmd_rollback(self, args: Mapping, principal: str):
        commit = self.store.rollback(str(args["object_id"]), str(args["commit_id"]))
        return {"commit": commit.id, "heads": list(self.store.heads(str(args["object_id"])))}

    def _cmd_resolve(self, args: Mapping, principal: str):
        commit = self.store.resolve(
            str(args["object_id"]), str(args["chosen"]), [str(d) for d in args.get("discarded", [])]
        )
        return {"commit": commit.id, "heads": list(self.store.heads(str(args["object_id"])))}

    def _cmd_sync(self, args: Mapping, principal: str):
        object_id = str(args["object_id"])
        peer = str(args["peer"])
        if peer.startswith(("http://", "https://")):
            return self._sync_over_api(object_id, peer, args.get("peer_token"))
        peer_path = Path(peer)
        if (peer_path / "store" / "heads").is_dir():
            peer_path = peer_path / "store"
        peer_store = VersionStore(peer_path, clock=self.clock)
        report = sync_pair(HistoryRef(self.store, object_id), HistoryRef(peer_store, object_id))
        return {
            "object_id": report.object_id, "commits_transferred": report.commits_transferred,
            "blobs_transferred": report.blobs_transferred, "heads": list(report.heads),
        }

    def _sync_over_api(self, object_id: str, peer: str, peer_token: str | None):
        """Commit-id exchange then missing-object transfer, over the peer's API."""
        quoted = urllib.parse.quote(object_id, safe="")
        headers = {"Authorization": f"Bearer {peer_token}"} if peer_token else {}
        base = peer.rstrip("/")

        def get_json(path: str) -> dict:
            request = urllib.request.Request(base + path, headers=headers)
            with urllib.request.urlopen(request, timeout=30) as response:
                return json.loads(response.read().decode("utf-8"))

        try:
            remote = get_json(f"/v1/objects/{quoted}/commits")
        except OSError as exc:
            raise TransferFailed(f"peer {peer} unreachable: {exc}") from exc
        remote_commits = {cid: Commit(id=cid, parents=tuple(c["parents"]), blob=c["blob"],
                                      author=c["author"], timestamp=c["timestamp"],
                                      message=c["message"])
                          for cid, c in remote["commits"].items()}
        local_commits = self.store.reachable_commits(object_id)

        blobs_moved = 0
        push = {cid: c for cid, c in local_commits.items() if cid not in remote_commits}
        if push or set(remote["heads"]) != set(self.store.heads(object_id)):
            body = {
                "commits": {cid: c.to_dict() for cid, c in push.items()},
                "blobs": {
                    c.blob: _b64(self.store.get_blob(c.blob)) for c in push.values()
                },
            }
            request = urllib.request.Request(
                base + f"/v1/objects/{quoted}/commits",
                data=json.dumps(body).encode("utf-8"),
                headers={**headers, "Content-Type": "application/json"},
                method="POST",
            )
            try:
                with urllib.request.urlopen(request, timeout=30) as response:
                    pushed = json.loads(response.read().decode("utf-8"))
            except OSError as exc:
                raise TransferFailed(f"push to {peer} failed: {exc}") from exc
            blobs_moved += pushed.get("blobs_received", 0)

        pulled = 0
        for cid, commit in remote_commits.items():
            if cid in local_commits:
                continue
            payload = None
            if not self.store.has_blob(commit.blob):
                request = urllib.request.Request(base + f"/v1/blobs/{commit.blob}", headers=headers)
                try:
                    with urllib.request.urlopen(request, timeout=30) as response:
                        payload = response.read()
                except OSError as exc:
                    raise TransferFailed(f"blob fetch from {peer} failed: {exc}") from exc
            moved = self.store.import_commit(commit, payload)
            blobs_moved += int(moved)
            pulled += 1
        union = dict(local_commits)
        union.update(remote_commits)
        from .versionstore import _maximal

        self.store.set_heads(object_id, _maximal(union))
        return {
            "object_id": object_id,
            "commits_transferred": len(push) + pulled,
            "blobs_transferred": blobs_moved,
            "heads": list(self.store.heads(object_id)),
        }

    def _cmd_status(self, args: Mapping, principal: str):
        return self.status()

    # --- reads ---

    def status(self) -> dict:
        now = self.clock.now()
        providers_by_kind: dict[str, set] = {}
        for contract in self.contracts.values():
            if contract.is_valid(now):
                providers_by_kind.setdefault(contract.kind.value, set()).add(contract.provider_id)
        return {
            "home": str(self.home),
            "owner": self.owner,
            "objects": len(self.catalog),
            "directories": len(self.registry.directories),
            "providers": len(self.registry.providers),
            "contracts": len(self.contracts),
            "replicas": len(self.engine.replicas),
            "plans": len(self.plans),
            "mirrors": len(self.registry.mirrors),
            "events": len(self.events.events),
            "last_seq": self.events.events[-1].seq if self.events.events else 0,
            "time": now,
            # the contract context, so clients can gate actions without local logic
            "context": {
                "storage_contracts": len(providers_by_kind.get("storage", ())),
                "compute_contracts": len(providers_by_kind.get("compute", ())),
            },
        }

    def history(
        self,
        subject: str | None = None,
        provider: str | None = None,
        since: float | None = None,
        until: float | None = None,
        since_seq: int | None = None,
    ) -> list[ActivityEvent]:
        out = []
        for event in self.events.events:
            if subject is not None and event.subject != subject:
                continue
            if provider is not None and not (
                event.subject == provider
                or event.details.get("provider") == provider
                or event.details.get("provider_id") == provider
            ):
                continue
            if since is not None and event.timestamp < since:
                continue
            if until is not None and event.timestamp > until:
                continue
            if since_seq is not None and event.seq <= since_seq:
                continue
            out.append(event)
        return out

    def objects(self) -> list[dict]:
        out = []
        for object_id in sorted(self.catalog):
            obj = self.catalog[object_id]
            replicas = [
                self._replica_dict(r)
                for (oid, _), r in sorted(self.engine.replicas.items())
                if oid == object_id
            ]
            out.append(
                {
                    "object": object_to_manifest(obj),
                    "owner": self.owners.get(object_id),
                    "heads": list(self.store.heads(object_id)),
                    "replicas": replicas,
                }
            )
        return out

    def directories(self) -> list[dict]:
        return [self._directory_dict(d) for d in self.registry.directories.values()]

    # --- dict shapes shared with the API ---

    def _trust_of_provider(self, provider_id: str) -> int:
        return self.registry.effective_trust(provider_id)

    def _ensure_context(self, providers: Iterable[str], force: bool = False) -> None:
        now = self.clock.now()
        missing = [
            p for p in providers
            if force or self.context._fresh(p, now) is None
        ]
        if missing:
            records = dict(self.context.records)
            records.update(self.registry.probe_all(missing))
            self.context = AvailabilityContext(records, self.context.staleness_bound_s)

    def _record_dict(self, record: AvailabilityRecord) -> dict:
        return {
            "provider_id": record.provider_id, "reachable": record.reachable,
            "latency_ms": record.latency_ms, "probed_at": record.probed_at,
            "detail": record.detail,
        }

    def _entry_dict(self, entry: ServiceEntry) -> dict:
        try:
            trust = self.registry.effective_trust(entry.id)
        except PiControlError:
            trust = None
        return {
            "entry_id": entry.id,
            "object": object_to_manifest(entry.object),
            "provider": entry.provider,
            "directory": entry.directory,
            "advertised_as": entry.advertised_as.value,
            "payload_ref": entry.payload_ref,
            "trust": trust,
        }

    def _hit_dict(self, hit) -> dict:
        out = self._entry_dict(hit.entry)
        out["trust"] = hit.trust
        return out

    def _directory_dict(self, directory: Directory) -> dict:
        try:
            trust = self.registry.effective_trust(directory.id)
        except PiControlError:
            trust = None
        return {
            "id": directory.id,
            "endpoint": directory.endpoint,
            "kind": directory.kind.value,
            "parent": directory.parent,
            "trust": trust,
            "entries": [self._entry_dict(e) for e in directory.entries],
            "mirrored": directory.id in self.registry.mirrors,
        }

    def _replica_dict(self, replica: Replica) -> dict:
        return {
            "object_id": replica.object_id, "provider_id": replica.provider_id,
            "uri": replica.uri, "commit_id": replica.commit_id,
            "state": replica.state.value, "digest": replica.digest,
        }

    def _ticket_dict(self, ticket) -> dict:
        return {
            "id": ticket.id, "object_id": ticket.object_id,
            "source": {"provider_id": ticket.source.provider_id, "uri": ticket.source.uri},
            "destination": {
                "provider_id": ticket.destination.provider_id, "uri": ticket.destination.uri,
            },
            "mode": ticket.mode.value, "status": ticket.status.value, "detail": ticket.detail,
        }

    def _virtual_dict(self, virtual) -> dict:
        return {
            "id": virtual.id, "resource_id": virtual.resource_id,
            "grantee": virtual.grantee, "rights": sorted(virtual.rights),
            "scope": {
                "whole": virtual.scope.whole, "paths": list(virtual.scope.paths),
                "byte_range": list(virtual.scope.byte_range) if virtual.scope.byte_range else None,
            },
        }

    # --- persistence ---

    def snapshot_dict(self) -> dict:
        registry = self.registry
        return {
            "format": SNAPSHOT_FORMAT,
            "counters": dict(self._counters),
            "engine_counters": {
                "ticket": self.engine._ticket_seq, "virtual": self.engine._virtual_seq,
            },
            "objects": [object_to_manifest(self.catalog[oid]) for oid in sorted(self.catalog)],
            "owners": dict(sorted(self.owners.items())),
            "directories": [
                {
                    "id": d.id, "endpoint": d.endpoint, "kind": d.kind.value, "parent": d.parent,
                    "entries": [
                        {
                            "object": object_to_manifest(e.object), "provider": e.provider,
                            "advertised_as": e.advertised_as.value, "payload_ref": e.payload_ref,
                        }
                        for e in d.entries
                    ],
                }
                for d in sorted(registry.directories.values(), key=lambda d: d.id)
            ],
            "providers": [
                {
                    "id": p.id, "name": p.name,
                    "adapter": self._adapter_configs.get(p.id),
                    "parent": registry._parents.get(p.id),
                }
                for p in sorted(registry.providers.values(), key=lambda p: p.id)
            ],
            "mirrors": [
                {
                    "directory_id": m.directory_id, "taken_at": m.taken_at, "version": m.version,
                }
                for m in sorted(registry.mirrors.values(), key=lambda m: m.directory_id)
            ],
            "trust": self.trust.to_dict(),
            "contracts": [self.contracts[cid].to_dict() for cid in sorted(self.contracts)],
            "replicas": [
                self._replica_dict(r) for _, r in sorted(self.engine.replicas.items())
            ],
            "tickets": [self._ticket_dict(self.engine.tickets[t]) for t in sorted(self.engine.tickets)],
            "virtual_objects": [
                self._virtual_dict(self.engine.virtual_objects[v])
                for v in sorted(self.engine.virtual_objects)
            ],
            "plans": [self.plans[pid].to_dict() for pid in sorted(self.plans)],
            "principals": self.principals.to_list(),
            "acls": [
                {
                    "id": acl.id,
                    "rules": [
                        {
                            "principal": r.principal, "pattern": r.pattern,
                            "action": r.action, "effect": r.effect.value,
                        }
                        for r in acl.sorted_rules()
                    ],
                }
                for acl in sorted(self.acls.values(), key=lambda a: a.id)
            ],
            "context": {
                "staleness_bound_s": self.context.staleness_bound_s,
                "records": [self._record_dict(r) for _, r in sorted(self.context.records.items())],
            },
            "heads": {oid: list(self.store.heads(oid)) for oid in self.store.object_ids()},
        }

    def _save(self) -> None:
        _atomic_write_json(self.home / "state.json", self.snapshot_dict())

    def _load_snapshot_file(self, path: Path) -> None:
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CorruptState("json", str(exc)) from exc
        if not isinstance(data, dict) or data.get("format") != SNAPSHOT_FORMAT:
            raise CorruptState("format", f"unsupported snapshot format {data.get('format')!r}")
        self._load_snapshot(data)

    def _load_snapshot(self, data: dict) -> None:
        def section(name: str):
            try:
                return data[name]
            except KeyError as exc:
                raise CorruptState(name, "missing section") from exc

        try:
            self._counters.update(section("counters"))
        except (TypeError, ValueError) as exc:
            raise CorruptState("counters", str(exc)) from exc

        try:
            for manifest in section("objects"):
                obj = object_from_manifest(manifest)
                self.catalog[obj.id] = obj
            self.owners.update(section("owners"))
        except PiControlError as exc:
            raise CorruptState("objects", str(exc)) from exc

        try:
            self.trust.overrides.update(section("trust").get("overrides", {}))
            self.trust.defaults.update(section("trust").get("defaults", {}))
        except AttributeError as exc:
            raise CorruptState("trust", str(exc)) from exc

        registry = self.registry
        try:
            for item in section("providers"):
                adapter = None
                if item.get("adapter"):
                    adapter = self._build_adapter(dict(item["adapter"]))
                    self._adapter_configs[item["id"]] = dict(item["adapter"])
                registry.register_provider(
                    item["id"], name=item.get("name", ""), directory_id=item.get("parent"),
                    adapter=adapter,
                )
                registry._parents[item["id"]] = item.get("parent")
        except (KeyError, TypeError, PiControlError) as exc:
            raise CorruptState("providers", str(exc)) from exc
        if self.registry.adapter(self.registry.self_provider_id) is None:
            self._bind_default_local_adapter()

        try:
            for item in section("directories"):
                kind = DirectoryKind(item["kind"])
                entries = []
                directory = Directory(item["id"], item["endpoint"], kind, item.get("parent"))
                for e in item.get("entries", []):
                    entry = ServiceEntry(
                        object_from_manifest(e["object"]), e["provider"], directory.id,
                        AdvertiseMode(e["advertised_as"]), e.get("payload_ref"),
                    )
                    entries.append(entry)
                directory.entries = entries
                registry.directories[directory.id] = directory
                registry._endpoint_to_directory[directory.endpoint] = directory.id
                registry._parents[directory.id] = item.get("parent")
                for entry in entries:
                    registry._parents.setdefault(entry.provider, directory.id)
                    registry._parents[entry.id] = entry.provider
        except (KeyError, TypeError, ValueError, PiControlError) as exc:
            raise CorruptState("directories", str(exc)) from exc

        try:
            for item in section("mirrors"):
                raw = self.store.checkout(f"mirror::{item['directory_id']}", item["version"])
                parsed = parse_listing(raw)
                entries = tuple(
                    ServiceEntry(obj, provider, item["directory_id"], mode, payload_ref)
                    for obj, provider, mode, payload_ref in parsed.entries
                )
                registry.mirrors[item["directory_id"]] = MirrorState(
                    item["directory_id"], raw, entries, item["taken_at"], item["version"]
                )
        except (KeyError, TypeError, PiControlError) as exc:
            raise CorruptState("mirrors", str(exc)) from exc

        try:
            for item in section("contracts"):
                contract = Contract.from_dict(item)
                self.contracts[contract.id] = contract
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptState("contracts", str(exc)) from exc

        try:
            for item in section("replicas"):
                replica = Replica(
                    item["object_id"], item["provider_id"], item["uri"],
                    item.get("commit_id"), ReplicaState(item["state"]), item.get("digest"),
                )
                self.engine.replicas[(replica.object_id, replica.provider_id)] = replica
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptState("replicas", str(exc)) from exc

        try:
            from .replication import MigrationTicket, TicketStatus, VirtualObject

            for item in section("tickets"):
                ticket = MigrationTicket(
                    item["id"], item["object_id"],
                    Location(item["source"]["provider_id"], item["source"]["uri"]),
                    Location(item["destination"]["provider_id"], item["destination"]["uri"]),
                    MigrationMode(item["mode"]), TicketStatus(item["status"]), item.get("detail", ""),
                )
                self.engine.tickets[ticket.id] = ticket
            for item in section("virtual_objects"):
                scope_data = item["scope"]
                scope = Scope(
                    scope_data["whole"], tuple(scope_data.get("paths") or ()),
                    tuple(scope_data["byte_range"]) if scope_data.get("byte_range") else None,
                )
                virtual = VirtualObject(
                    item["id"], item["resource_id"], scope, item["grantee"],
                    frozenset(item["rights"]),
                )
                self.engine.virtual_objects[virtual.id] = virtual
            engine_counters = section("engine_counters")
            self.engine._ticket_seq = int(engine_counters.get("ticket", 0))
            self.engine._virtual_seq = int(engine_counters.get("virtual", 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptState("tickets", str(exc)) from exc

        try:
            for item in section("plans"):
                plan = Plan.from_dict(item)
                self.plans[plan.id] = plan
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptState("plans", str(exc)) from exc

        try:
            directory = PrincipalDirectory.from_list(section("principals"))
            self.principals = directory
            if self.owner not in self.principals.principals:
                self.principals.add(Principal(self.owner))
        except (KeyError, TypeError, ValueError, PiControlError) as exc:
            raise CorruptState("principals", str(exc)) from exc

        try:
            for item in section("acls"):
                acl = AccessControlSet(
                    item["id"],
                    tuple(
                        AccessRule(r["principal"], r["pattern"], r["action"], Effect(r["effect"]))
                        for r in item.get("rules", [])
                    ),
                )
                self.acls[acl.id] = acl
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptState("acls", str(exc)) from exc

        try:
            context = section("context")
            records = {
                r["provider_id"]: AvailabilityRecord(
                    r["provider_id"], r["reachable"], r.get("latency_ms"),
                    r["probed_at"], r.get("detail", ""),
                )
                for r in context.get("records", [])
            }
            self.context = AvailabilityContext(records, context.get("staleness_bound_s", 300.0))
        except (KeyError, TypeError) as exc:
            raise CorruptState("context", str(exc)) from exc


def ingest_peer_commits(service: ControlService, object_id: str, commits: Mapping, blobs: Mapping) -> dict:
    """Server side of the sync wire format: import pushed commits and blobs,
    then recompute heads as the maximal commits of the union DAG."""
    received = 0
    for cid, item in commits.items():
        commit = Commit(
            id=cid, parents=tuple(item["parents"]), blob=item["blob"],
            author=item["author"], timestamp=item["timestamp"], message=item["message"],
        )
        payload = _unb64(blobs[commit.blob]) if commit.blob in blobs else None
        received += int(service.store.import_commit(commit, payload))
    union = service.store.reachable_commits(object_id)
    for cid in commits:
        stack = [cid]
        while stack:
            current = stack.pop()
            if current in union:
                continue
            commit = service.store.get_commit(current)
            union[current] = commit
            stack.extend(commit.parents)
    from .versionstore import _maximal

    service.store.set_heads(object_id, _maximal(union))
    return {"heads": list(service.store.heads(object_id)), "blobs_received": received}
