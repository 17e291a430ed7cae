"""Provider adapters: the uniform contract plus the two shipped backends.

Every storage/compute provider is reached through the same small surface
(put/get/list/delete/deploy/instance_status/probe). The local filesystem
adapter is the always-on personal store; the scripted adapter simulates a
remote provider whose reachability follows a virtual-clock schedule, with
optional latency and per-operation fault injection for tests and demos.

Real cloud SDK integrations plug in by subclassing ProviderAdapter; none
ship here.
"""

from __future__ import annotations

import abc
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .clock import Clock
from .errors import NotFound, NotSupported, TransferFailed, Unreachable


class ProviderAdapter(abc.ABC):
    """get(put(uri, x)) == x while the provider is reachable and the uri not deleted."""

    @abc.abstractmethod
    def put(self, uri: str, data: bytes) -> None: ...

    @abc.abstractmethod
    def get(self, uri: str) -> bytes: ...

    @abc.abstractmethod
    def list(self, prefix: str = "") -> list[str]: ...

    @abc.abstractmethod
    def delete(self, uri: str) -> None: ...

    def deploy(self, payload: bytes, descriptor: dict) -> str:
        raise NotSupported(f"{type(self).__name__} cannot deploy software")

    def instance_status(self, instance_id: str) -> str:
        raise NotSupported(f"{type(self).__name__} runs no instances")

    @abc.abstractmethod
    def probe(self) -> bool: ...


@dataclass(frozen=True)
class Window:
    start: float
    end: float | None  # None = open-ended
    state: str  # "up" | "down"

    def covers(self, t: float) -> bool:
        return t >= self.start and (self.end is None or t < self.end)


@dataclass(frozen=True)
class AvailabilitySchedule:
    """Ordered, non-overlapping windows over the virtual clock; outside any
    window the provider is up."""

    windows: tuple[Window, ...] = ()

    def __post_init__(self):
        previous_end: float | None = None
        for w in self.windows:
            if w.state not in ("up", "down"):
                raise ValueError(f"window state must be up or down, got {w.state!r}")
            if w.end is not None and w.end <= w.start:
                raise ValueError(f"window must end after it starts: {w}")
            if previous_end is None and self.windows[0] is not w:
                raise ValueError("an open-ended window must be the last one")
            if previous_end is not None and w.start < previous_end:
                raise ValueError(f"windows overlap or are unordered at {w}")
            previous_end = w.end
        object.__setattr__(self, "windows", tuple(self.windows))

    def state_at(self, t: float) -> str:
        for w in self.windows:
            if w.covers(t):
                return w.state
        return "up"

    @classmethod
    def always_up(cls) -> "AvailabilitySchedule":
        return cls(())

    @classmethod
    def always_down(cls) -> "AvailabilitySchedule":
        return cls((Window(0.0, None, "down"),))

    @classmethod
    def down_between(cls, start: float, end: float | None) -> "AvailabilitySchedule":
        return cls((Window(start, end, "down"),))


class LocalFilesystemProvider(ProviderAdapter):
    """Blob storage under a local root; always reachable, storage only."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        if not self.root.is_dir():
            raise TransferFailed(f"provider root does not exist: {self.root}")
        self._lock = threading.RLock()

    def _path(self, uri: str) -> Path:
        rel = Path(uri)
        if rel.is_absolute() or ".." in rel.parts:
            raise TransferFailed(f"uri escapes the provider root: {uri}")
        return self.root / rel

    def put(self, uri: str, data: bytes) -> None:
        with self._lock:
            path = self._path(uri)
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_name(path.name + ".part")
                tmp.write_bytes(data)
                os.replace(tmp, path)
            except OSError as exc:
                raise TransferFailed(f"write failed for {uri}: {exc}") from exc

    def get(self, uri: str) -> bytes:
        path = self._path(uri)
        if not path.is_file():
            raise NotFound(uri)
        try:
            return path.read_bytes()
        except OSError as exc:
            raise TransferFailed(f"read failed for {uri}: {exc}") from exc

    def list(self, prefix: str = "") -> list[str]:
        with self._lock:
            uris = []
            for path in self.root.rglob("*"):
                if path.is_file() and not path.name.endswith(".part"):
                    uri = path.relative_to(self.root).as_posix()
                    if uri.startswith(prefix):
                        uris.append(uri)
            return sorted(uris)

    def delete(self, uri: str) -> None:
        path = self._path(uri)
        if not path.is_file():
            raise NotFound(uri)
        path.unlink()

    def probe(self) -> bool:
        return True


class ScriptedProvider(ProviderAdapter):
    """In-memory provider driven by an availability schedule on a virtual clock.

    fail_ops aborts the Nth operation (1-based, counted across all
    operations) with Unreachable, for fault-injection tests. deploy returns
    an instance that reports running once deploy_delay_s has elapsed.
    """

    def __init__(
        self,
        clock: Clock,
        schedule: AvailabilitySchedule | None = None,
        latency_s: float = 0.0,
        fail_ops: Iterable[int] = (),
        deploy_delay_s: float = 0.0,
        name: str = "scripted",
    ):
        self.clock = clock
        self.schedule = schedule or AvailabilitySchedule.always_up()
        self.latency_s = latency_s
        self.fail_ops = frozenset(fail_ops)
        self.deploy_delay_s = deploy_delay_s
        self.name = name
        self._data: dict[str, bytes] = {}
        self._instances: dict[str, float] = {}
        self._ops = 0
        self._forced_state: str | None = None
        self._lock = threading.RLock()

    def set_state(self, state: str | None) -> None:
        """Force up/down regardless of schedule; None returns to the schedule."""
        if state not in (None, "up", "down"):
            raise ValueError(f"state must be up, down or None, got {state!r}")
        with self._lock:
            self._forced_state = state

    def _gate(self) -> None:
        self._ops += 1
        if self._ops in self.fail_ops:
            raise Unreachable(f"{self.name}: injected failure on operation {self._ops}")
        state = self._forced_state or self.schedule.state_at(self.clock.now())
        if state == "down":
            raise Unreachable(f"{self.name}: down at t={self.clock.now():.3f}")
        if self.latency_s:
            self.clock.sleep(self.latency_s)

    def put(self, uri: str, data: bytes) -> None:
        with self._lock:
            self._gate()
            self._data[uri] = bytes(data)

    def get(self, uri: str) -> bytes:
        with self._lock:
            self._gate()
            if uri not in self._data:
                raise NotFound(uri)
            return self._data[uri]

    def list(self, prefix: str = "") -> list[str]:
        with self._lock:
            self._gate()
            return sorted(u for u in self._data if u.startswith(prefix))

    def delete(self, uri: str) -> None:
        with self._lock:
            self._gate()
            if uri not in self._data:
                raise NotFound(uri)
            del self._data[uri]

    def deploy(self, payload: bytes, descriptor: dict) -> str:
        with self._lock:
            self._gate()
            instance_id = f"{self.name}-inst-{len(self._instances) + 1}"
            self._instances[instance_id] = self.clock.now()
            return instance_id

    def instance_status(self, instance_id: str) -> str:
        with self._lock:
            self._gate()
            if instance_id not in self._instances:
                raise NotFound(instance_id)
            started = self._instances[instance_id]
            return "running" if self.clock.now() >= started + self.deploy_delay_s else "starting"

    def probe(self) -> bool:
        with self._lock:
            self._gate()
            return True

    @property
    def operations_seen(self) -> int:
        return self._ops


def scripted_provider_from_config(config: dict, clock: Clock, name: str = "scripted") -> ScriptedProvider:
    """Build a scripted provider from its JSON configuration:
    {"schedule": [{"from": s, "to": s|null, "state": "up"|"down"}],
     "latency_ms": n, "fail_ops": [n, ...], "deploy_delay_ms": n}
    """
    windows = tuple(
        Window(float(w["from"]), None if w.get("to") is None else float(w["to"]), w["state"])
        for w in config.get("schedule", [])
    )
    return ScriptedProvider(
        clock=clock,
        schedule=AvailabilitySchedule(windows),
        latency_s=float(config.get("latency_ms", 0)) / 1000.0,
        fail_ops=tuple(config.get("fail_ops", ())),
        deploy_delay_s=float(config.get("deploy_delay_ms", 0)) / 1000.0,
        name=name,
    )


def load_scripted_config(path: Path | str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
