#!/usr/bin/env python3
"""Record a small real daemon's API responses into the console's test
fixture (frontend/test/fixtures/daemon.json).

The snapshot (objects/directories/status/search) is taken first; then a
drag-style replicate command runs and its response plus the events it
produced are recorded, so the console tests replay a genuine sequence.
"""

import base64
import json
from pathlib import Path

from fastapi.testclient import TestClient

from picontrol.api import create_app
from picontrol.clock import VirtualClock
from picontrol.federation import AdvertiseMode, ScriptedTransport, ServiceEntry, encode_listing
from picontrol.model import (
    DATA,
    RESOURCE,
    SOFTWARE,
    Dependency,
    DependencyMode,
    DigitalObject,
    Identification,
    Pricing,
    ProviderInfo,
    ServiceDescription,
    canonical_object_id,
    object_to_manifest,
    private,
    public_open,
)
from picontrol.providers import ScriptedProvider
from picontrol.service import ControlService


def describe(name, provider, amount=0):
    return ServiceDescription(
        identification=Identification(name, "1"),
        function=f"{name} service",
        provider_info=ProviderInfo(provider),
        pricing=Pricing(amount, "EUR", "flat"),
    )


def data_object(name, payload, provider, license=None):
    return DigitalObject(
        id=canonical_object_id(DATA, payload), kind=DATA, name=name,
        description=describe(name, provider), license=license or public_open(),
        dependencies=(Dependency("kind:resource", DependencyMode.STORAGE),),
    )


def main():
    import tempfile

    clock = VirtualClock()
    transport = ScriptedTransport()
    home = tempfile.mkdtemp(prefix="picontrol-fixture-")
    service = ControlService(home, clock=clock, transport=transport)
    client = TestClient(create_app(service, ui_dist=None))
    token = client.post("/v1/session", json={"principal": "owner"}).json()["token"]
    auth = {"Authorization": f"Bearer {token}"}

    def command(verb, arguments):
        response = client.post(
            "/v1/commands", json={"verb": verb, "arguments": arguments}, headers=auth
        )
        assert response.status_code == 200, response.text
        return response.json()

    # two remote directories at different trust levels
    market_provider = ScriptedProvider(clock, name="acme")
    open_census = data_object("public census 2025", b"census rows", "acme")
    market_provider.put(f"objects/{open_census.id}", b"census rows")
    market_resource = DigitalObject(
        id=canonical_object_id(RESOURCE, "s3://acme/bucket"), kind=RESOURCE,
        name="acme block store", description=describe("acme block store", "acme", amount=400),
        license=public_open(),
    )
    transport.set_listing(
        "mem://market",
        encode_listing(
            "market", (), [("acme", "acme")],
            [
                ServiceEntry(open_census, "acme", "market", AdvertiseMode.LINK),
                ServiceEntry(market_resource, "acme", "market", AdvertiseMode.LINK),
            ],
        ),
    )
    command("import_directory", {"endpoint": "mem://market", "trust": 2})
    service.registry.bind_adapter("acme", market_provider)

    community_set = data_object("community atlas", b"atlas tiles", "guild")
    transport.set_listing(
        "mem://community",
        encode_listing(
            "community", (), [("guild", "guild")],
            [ServiceEntry(community_set, "guild", "community", AdvertiseMode.LINK)],
        ),
    )
    command("import_directory", {"endpoint": "mem://community", "trust": 1,
                                 "kind": "community_registry"})

    # owned objects: one of each kind
    own_notes = data_object("my notes", b"dear diary", "local", license=private())
    command("add_object", {"manifest": object_to_manifest(own_notes),
                           "payload_b64": base64.b64encode(b"dear diary").decode()})
    own_tool = DigitalObject(
        id=canonical_object_id(SOFTWARE, b"#!tool"), kind=SOFTWARE, name="photo tool",
        description=describe("photo tool", "local"), license=public_open(),
        dependencies=(
            Dependency("kind:resource", DependencyMode.RUNTIME),
            Dependency("kind:resource", DependencyMode.STORAGE),
        ),
    )
    command("add_object", {"manifest": object_to_manifest(own_tool),
                           "payload_b64": base64.b64encode(b"#!tool").decode()})
    own_nas = DigitalObject(
        id=canonical_object_id(RESOURCE, "nas://attic"), kind=RESOURCE, name="attic NAS",
        description=describe("attic NAS", "local"), license=private(),
    )
    command("add_object", {"manifest": object_to_manifest(own_nas)})

    # contract context: two storage (dispersed backups possible), one compute
    for pid, kind in (("st1", "storage"), ("st2", "storage"), ("cp1", "compute")):
        command("add_provider", {"id": pid, "trust": 1,
                                 "adapter": {"type": "local_fs", "root": pid}})
        command("add_contract", {"id": f"c-{pid}", "provider_id": pid, "kind": kind})

    fixture = {
        "token": token,
        "objects": client.get("/v1/objects", headers=auth).json(),
        "directories": client.get("/v1/directories", headers=auth).json(),
        "status": client.get("/v1/status", headers=auth).json(),
        "search": client.get("/v1/search", params={"q": ""}, headers=auth).json(),
        "schema": client.get("/v1/commands/schema").json(),
    }

    # the drag scenario: replicate the public data set into the personal zone
    seq_before = service.events.events[-1].seq
    replicate_response = command(
        "replicate", {"object_id": open_census.id, "to_provider": "local"}
    )
    fixture["replicate_scenario"] = {
        "object_id": open_census.id,
        "response": replicate_response,
        "events": [e.to_dict() for e in service.events.events if e.seq > seq_before],
        "objects_after": client.get("/v1/objects", headers=auth).json(),
    }

    out = Path(__file__).resolve().parent.parent / "frontend" / "test" / "fixtures" / "daemon.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(fixture, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
