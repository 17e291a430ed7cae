#!/usr/bin/env python3
"""Offline-survival walkthrough: import two marketplaces, localize their
public data sets, cut every remote link, and show that search, history and
backup planning keep working from mirrors and local replicas.

Runs entirely on a virtual clock with scripted providers; state lands in a
temp directory unless --home is given.
"""

import argparse
import json
import tempfile

from picontrol.clock import VirtualClock
from picontrol.federation import AdvertiseMode, ScriptedTransport, ServiceEntry, encode_listing
from picontrol.model import (
    DATA,
    Dependency,
    DependencyMode,
    DigitalObject,
    Identification,
    Pricing,
    ProviderInfo,
    ServiceDescription,
    canonical_object_id,
    public_open,
)
from picontrol.providers import ScriptedProvider
from picontrol.service import Command, ControlService


def open_data(name: str, payload: bytes, provider: str) -> DigitalObject:
    return DigitalObject(
        id=canonical_object_id(DATA, payload),
        kind=DATA,
        name=name,
        description=ServiceDescription(
            identification=Identification(name, "1"),
            function=f"public data set: {name}",
            provider_info=ProviderInfo(provider),
            pricing=Pricing(0, "EUR", "flat"),
        ),
        license=public_open(),
        dependencies=(Dependency("kind:resource", DependencyMode.STORAGE),),
    )


def show(label, payload):
    print(f"\n== {label}")
    print(json.dumps(payload, indent=2, sort_keys=True)[:1200])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--home", default=None, help="state directory (default: temp)")
    args = parser.parse_args()
    home = args.home or tempfile.mkdtemp(prefix="picontrol-autarky-")

    clock = VirtualClock()
    transport = ScriptedTransport()
    service = ControlService(home, clock=clock, transport=transport)
    token = service.login(service.owner)

    adapters = {}
    for directory_id, trust in (("gov-data", 2), ("science-hub", 1)):
        provider_id = f"prov-{directory_id}"
        adapter = ScriptedProvider(clock, name=provider_id)
        adapters[directory_id] = adapter
        entries = []
        for i in range(2):
            payload = f"{directory_id} record block {i}".encode()
            obj = open_data(f"{directory_id} set {i}", payload, provider_id)
            adapter.put(f"objects/{obj.id}", payload)
            entries.append(ServiceEntry(obj, provider_id, directory_id, AdvertiseMode.LINK))
        transport.set_listing(
            f"mem://{directory_id}",
            encode_listing(directory_id, (), [(provider_id, provider_id)], entries),
        )
        service.handle(Command("import_directory",
                               {"endpoint": f"mem://{directory_id}", "trust": trust}, token))
        service.registry.bind_adapter(provider_id, adapter)
        service.handle(Command("mirror", {"directory_id": directory_id}, token))
    print(f"state directory: {home}")
    print("imported + mirrored: gov-data (T=2), science-hub (T=1)")

    result = service.handle(Command("localize", {"query": "set"}, token))
    show("localize everything public", result.result)

    service.handle(Command("add_contract",
                           {"id": "c-local", "provider_id": "local", "kind": "storage"}, token))

    online = service.handle(Command("search", {"query": "set"}, token)).result
    show("search while online", {"hits": [(h["entry_id"], h["trust"]) for h in online["results"]]})

    for adapter in adapters.values():
        adapter.set_state("down")
    transport.set_down("mem://gov-data")
    transport.set_down("mem://science-hub")
    print("\n*** every remote provider and directory is now down ***")

    offline = service.handle(Command("search", {"query": "set"}, token)).result
    show("search while offline", {
        "hits": [(h["entry_id"], h["trust"]) for h in offline["results"]],
        "warnings": offline["warnings"],
    })
    assert [(h["entry_id"], h["trust"]) for h in offline["results"]] == [
        (h["entry_id"], h["trust"]) for h in online["results"]
    ]

    first_local = next(i["object_id"] for i in result.result["items"] if i["status"] == "replicated")
    plan = service.handle(Command("plan_backup", {"object_id": first_local}, token)).result
    run = service.handle(Command("execute_plan", {"plan_id": plan["id"]}, token)).result
    show("offline backup of a localized set", run)
    print("\nautarky holds: identical search results, working history, checkout and backups.")


if __name__ == "__main__":
    main()
