"""Shared fixtures and object builders for the test suite."""

from __future__ import annotations

import pytest

from picontrol.clock import VirtualClock
from picontrol.model import (
    DATA,
    RESOURCE,
    SOFTWARE,
    Dependency,
    DependencyMode,
    DigitalObject,
    Identification,
    LicenseClass,
    Pricing,
    ProviderInfo,
    ServiceDescription,
    canonical_object_id,
    public_open,
)
from picontrol.versionstore import VersionStore


def make_description(
    name="thing",
    version="1.0",
    function="does things",
    provider="prov-1",
    amount=100,
    currency="EUR",
    unit="flat",
    nonfunctional=None,
    technical=None,
) -> ServiceDescription:
    return ServiceDescription(
        identification=Identification(name, version),
        function=function,
        provider_info=ProviderInfo(provider, f"{provider}@example.org"),
        pricing=Pricing(amount, currency, unit),
        nonfunctional=nonfunctional or {},
        technical_requirements=technical or {},
    )


def make_resource(uri="nas://attic", name="attic NAS", license=None, **desc_kwargs) -> DigitalObject:
    return DigitalObject(
        id=canonical_object_id(RESOURCE, uri),
        kind=RESOURCE,
        name=name,
        description=make_description(name=name, **desc_kwargs),
        license=license or public_open(),
    )


def make_data(payload=b"payload", name="dataset", license=None, storage="kind:resource", **desc_kwargs) -> DigitalObject:
    return DigitalObject(
        id=canonical_object_id(DATA, payload),
        kind=DATA,
        name=name,
        description=make_description(name=name, **desc_kwargs),
        license=license or public_open(),
        dependencies=(Dependency(storage, DependencyMode.STORAGE),),
    )


def make_software(
    payload=b"#!bin", name="tool", license=None, runtime="kind:resource", storage="kind:resource",
    extra_deps=(), **desc_kwargs
) -> DigitalObject:
    return DigitalObject(
        id=canonical_object_id(SOFTWARE, payload),
        kind=SOFTWARE,
        name=name,
        description=make_description(name=name, **desc_kwargs),
        license=license or public_open(),
        dependencies=(
            Dependency(runtime, DependencyMode.RUNTIME),
            Dependency(storage, DependencyMode.STORAGE),
            *extra_deps,
        ),
    )


@pytest.fixture
def clock():
    return VirtualClock()


@pytest.fixture
def store(tmp_path, clock):
    return VersionStore(tmp_path / "store", clock=clock)
