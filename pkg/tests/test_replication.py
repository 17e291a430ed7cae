"""Replication, migration, sharing and localization rules."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picontrol.errors import (
    EmptyScope,
    InvalidScope,
    LicenseViolation,
    NotOwner,
    ResourceNotReplicable,
    TransferFailed,
    UnsupportedKind,
)
from picontrol.federation import AdvertiseMode, FederationRegistry, ScriptedTransport, ServiceEntry, encode_listing
from picontrol.model import DATA, RESOURCE, SOFTWARE, community, private, proprietary, public_open
from picontrol.providers import ScriptedProvider
from picontrol.replication import (
    Location,
    MigrationMode,
    Replica,
    ReplicaState,
    ReplicationEngine,
    Scope,
    TicketStatus,
)
from picontrol.trust import TrustTable
from picontrol.versionstore import VersionStore

from conftest import make_data, make_resource, make_software


class CorruptingProvider(ScriptedProvider):
    """Returns tampered bytes on read, for digest-verification tests."""

    def get(self, uri):
        data = super().get(uri)
        return bytes([data[0] ^ 0xFF]) + data[1:] if data else data


def market_listing(directory_id, objects_with_providers):
    entries = [
        ServiceEntry(obj, provider, directory_id, AdvertiseMode.LINK)
        for obj, provider in objects_with_providers
    ]
    providers = sorted({(p, p) for _, p in objects_with_providers})
    return encode_listing(directory_id, (), providers, entries)


@pytest.fixture
def world(tmp_path, clock):
    """Registry + engine wired to a scripted marketplace and a local provider."""
    transport = ScriptedTransport()
    store = VersionStore(tmp_path / "store", clock=clock)
    registry = FederationRegistry(TrustTable(), store, transport=transport, clock=clock)
    local = ScriptedProvider(clock, name="local")
    registry.bind_adapter("local", local)
    engine = ReplicationEngine(registry, store, clock)
    return registry, engine, transport, local


def seed_market(registry, transport, objects, payloads, trust=2, directory_id="market", provider_id="acme", clock=None):
    adapter = ScriptedProvider(clock or registry.clock, name=provider_id)
    for obj, payload in zip(objects, payloads):
        if payload is not None:
            adapter.put(f"objects/{obj.id}", payload)
    transport.set_listing(
        f"mem://{directory_id}",
        market_listing(directory_id, [(o, provider_id) for o in objects]),
    )
    registry.import_directory(f"mem://{directory_id}", declared_trust=trust)
    registry.bind_adapter(provider_id, adapter)
    return adapter


class TestReplicate:
    def test_resources_cannot_be_replicated(self, world):
        registry, engine, transport, local = world
        resource = make_resource()
        engine.register_object(resource, owner="alice")
        with pytest.raises(ResourceNotReplicable):
            engine.replicate(resource.id, "local")

    def test_public_data_from_marketplace_to_personal_store(self, world, clock):
        registry, engine, transport, local = world
        payload = b"open census bytes"
        data = make_data(payload=payload, name="census")
        seed_market(registry, transport, [data], [payload], trust=2, clock=clock)
        replica = engine.replicate(
            data.id, "local", source=Location("acme", f"objects/{data.id}"), obj=data
        )
        assert replica.state == ReplicaState.LIVE
        assert local.get(f"objects/{data.id}") == payload
        # the localized copy is now part of the trust-0 view
        hits = registry.search("census", max_trust=0).hits
        assert [h.entry.object.id for h in hits] == [data.id]
        assert hits[0].trust == 0

    def test_private_data_cannot_leave_the_personal_domain(self, world, clock):
        registry, engine, transport, local = world
        secret = make_data(payload=b"diary", name="diary", license=private())
        engine.register_object(secret, owner="alice", payload=b"diary")
        remote = ScriptedProvider(clock, name="cloudcorp")
        registry.register_provider("cloudcorp", adapter=remote)
        registry.set_trust("cloudcorp", 2)
        with pytest.raises(LicenseViolation):
            engine.replicate(secret.id, "cloudcorp")

    def test_replica_verified_against_blob_digest(self, world, clock):
        registry, engine, transport, local = world
        data = make_data(payload=b"valuable", name="valuable")
        engine.register_object(data, owner="alice", payload=b"valuable")
        corrupting = CorruptingProvider(clock, name="evil")
        registry.register_provider("evil", adapter=corrupting)
        registry.set_trust("evil", 1)
        from picontrol.errors import VerificationFailed

        with pytest.raises(VerificationFailed):
            engine.replicate(data.id, "evil")
        assert engine.replicas[(data.id, "evil")].state == ReplicaState.PENDING

    def test_transfer_failure_leaves_replica_pending_and_retryable(self, world, clock):
        registry, engine, transport, local = world
        data = make_data(payload=b"x", name="x")
        engine.register_object(data, owner="alice", payload=b"x")
        flaky = ScriptedProvider(clock, fail_ops=[1], name="flaky")
        registry.register_provider("flaky", adapter=flaky)
        registry.set_trust("flaky", 1)
        with pytest.raises(TransferFailed):
            engine.replicate(data.id, "flaky")
        assert engine.replicas[(data.id, "flaky")].state == ReplicaState.PENDING
        replica = engine.replicate(data.id, "flaky")  # retry succeeds
        assert replica.state == ReplicaState.LIVE

    def test_replicating_again_is_a_no_op(self, world):
        registry, engine, transport, local = world
        data = make_data(payload=b"x", name="x")
        engine.register_object(data, owner="alice", payload=b"x")
        first = engine.replicate(data.id, "local")
        ops_after_first = local.operations_seen
        second = engine.replicate(data.id, "local")
        assert second == first
        assert local.operations_seen == ops_after_first

    @settings(max_examples=60, deadline=None)
    @given(
        kind=st.sampled_from(["software", "data", "resource"]),
        bound=st.one_of(st.none(), st.integers(0, 3)),
        destination_trust=st.integers(0, 4),
        payload=st.binary(min_size=1, max_size=16),
    )
    def test_kind_and_license_safety(self, tmp_path_factory, kind, bound, destination_trust, payload):
        from picontrol.clock import VirtualClock

        clock = VirtualClock()
        tmp = tmp_path_factory.mktemp("safety")
        store = VersionStore(tmp / "s", clock=clock)
        registry = FederationRegistry(
            TrustTable(), store, transport=ScriptedTransport(), clock=clock
        )
        registry.bind_adapter("local", ScriptedProvider(clock, name="local"))
        engine = ReplicationEngine(registry, store, clock)
        dest = ScriptedProvider(clock, name="dest")
        registry.register_provider("dest", adapter=dest)
        registry.set_trust("dest", destination_trust)

        if bound == 0:
            license = private()
        elif bound is None:
            license = public_open()
        else:
            license = proprietary(bound)
        if kind == "resource":
            obj = make_resource(uri=f"r://{payload.hex()}", license=license)
        elif kind == "data":
            obj = make_data(payload=payload, license=license)
        else:
            obj = make_software(payload=payload, license=license)
        engine.register_object(obj, owner="o", payload=None if kind == "resource" else payload)

        if kind == "resource":
            with pytest.raises(ResourceNotReplicable):
                engine.replicate(obj.id, "dest")
        elif bound is not None and destination_trust > bound:
            with pytest.raises(LicenseViolation):
                engine.replicate(obj.id, "dest")
        else:
            assert engine.replicate(obj.id, "dest").state == ReplicaState.LIVE


class TestMigrate:
    def setup_two_providers(self, world, clock):
        registry, engine, transport, local = world
        a = ScriptedProvider(clock, name="prov-a")
        b = ScriptedProvider(clock, name="prov-b")
        registry.register_provider("prov-a", adapter=a)
        registry.register_provider("prov-b", adapter=b)
        registry.set_trust("prov-a", 1)
        registry.set_trust("prov-b", 1)
        return a, b

    def test_physical_migration_moves_the_object(self, world, clock):
        registry, engine, transport, local = world
        a, b = self.setup_two_providers(world, clock)
        data = make_data(payload=b"payload", name="movable")
        engine.register_object(data, owner="alice", payload=b"payload")
        uri = f"objects/{data.id}"
        a.put(uri, b"payload")
        engine.replicas[(data.id, "prov-a")] = Replica(
            data.id, "prov-a", uri, None, ReplicaState.LIVE, None
        )
        ticket = engine.migrate(
            data.id, destination=Location("prov-b", uri), source=Location("prov-a", uri)
        )
        assert ticket.status == TicketStatus.DONE
        assert uri not in a.list()
        assert b.get(uri) == b"payload"
        assert engine.replicas[(data.id, "prov-b")].state == ReplicaState.LIVE
        assert (data.id, "prov-a") not in engine.replicas

    def test_destination_dying_after_copy_aborts_with_source_intact(self, world, clock):
        registry, engine, transport, local = world
        a, _ = self.setup_two_providers(world, clock)
        # destination fails its second operation: put succeeds, verify read dies
        dying = ScriptedProvider(clock, fail_ops=[2], name="dying")
        registry.register_provider("dying", adapter=dying)
        data = make_data(payload=b"precious", name="precious")
        engine.register_object(data, owner="alice", payload=b"precious")
        uri = f"objects/{data.id}"
        a.put(uri, b"precious")
        with pytest.raises(TransferFailed):
            engine.migrate(data.id, destination=Location("dying", uri), source=Location("prov-a", uri))
        ticket = list(engine.tickets.values())[-1]
        assert ticket.status == TicketStatus.ABORTED
        assert a.get(uri) == b"precious"  # source intact

    def test_corrupting_destination_aborts_with_source_intact(self, world, clock):
        registry, engine, transport, local = world
        a, _ = self.setup_two_providers(world, clock)
        corrupting = CorruptingProvider(clock, name="bitrot")
        registry.register_provider("bitrot", adapter=corrupting)
        data = make_data(payload=b"fragile", name="fragile")
        engine.register_object(data, owner="alice", payload=b"fragile")
        uri = f"objects/{data.id}"
        a.put(uri, b"fragile")
        from picontrol.errors import VerificationFailed

        with pytest.raises(VerificationFailed):
            engine.migrate(data.id, destination=Location("bitrot", uri), source=Location("prov-a", uri))
        assert list(engine.tickets.values())[-1].status == TicketStatus.ABORTED
        assert a.get(uri) == b"fragile"

    def test_access_migration_of_a_resource(self, world):
        registry, engine, transport, local = world
        nas = make_resource(uri="nas://attic", name="attic")
        engine.register_object(nas, owner="alice")
        ticket = engine.migrate(
            nas.id,
            destination=Location("partner", ""),
            source=Location("local", ""),
            mode=MigrationMode.ACCESS,
        )
        assert ticket.status == TicketStatus.DONE
        virtual = list(engine.virtual_objects.values())[0]
        assert virtual.scope.whole
        assert virtual.grantee == "partner"
        assert engine.owners[nas.id] == "partner"

    def test_physical_migration_of_a_resource_is_unsupported(self, world):
        registry, engine, transport, local = world
        nas = make_resource(uri="nas://attic", name="attic")
        engine.register_object(nas, owner="alice")
        with pytest.raises(UnsupportedKind):
            engine.migrate(
                nas.id, destination=Location("x", "u"), source=Location("local", "u"),
                mode=MigrationMode.PHYSICAL,
            )

    def test_access_migration_of_data_is_unsupported(self, world):
        registry, engine, transport, local = world
        data = make_data(payload=b"d", name="d")
        engine.register_object(data, owner="alice", payload=b"d")
        with pytest.raises(UnsupportedKind):
            engine.migrate(
                data.id, destination=Location("x", "u"), source=Location("local", "u"),
                mode=MigrationMode.ACCESS,
            )


class TestShareAccess:
    def test_read_only_share_permits_read_denies_write(self, world):
        registry, engine, transport, local = world
        nas = make_resource(uri="nas://attic", name="attic")
        engine.register_object(nas, owner="alice")
        virtual = engine.share_access(nas.id, "bob", Scope.entire(), {"read"}, caller="alice")
        assert virtual.permits("bob", "read")
        assert not virtual.permits("bob", "write")
        assert not virtual.permits("mallory", "read")

    def test_partial_scope_denies_outside_paths(self, world):
        registry, engine, transport, local = world
        nas = make_resource(uri="nas://attic", name="attic")
        engine.register_object(nas, owner="alice")
        virtual = engine.share_access(
            nas.id, "bob", Scope.subpaths("/photos"), {"read"}, caller="alice"
        )
        assert virtual.permits("bob", "read", path="/photos/2024.jpg")
        assert not virtual.permits("bob", "read", path="/documents/tax.pdf")

    def test_share_by_non_owner(self, world):
        registry, engine, transport, local = world
        nas = make_resource(uri="nas://attic", name="attic")
        engine.register_object(nas, owner="alice")
        with pytest.raises(NotOwner):
            engine.share_access(nas.id, "bob", Scope.entire(), {"read"}, caller="mallory")

    def test_empty_scope_rejected(self, world):
        registry, engine, transport, local = world
        nas = make_resource(uri="nas://attic", name="attic")
        engine.register_object(nas, owner="alice")
        with pytest.raises(EmptyScope):
            engine.share_access(nas.id, "bob", Scope(False, (), None), {"read"}, caller="alice")
        with pytest.raises(EmptyScope):
            engine.share_access(nas.id, "bob", Scope.byte_slice(5, 5), {"read"}, caller="alice")

    def test_byte_range_outside_extent_rejected(self, world):
        registry, engine, transport, local = world
        nas = make_resource(uri="nas://attic", name="attic", nonfunctional={"size_bytes": 100})
        engine.register_object(nas, owner="alice")
        with pytest.raises(InvalidScope):
            engine.share_access(nas.id, "bob", Scope.byte_slice(0, 200), {"read"}, caller="alice")

    def test_share_appears_in_personal_directory_and_is_revocable(self, world):
        registry, engine, transport, local = world
        nas = make_resource(uri="nas://attic", name="attic")
        engine.register_object(nas, owner="alice")
        virtual = engine.share_access(nas.id, "bob", Scope.entire(), {"read"}, caller="alice")
        hits = registry.search("shared with bob", max_trust=0).hits
        assert len(hits) == 1
        assert hits[0].entry.object.kind.tag == "resource"
        engine.revoke_share(virtual.id, caller="alice")
        assert registry.search("shared with bob", max_trust=0).hits == ()


class TestLocalize:
    def test_mixed_license_batch(self, world, clock):
        registry, engine, transport, local = world
        open_a = make_data(payload=b"set a", name="open set a")
        open_b = make_data(payload=b"set b", name="open set b")
        restricted = make_software(
            payload=b"svc", name="open service c", license=proprietary(1)
        )
        seed_market(
            registry, transport,
            [open_a, open_b, restricted], [b"set a", b"set b", b"svc"],
            trust=2, clock=clock,
        )
        report = engine.localize("open")
        by_status = {i.object_id: i for i in report.items}
        assert by_status[open_a.id].status == "replicated"
        assert by_status[open_b.id].status == "replicated"
        assert by_status[restricted.id].status == "failed"
        assert "LicenseViolation" in by_status[restricted.id].error
        assert report.transfers == 2
        # mirrors were refreshed in the same pass
        assert "market" in registry.mirrors

    def test_empty_selection(self, world):
        registry, engine, transport, local = world
        report = engine.localize("matches nothing")
        assert report.items == ()
        assert report.transfers == 0

    def test_second_run_transfers_nothing(self, world, clock):
        registry, engine, transport, local = world
        data = make_data(payload=b"once", name="pull once")
        seed_market(registry, transport, [data], [b"once"], trust=1, clock=clock)
        first = engine.localize("pull once")
        assert first.transfers == 1
        second = engine.localize("pull once")
        assert second.transfers == 0
        assert all(i.status == "already_local" for i in second.items if i.directory != "personal")

    def test_offline_provider_with_mirrored_directory_fails_transfer(self, world, clock):
        registry, engine, transport, local = world
        data = make_data(payload=b"gone", name="stranded set")
        adapter = seed_market(registry, transport, [data], [b"gone"], trust=2, clock=clock)
        registry.mirror("market")
        adapter.set_state("down")       # provider unreachable
        transport.set_down("mem://market")  # directory unreachable, mirror stands in
        report = engine.localize("stranded")
        assert len(report.items) == 1
        assert report.items[0].status == "failed"
        assert "TransferFailed" in report.items[0].error or "Unreachable" in report.items[0].error

    def test_no_two_live_replicas_with_differing_digests(self, world, clock):
        registry, engine, transport, local = world
        data = make_data(payload=b"same", name="consistency")
        engine.register_object(data, owner="alice", payload=b"same")
        other = ScriptedProvider(clock, name="other")
        registry.register_provider("other", adapter=other)
        registry.set_trust("other", 1)
        engine.replicate(data.id, "local")
        engine.replicate(data.id, "other")
        digests = {
            r.digest for r in engine.replicas.values()
            if r.object_id == data.id and r.state == ReplicaState.LIVE
        }
        assert len(digests) == 1
