"""Object model: descriptions, canonical ids, dependency closure, manifests."""

import hashlib
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from picontrol.errors import (
    CyclicDependency,
    InvalidObject,
    InvalidResourceURI,
    MalformedManifest,
    UnresolvedDependency,
)
from picontrol.model import (
    DATA,
    RESOURCE,
    SOFTWARE,
    Dependency,
    DependencyMode,
    DigitalObject,
    Identification,
    LicenseClass,
    LicenseTag,
    ObjectKind,
    Pricing,
    ProviderInfo,
    ServiceDescription,
    Violation,
    canonical_object_id,
    dependency_closure,
    kind_from_tag,
    object_from_manifest,
    object_to_manifest,
    private,
    public_open,
    validate_description,
)

from conftest import make_data, make_description, make_resource, make_software


class TestValidateDescription:
    def test_fully_specified_description_has_no_violations(self):
        assert validate_description(make_description()) == []

    def test_missing_pricing(self):
        desc = ServiceDescription(
            identification=Identification("x", "1"),
            function="f",
            provider_info=ProviderInfo("p"),
            pricing=None,
        )
        assert validate_description(desc) == [Violation.missing("pricing")]

    def test_missing_function_and_provider_info_in_attribute_order(self):
        desc = ServiceDescription(
            identification=Identification("x", "1"),
            function="",
            provider_info=None,
            pricing=Pricing(0, "EUR"),
        )
        assert validate_description(desc) == [
            Violation.missing("function"),
            Violation.missing("provider_info"),
        ]

    def test_zero_price_is_legal(self):
        assert validate_description(make_description(amount=0)) == []

    def test_negative_price_is_rejected_at_construction(self):
        with pytest.raises(InvalidObject):
            Pricing(-1, "EUR")

    @given(missing=st.sets(st.sampled_from(["identification", "function", "provider_info", "pricing"])))
    def test_violations_match_exactly_the_missing_attributes(self, missing):
        desc = ServiceDescription(
            identification=None if "identification" in missing else Identification("n", "1"),
            function="" if "function" in missing else "f",
            provider_info=None if "provider_info" in missing else ProviderInfo("p"),
            pricing=None if "pricing" in missing else Pricing(1, "EUR"),
        )
        assert {v.attribute for v in validate_description(desc)} == missing


class TestCanonicalObjectId:
    def test_deterministic_for_identical_payload(self):
        a = canonical_object_id(DATA, b"hello")
        b = canonical_object_id(DATA, b"hello")
        assert a == b
        assert a.startswith("da:")

    def test_resource_id_is_the_uri(self):
        assert canonical_object_id(RESOURCE, "nas://attic") == "re:nas://attic"

    def test_empty_payload_hashes_to_digest_of_empty_input(self):
        expected = hashlib.sha256(b"").hexdigest()
        assert canonical_object_id(DATA, b"") == f"da:{expected}"

    def test_software_prefix(self):
        assert canonical_object_id(SOFTWARE, b"bin").startswith("sw:")

    def test_unknown_kind_uses_its_tag_as_prefix(self):
        assert canonical_object_id(ObjectKind("human"), b"cv").startswith("human:")

    def test_empty_resource_uri_rejected(self):
        with pytest.raises(InvalidResourceURI):
            canonical_object_id(RESOURCE, "")
        with pytest.raises(InvalidResourceURI):
            canonical_object_id(RESOURCE, "   ")

    @given(st.binary(min_size=0, max_size=64), st.binary(min_size=0, max_size=64))
    def test_injective_on_distinct_payloads(self, a, b):
        ia, ib = canonical_object_id(DATA, a), canonical_object_id(DATA, b)
        assert (ia == ib) == (a == b)


class TestObjectInvariants:
    def test_resource_with_dependencies_rejected(self):
        with pytest.raises(InvalidObject):
            DigitalObject(
                id="re:x", kind=RESOURCE, name="x", description=make_description(),
                license=public_open(),
                dependencies=(Dependency("kind:resource", DependencyMode.STORAGE),),
            )

    def test_software_needs_runtime_resource_dependency(self):
        with pytest.raises(InvalidObject):
            DigitalObject(
                id="sw:x", kind=SOFTWARE, name="x", description=make_description(),
                license=public_open(),
                dependencies=(Dependency("kind:resource", DependencyMode.STORAGE),),
            )

    def test_data_needs_storage_dependency(self):
        with pytest.raises(InvalidObject):
            DigitalObject(
                id="da:x", kind=DATA, name="x", description=make_description(),
                license=public_open(), dependencies=(),
            )

    def test_data_must_not_declare_runtime_dependencies(self):
        with pytest.raises(InvalidObject):
            DigitalObject(
                id="da:x", kind=DATA, name="x", description=make_description(),
                license=public_open(),
                dependencies=(
                    Dependency("kind:resource", DependencyMode.STORAGE),
                    Dependency("kind:resource", DependencyMode.RUNTIME),
                ),
            )

    def test_unknown_kind_carries_no_structural_rules(self):
        obj = DigitalObject(
            id="human:abc", kind=ObjectKind("human"), name="consultant",
            description=make_description(), license=public_open(),
        )
        assert obj.kind.tag == "human"
        assert not obj.kind.is_builtin

    def test_builtin_tags_recognized_case_insensitively(self):
        assert kind_from_tag("Software") == SOFTWARE
        assert kind_from_tag("DATA") == DATA

    def test_license_lattice_endpoints(self):
        with pytest.raises(InvalidObject):
            LicenseClass(LicenseTag.PUBLIC_OPEN, 3)
        with pytest.raises(InvalidObject):
            LicenseClass(LicenseTag.PRIVATE, 2)
        assert public_open().allows_placement_at(99)
        assert private().allows_placement_at(0)
        assert not private().allows_placement_at(1)


class TestDependencyClosure:
    def test_resource_closure_is_empty(self):
        res = make_resource()
        assert dependency_closure(res, [res]) == set()

    def test_linear_chain_software_data_resource(self):
        res = make_resource()
        data = make_data(storage=res.id)
        sw = make_software(
            runtime=res.id, storage=res.id,
            extra_deps=(Dependency(data.id, DependencyMode.RUNTIME),),
        )
        assert dependency_closure(sw, [sw, data, res]) == {data.id, res.id}

    def test_two_cycle_raises(self):
        # mutual runtime dependency between two software objects
        a_id = canonical_object_id(SOFTWARE, b"a")
        b_id = canonical_object_id(SOFTWARE, b"b")

        def sw(own_id, other_id, payload):
            return DigitalObject(
                id=own_id, kind=SOFTWARE, name=payload.decode(),
                description=make_description(), license=public_open(),
                dependencies=(
                    Dependency("kind:resource", DependencyMode.RUNTIME),
                    Dependency("kind:resource", DependencyMode.STORAGE),
                    Dependency(other_id, DependencyMode.RUNTIME),
                ),
            )

        a = sw(a_id, b_id, b"a")
        b = sw(b_id, a_id, b"b")
        with pytest.raises(CyclicDependency):
            dependency_closure(a, [a, b])

    def test_missing_target_raises_with_target_named(self):
        data = make_data(storage="re:gone")
        with pytest.raises(UnresolvedDependency) as excinfo:
            dependency_closure(data, [data])
        assert excinfo.value.target == "re:gone"

    def test_kind_level_requirements_are_not_graph_edges(self):
        data = make_data()  # storage dep is kind-level
        assert dependency_closure(data, [data]) == set()

    @given(st.integers(min_value=1, max_value=8), st.randoms(use_true_random=False))
    def test_closure_is_closed(self, depth, rnd):
        # build a random DAG: each object depends on a few later ones, resources at the bottom
        objects = [make_resource(uri=f"r://{i}") for i in range(3)]
        for i in range(depth):
            targets = [rnd.choice(objects).id for _ in range(rnd.randint(1, 2))]
            deps = tuple(Dependency(t, DependencyMode.STORAGE) for t in targets)
            objects.append(
                DigitalObject(
                    id=canonical_object_id(DATA, f"d{i}".encode()),
                    kind=DATA, name=f"d{i}", description=make_description(),
                    license=public_open(),
                    dependencies=deps + (Dependency("kind:resource", DependencyMode.STORAGE),),
                )
            )
        catalog = {o.id: o for o in objects}
        top = objects[-1]
        closure = dependency_closure(top, catalog)
        for member_id in closure:
            for dep in catalog[member_id].dependencies:
                if not dep.is_kind_level:
                    assert dep.target in closure or dep.target == top.id


class TestManifest:
    def test_round_trip(self):
        sw = make_software(nonfunctional={"latency_ms": 20}, technical={"ram_gb": 2})
        assert object_from_manifest(object_to_manifest(sw)) == sw

    def test_field_names_are_the_documented_contract(self):
        manifest = object_to_manifest(make_data())
        assert set(manifest) == {"id", "kind", "name", "description", "license", "dependencies"}
        assert set(manifest["description"]) == {
            "identification", "function", "provider_info", "pricing",
            "nonfunctional", "technical_requirements",
        }
        assert set(manifest["description"]["pricing"]) == {"amount_minor", "currency", "unit"}
        assert set(manifest["license"]) == {"tag", "replication_allowed_to"}
        assert set(manifest["dependencies"][0]) == {"target", "mode"}

    def test_manifest_is_json_serializable(self):
        json.dumps(object_to_manifest(make_software()))

    def test_malformed_manifest_raises(self):
        with pytest.raises(MalformedManifest):
            object_from_manifest({"id": "da:x", "kind": "data"})

    def test_unknown_kind_survives_round_trip(self):
        obj = DigitalObject(
            id="human:abc", kind=ObjectKind("human"), name="x",
            description=make_description(), license=public_open(),
        )
        assert object_from_manifest(object_to_manifest(obj)).kind.tag == "human"
