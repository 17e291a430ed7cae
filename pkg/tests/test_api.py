"""HTTP API: sessions, endpoints, command posting, SSE stream, sync wire."""

import base64
import json

import pytest
from fastapi.testclient import TestClient

from picontrol.api import COMMAND_SCHEMA, create_app
from picontrol.federation import ScriptedTransport
from picontrol.model import object_to_manifest
from picontrol.providers import ScriptedProvider
from picontrol.service import Command, ControlService

from conftest import make_data
from test_federation import listing_bytes


@pytest.fixture
def service(tmp_path, clock):
    transport = ScriptedTransport()
    transport.set_listing(
        "mem://market", listing_bytes("market", entries=[(make_data(b"m", name="market set"), "acme")])
    )
    svc = ControlService(tmp_path / "home", clock=clock, transport=transport)
    return svc


@pytest.fixture
def client(service):
    return TestClient(create_app(service, ui_dist=None))


@pytest.fixture
def auth(client):
    response = client.post("/v1/session", json={"principal": "owner"})
    assert response.status_code == 200
    token = response.json()["token"]
    return {"Authorization": f"Bearer {token}"}


def add_object(client, auth, payload=b"bytes", name="api set"):
    obj = make_data(payload=payload, name=name)
    response = client.post(
        "/v1/commands",
        json={
            "verb": "add_object",
            "arguments": {
                "manifest": object_to_manifest(obj),
                "payload_b64": base64.b64encode(payload).decode(),
            },
        },
        headers=auth,
    )
    assert response.status_code == 200, response.text
    return obj


class TestSessions:
    def test_login_and_use(self, client, auth):
        assert client.get("/v1/status", headers=auth).status_code == 200

    def test_unauthenticated_requests_рejected(self, client):
        assert client.get("/v1/status").status_code == 401
        assert client.get("/v1/objects").status_code == 401

    def test_unknown_principal_login_rejected(self, client):
        assert client.post("/v1/session", json={"principal": "nobody"}).status_code == 401

    def test_token_via_query_parameter_works_for_sse_clients(self, client, auth):
        token = auth["Authorization"].split()[1]
        assert client.get(f"/v1/status?token={token}").status_code == 200


class TestEndpoints:
    def test_objects_lists_catalog_with_replicas_and_heads(self, client, auth):
        obj = add_object(client, auth)
        data = client.get("/v1/objects", headers=auth).json()
        assert len(data["objects"]) == 1
        entry = data["objects"][0]
        assert entry["object"]["id"] == obj.id
        assert entry["owner"] == "owner"
        assert len(entry["heads"]) == 1
        assert any(r["provider_id"] == "local" for r in entry["replicas"])

    def test_directories_include_trust_and_entries(self, client, auth):
        response = client.post(
            "/v1/commands",
            json={"verb": "import_directory", "arguments": {"endpoint": "mem://market", "trust": 2}},
            headers=auth,
        )
        assert response.status_code == 200
        data = client.get("/v1/directories", headers=auth).json()
        by_id = {d["id"]: d for d in data["directories"]}
        assert by_id["market"]["trust"] == 2
        assert by_id["personal"]["trust"] == 0
        assert len(by_id["market"]["entries"]) == 1

    def test_search_endpoint(self, client, auth):
        add_object(client, auth, name="findable thing")
        data = client.get("/v1/search", params={"q": "findable"}, headers=auth).json()
        assert len(data["results"]) == 1
        assert data["results"][0]["trust"] == 0

    def test_domain_errors_carry_their_name(self, client, auth):
        response = client.post(
            "/v1/commands",
            json={"verb": "replicate", "arguments": {"object_id": "da:ghost", "to_provider": "local"}},
            headers=auth,
        )
        assert response.status_code == 404
        assert response.json()["error"]["type"] == "UnknownObject"

    def test_plans_endpoint(self, client, auth, service, clock):
        obj = add_object(client, auth)
        service_token = client.post("/v1/session", json={"principal": "owner"}).json()["token"]
        client.post(
            "/v1/commands",
            json={"verb": "add_provider",
                  "arguments": {"id": "st1", "trust": 1, "adapter": {"type": "local_fs", "root": "st1"}}},
            headers=auth,
        )
        client.post(
            "/v1/commands",
            json={"verb": "add_contract",
                  "arguments": {"id": "c1", "provider_id": "st1", "kind": "storage"}},
            headers=auth,
        )
        response = client.post(
            "/v1/commands", json={"verb": "plan_backup", "arguments": {"object_id": obj.id}},
            headers=auth,
        )
        plan_id = response.json()["result"]["id"]
        fetched = client.get(f"/v1/plans/{plan_id}", headers=auth).json()
        assert fetched["object_id"] == obj.id
        assert client.get("/v1/plans/plan-999", headers=auth).status_code == 404

    def test_history_endpoint_filters(self, client, auth):
        obj = add_object(client, auth)
        data = client.get("/v1/history", params={"subject": obj.id}, headers=auth).json()
        assert data["events"]
        assert all(e["subject"] == obj.id for e in data["events"])

    def test_schema_endpoint_matches_the_service_verbs(self, client):
        from picontrol.service import MUTATING_VERBS, READ_VERBS

        schema = client.get("/v1/commands/schema").json()["commands"]
        assert set(schema) == set(MUTATING_VERBS) | set(READ_VERBS)
        assert set(COMMAND_SCHEMA) == set(schema)


def parse_sse(text):
    events = []
    current_id = None
    for line in text.splitlines():
        if line.startswith("id: "):
            current_id = int(line[4:])
        elif line.startswith("data: "):
            events.append((current_id, json.loads(line[6:])))
    return events


class TestEventStream:
    def read_replay(self, client, auth, params=""):
        sep = "&" if params else "?"
        response = client.get(f"/v1/events{params}{sep}follow=false", headers=auth)
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("text/event-stream")
        return parse_sse(response.text)

    def test_stream_replays_history_with_ids(self, client, auth):
        add_object(client, auth)
        events = self.read_replay(client, auth)
        assert events[0][0] == events[0][1]["seq"] == 1
        assert [e[1]["seq"] for e in events] == list(range(1, len(events) + 1))

    def test_one_json_event_per_message(self, client, auth):
        add_object(client, auth)
        events = self.read_replay(client, auth)
        for event_id, payload in events:
            assert event_id == payload["seq"]
            assert {"seq", "timestamp", "command_id", "subject", "outcome", "details"} <= set(payload)

    def test_since_resumes_after_the_given_sequence(self, client, auth):
        add_object(client, auth)
        client.get("/v1/status", headers=auth)
        all_events = self.read_replay(client, auth)
        first_seq = all_events[0][1]["seq"]
        later = self.read_replay(client, auth, params=f"?since={first_seq}")
        assert later[0][1]["seq"] == first_seq + 1


class TestLiveStreamOverRealServer:
    def test_live_events_follow_the_replay(self, tmp_path, clock):
        """End to end over a real socket: uvicorn serving the app, an SSE
        consumer seeing a command that runs mid-stream."""
        import socket
        import threading
        import time as wall

        import httpx
        import uvicorn

        service = ControlService(tmp_path / "live", clock=clock, transport=ScriptedTransport())
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        config = uvicorn.Config(
            create_app(service, ui_dist=None), host="127.0.0.1", port=port, log_level="critical"
        )
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        base = f"http://127.0.0.1:{port}"
        try:
            deadline = wall.monotonic() + 10
            while wall.monotonic() < deadline:
                try:
                    httpx.get(base + "/v1/commands/schema", timeout=1)
                    break
                except httpx.HTTPError:
                    wall.sleep(0.05)
            token = httpx.post(base + "/v1/session", json={"principal": "owner"}).json()["token"]
            headers = {"Authorization": f"Bearer {token}"}
            seen = []
            with httpx.stream(
                "GET", base + "/v1/events", headers=headers, timeout=10
            ) as stream:
                httpx.post(
                    base + "/v1/commands",
                    json={"verb": "status", "arguments": {}},
                    headers=headers,
                    timeout=5,
                )
                for line in stream.iter_lines():
                    if line.startswith("data: "):
                        seen.append(json.loads(line[6:]))
                        if any(e.get("details", {}).get("verb") == "status" for e in seen):
                            break
            assert any(e.get("details", {}).get("verb") == "status" for e in seen)
            seqs = [e["seq"] for e in seen if "seq" in e]
            assert seqs == sorted(seqs)
        finally:
            server.should_exit = True
            thread.join(timeout=5)


class TestSyncWire:
    def make_pair(self, tmp_path, clock):
        a = ControlService(tmp_path / "a", clock=clock, transport=ScriptedTransport())
        b = ControlService(tmp_path / "b", clock=clock, transport=ScriptedTransport())
        return a, b

    def test_commit_exchange_over_the_api(self, tmp_path, clock):
        peer_a, peer_b = self.make_pair(tmp_path, clock)
        token_a = peer_a.login("owner")
        obj = make_data(payload=b"shared v1", name="shared")
        peer_a.handle(
            Command(
                "add_object",
                {"manifest": object_to_manifest(obj),
                 "payload_b64": base64.b64encode(b"shared v1").decode()},
                token_a,
            )
        )
        # peer_b holds a diverging line of the same object
        token_b = peer_b.login("owner")
        peer_b.handle(
            Command(
                "add_object",
                {"manifest": object_to_manifest(obj),
                 "payload_b64": base64.b64encode(b"shared v1").decode()},
                token_b,
            )
        )
        # both sides share the identical genesis (content addressing), then edit apart
        peer_a.store.commit(obj.id, b"a-side edit", author="owner")
        peer_b.store.commit(obj.id, b"b-side edit", author="owner")

        client_b = TestClient(create_app(peer_b, ui_dist=None))
        remote_token = client_b.post("/v1/session", json={"principal": "owner"}).json()["token"]

        # patch urllib to route through the test client
        import urllib.request

        class FakeResponse:
            def __init__(self, response):
                self._response = response

            def read(self):
                return self._response.content

            def __enter__(self):
                return self

            def __exit__(self, *args):
                return False

        def fake_urlopen(request, timeout=None):
            url = request.full_url if hasattr(request, "full_url") else request
            path = url.split("http://peer-b", 1)[1]
            headers = dict(getattr(request, "headers", {}) or {})
            method = getattr(request, "method", None) or "GET"
            if method == "POST":
                response = client_b.post(
                    path, content=request.data,
                    headers={**headers, "Content-Type": "application/json"},
                )
            else:
                response = client_b.get(path, headers=headers)
            if response.status_code >= 400:
                raise OSError(f"status {response.status_code}: {response.text}")
            return FakeResponse(response)

        original = urllib.request.urlopen
        urllib.request.urlopen = fake_urlopen
        try:
            result = peer_a.handle(
                Command(
                    "sync",
                    {"object_id": obj.id, "peer": "http://peer-b", "peer_token": remote_token},
                    token_a,
                )
            )
        finally:
            urllib.request.urlopen = original
        assert result.ok, result.error
        assert set(peer_a.store.heads(obj.id)) == set(peer_b.store.heads(obj.id))
        assert len(peer_a.store.heads(obj.id)) == 2  # divergence preserved for resolve
        assert peer_a.store.checkout(obj.id, peer_b.store.heads(obj.id)[0]) is not None


class TestUiMount:
    def test_placeholder_when_no_build_present(self, client, auth):
        response = client.get("/ui")
        assert response.status_code == 200
        assert "console" in response.text
