"""Endpoint conformance over real sockets."""

import json

import pytest
import requests

from agentmesh import catalog
from agentmesh.documents import compute_hash
from agentmesh.envelope import parse_wellknown
from agentmesh.gateway import CostLedger
from agentmesh.registry import RegistryStore
from agentmesh.runtime import BOOTSTRAP_HASH, Agent, AgentConfig, ToolDescriptor
from agentmesh.scripted import ScriptedBackend
from agentmesh.serve import HostServer
from agentmesh.transport import Network
from conftest import WEATHER_TEXT

WEATHER_HASH = compute_hash(WEATHER_TEXT)


@pytest.fixture(scope="module")
def agent_server():
    network = Network()
    weather = catalog.CATALOG["weather"]
    config = AgentConfig(
        agent_id="bob", role="server",
        tools=(ToolDescriptor("weather_db", "database", weather.purpose, "weather"),),
    )
    agent = Agent(config, ScriptedBackend(), CostLedger(), network,
                  tool_impls={"weather_db": catalog.MOCK_TOOLS["weather_db"]},
                  task_classifier=catalog.classify)
    server = HostServer(agent)
    server.start_background()
    yield server
    server.shutdown()


@pytest.fixture(scope="module")
def registry_server():
    network = Network()
    registry = RegistryStore("db1", network)
    server = HostServer(registry)
    server.start_background()
    yield server, registry
    server.shutdown()


class TestAgentEndpoint:
    def test_post_natural_language(self, agent_server):
        body = json.dumps({"protocolHash": None, "protocolSources": [],
                           "body": "What is the weather forecast for London, UK on 2024-09-27?"})
        resp = requests.post(agent_server.url + "/", data=body,
                             headers={"Content-Type": "application/json"}, timeout=10)
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["status"] == "success"
        assert "Rainy, 11 degrees Celsius" in payload["body"]

    def test_wellknown_lists_bootstrap(self, agent_server):
        resp = requests.get(agent_server.url + "/.wellknown", timeout=10)
        assert resp.status_code == 200
        wk = parse_wellknown(resp.text)
        assert BOOTSTRAP_HASH in wk

    def test_malformed_envelope_is_400(self, agent_server):
        resp = requests.post(agent_server.url + "/", data="not json", timeout=10)
        assert resp.status_code == 400

    def test_unknown_path_404(self, agent_server):
        assert requests.get(agent_server.url + "/nowhere", timeout=10).status_code == 404

    def test_unknown_protocol_rejected_over_http(self, agent_server):
        ghost = compute_hash("missing")
        body = json.dumps({"protocolHash": ghost,
                           "protocolSources": ["http://127.0.0.1:1/pd/x"], "body": "{}"})
        resp = requests.post(agent_server.url + "/", data=body, timeout=15)
        assert resp.json() == {"status": "rejected"}


class TestRegistryEndpoint:
    def test_submit_then_fetch(self, registry_server):
        server, _ = registry_server
        resp = requests.post(server.url + "/pd", data=WEATHER_TEXT.encode("utf-8"),
                             timeout=10)
        assert resp.status_code == 200 and resp.text == WEATHER_HASH
        fetched = requests.get(f"{server.url}/pd/{WEATHER_HASH}", timeout=10)
        assert fetched.text == WEATHER_TEXT

    def test_query_endpoint(self, registry_server):
        server, registry = registry_server
        registry.submit(WEATHER_TEXT)
        rows = requests.get(server.url + "/pd", params={"query": "weather"},
                            timeout=10).json()
        assert rows and rows[0]["hash"] == WEATHER_HASH

    def test_unknown_hash_404(self, registry_server):
        server, _ = registry_server
        resp = requests.get(f"{server.url}/pd/{'0' * 40}", timeout=10)
        assert resp.status_code == 404

    def test_share_endpoint_runs(self, registry_server):
        server, _ = registry_server
        assert requests.post(server.url + "/share", data=b"", timeout=10).status_code == 200

    def test_network_fetch_text_verifies(self, registry_server):
        server, registry = registry_server
        registry.submit(WEATHER_TEXT)
        network = Network()
        from agentmesh.documents import verify_document
        text = network.fetch_text(f"{server.url}/pd/{WEATHER_HASH}")
        assert verify_document(text, WEATHER_HASH).raw_text == WEATHER_TEXT
