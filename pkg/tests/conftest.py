"""Shared fixtures: canonical texts and a wired two-agent world."""

from __future__ import annotations

import pytest

from agentmesh import catalog
from agentmesh.gateway import CostLedger, ModelPrice
from agentmesh.registry import RegistryStore
from agentmesh.runtime import Agent, AgentConfig, EscalationThresholds, ToolDescriptor
from agentmesh.scripted import ScriptedBackend
from agentmesh.transport import Network

WEATHER_TEXT = catalog.WEATHER_PD_TEXT
FLAT_PRICES = {"gpt-4o": ModelPrice(5.0, 15.0)}


@pytest.fixture
def weather_task():
    return catalog.CATALOG["weather"]


class World:
    """One network, one ledger, one registry, agents on demand."""

    def __init__(self):
        self.network = Network()
        self.ledger = CostLedger()
        self.registry = RegistryStore("db1", self.network)
        self.network.register("db1", self.registry)
        self.agents: dict[str, Agent] = {}

    def add_agent(self, agent_id: str, role: str = "user", tools=(), impls=None,
                  thresholds: EscalationThresholds | None = None,
                  backend: ScriptedBackend | None = None,
                  registry_url: str | None = "mem://db1", **config_kw) -> Agent:
        config = AgentConfig(
            agent_id=agent_id,
            role=role,
            thresholds=thresholds or EscalationThresholds(),
            tools=tuple(tools),
            known_peers={},
            registry_url=registry_url,
            **config_kw,
        )
        agent = Agent(config, backend or ScriptedBackend(),
                      self.ledger, self.network,
                      tool_impls=impls or {}, task_classifier=catalog.classify)
        self.network.register(agent_id, agent)
        for other in self.agents.values():
            other.config.known_peers[agent_id] = f"mem://{agent_id}"
            agent.config.known_peers[other.agent_id] = f"mem://{other.agent_id}"
        self.agents[agent_id] = agent
        return agent

    def add_weather_server(self, agent_id: str = "bob", **kw) -> Agent:
        weather = catalog.CATALOG["weather"]
        return self.add_agent(
            agent_id, role="server",
            tools=(ToolDescriptor("weather_db", "database", weather.purpose, "weather"),),
            impls={"weather_db": catalog.MOCK_TOOLS["weather_db"]},
            **kw,
        )


@pytest.fixture
def world():
    return World()
