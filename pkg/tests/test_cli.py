"""CLI subcommands, exit codes, and output determinism."""

import json
import os
import socket
import subprocess
import sys

import pytest

from agentmesh.catalog import WEATHER_PD_TEXT
from agentmesh.cli import main
from agentmesh.documents import compute_hash
from agentmesh.registry import RegistryStore
from agentmesh.serve import HostServer
from agentmesh.transport import Network

WEATHER_HASH = compute_hash(WEATHER_PD_TEXT)
CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def run_cli(*argv, capsys=None):
    code = main(list(argv))
    out, err = capsys.readouterr() if capsys else ("", "")
    return code, out, err


class TestHashCommand:
    def test_digest_of_fixture(self, tmp_path, capsys):
        path = tmp_path / "weather.pd"
        path.write_text(WEATHER_PD_TEXT, encoding="utf-8", newline="")
        code, out, _ = run_cli("hash", str(path), capsys=capsys)
        assert code == 0
        assert out.strip() == WEATHER_HASH

    def test_missing_file_exit_2(self, tmp_path, capsys):
        code, _, err = run_cli("hash", str(tmp_path / "absent.pd"), capsys=capsys)
        assert code == 2
        assert err.strip()


@pytest.fixture
def pd_http_server():
    network = Network()
    registry = RegistryStore("db1", network)
    registry.submit(WEATHER_PD_TEXT)
    server = HostServer(registry)
    server.start_background()
    yield server
    server.shutdown()


class _TamperedHost:
    def handle_request(self, method, path, query, body, sender_id):
        return 200, "text/plain", WEATHER_PD_TEXT.replace("22.5", "99.9")


class TestFetchCommand:
    def test_fetch_verifies_and_writes(self, tmp_path, capsys, pd_http_server):
        out_path = tmp_path / "fetched.pd"
        code, out, _ = run_cli("fetch", WEATHER_HASH,
                               f"{pd_http_server.url}/pd/{WEATHER_HASH}",
                               "--out", str(out_path), capsys=capsys)
        assert code == 0
        assert out_path.read_text(encoding="utf-8") == WEATHER_PD_TEXT

    def test_tampered_source_exit_4(self, tmp_path, capsys):
        server = HostServer(_TamperedHost())
        server.start_background()
        try:
            code, _, err = run_cli("fetch", WEATHER_HASH, f"{server.url}/pd/x",
                                   "--out", str(tmp_path / "x.pd"), capsys=capsys)
        finally:
            server.shutdown()
        assert code == 4
        assert "integrity" in err

    def test_cached_fetch_uses_no_network(self, tmp_path, capsys):
        store = tmp_path / "store"
        store.mkdir()
        (store / f"{WEATHER_HASH}.pd").write_text(WEATHER_PD_TEXT, encoding="utf-8",
                                                  newline="")
        # unreachable source: must not matter when the store already has it
        code, out, _ = run_cli("fetch", WEATHER_HASH, "http://127.0.0.1:1/pd/x",
                               "--store", str(store), capsys=capsys)
        assert code == 0
        assert out.strip().endswith(f"{WEATHER_HASH}.pd")


class TestRunSim:
    def test_two_agent_summary_contains_break_even(self, capsys):
        code, out, _ = run_cli("run-sim", os.path.join(CONFIGS, "two_agent.json"),
                               capsys=capsys)
        assert code == 0
        assert "break_even_protocol_uses: 3" in out

    def test_missing_scenario_exit_2(self, capsys):
        code, _, err = run_cli("run-sim", "no-such-file.json", capsys=capsys)
        assert code == 2

    def test_mode_counterfactual(self, tmp_path, capsys):
        scenario = tmp_path / "s.json"
        scenario.write_text(json.dumps({"kind": "network", "name": "t", "seed": 3,
                                        "n_users": 4, "total_queries": 30}))
        code, out, _ = run_cli("run-sim", str(scenario), "--mode",
                               "natural_language_only", capsys=capsys)
        assert code == 0
        assert "mode: natural_language_only" in out
        assert "distinct_pds: 0" in out

    def test_same_seed_identical_csv(self, tmp_path, capsys):
        scenario = tmp_path / "s.json"
        scenario.write_text(json.dumps({"kind": "network", "name": "t", "seed": 5,
                                        "n_users": 4, "total_queries": 30}))
        csvs = []
        for run_dir in ("a", "b"):
            out_dir = tmp_path / run_dir
            code, _, _ = run_cli("run-sim", str(scenario), "--out", str(out_dir),
                                 capsys=capsys)
            assert code == 0
            csvs.append((out_dir / "metrics.csv").read_text())
        assert csvs[0] == csvs[1]

    def test_paired_mode_prints_ratio(self, tmp_path, capsys):
        scenario = tmp_path / "s.json"
        scenario.write_text(json.dumps({"kind": "network", "name": "t", "seed": 3,
                                        "n_users": 4, "total_queries": 40}))
        code, out, _ = run_cli("run-sim", str(scenario), "--mode", "paired",
                               capsys=capsys)
        assert code == 0
        assert "cost_ratio:" in out

    def test_bad_scenario_value_exit_2(self, tmp_path, capsys):
        scenario = tmp_path / "s.json"
        scenario.write_text(json.dumps({"kind": "network", "nonsense_key": 1}))
        code, _, err = run_cli("run-sim", str(scenario), capsys=capsys)
        assert code == 2


class TestReportCommand:
    def test_report_from_csv(self, tmp_path, capsys):
        scenario = tmp_path / "s.json"
        scenario.write_text(json.dumps({"kind": "network", "name": "t", "seed": 3,
                                        "n_users": 4, "total_queries": 30}))
        out_dir = tmp_path / "out"
        run_cli("run-sim", str(scenario), "--out", str(out_dir), capsys=capsys)
        code, out, _ = run_cli("report", str(out_dir / "metrics.csv"), capsys=capsys)
        assert code == 0
        assert "queries: 30" in out

    def test_missing_csv_exit_2(self, capsys):
        code, _, _ = run_cli("report", "absent.csv", capsys=capsys)
        assert code == 2


class TestServeCommands:
    def test_serve_agent_missing_config_exit_2(self, capsys):
        code, _, err = run_cli("serve-agent", "no-such-config.json", capsys=capsys)
        assert code == 2

    def test_serve_agent_port_in_use_exit_3(self, tmp_path, capsys):
        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        try:
            code, _, err = run_cli(
                "serve-agent", os.path.join(CONFIGS, "agent_weather.json"),
                "--port", str(port), capsys=capsys)
        finally:
            blocker.close()
        assert code == 3
        assert "bind" in err

    def test_serve_registry_corrupt_store_exit_4(self, tmp_path, capsys):
        root = tmp_path / "db"
        root.mkdir()
        (root / f"{WEATHER_HASH}.pd").write_text("wrong bytes", encoding="utf-8")
        code, _, err = run_cli("serve-registry", str(root), capsys=capsys)
        assert code == 4

    def test_serve_agent_endpoint_live(self, tmp_path):
        """End to end through the console entry: wellknown answers."""
        import requests
        port = _free_port()
        proc = subprocess.Popen(
            [sys.executable, "-m", "agentmesh.cli", "serve-agent",
             os.path.join(CONFIGS, "agent_weather.json"), "--port", str(port)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE)
        try:
            deadline = 50
            wk = None
            for _ in range(deadline):
                try:
                    wk = requests.get(f"http://127.0.0.1:{port}/.wellknown", timeout=1)
                    break
                except requests.RequestException:
                    import time
                    time.sleep(0.1)
            assert wk is not None and wk.status_code == 200
            assert isinstance(wk.json(), dict)
        finally:
            proc.terminate()
            proc.wait(timeout=10)


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]
