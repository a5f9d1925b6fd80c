import json
import socket
import threading
import time
from pathlib import Path

import pytest
import requests
import uvicorn
from click.testing import CliRunner

from test_api import ApiHarness, GOOD_DUMP, seed_transport

from biotrak.cli import main
from biotrak.keys import SigningKey, fingerprint, load_public_key
from biotrak.ledger import Role
from biotrak.txbuild import inbound_receipt, production


def free_port() -> int:
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


class LiveServer:
    def __init__(self, app):
        self.port = free_port()
        config = uvicorn.Config(app, host="127.0.0.1", port=self.port, log_level="error")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)
        self.thread.start()
        deadline = time.time() + 10
        while not self.server.started:
            if time.time() > deadline:
                raise RuntimeError("API server did not start")
            time.sleep(0.02)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=5)


@pytest.fixture(scope="module")
def live(producer_key, producer_b_key, transporter_key, dual_key):
    actors = [
        (producer_key, (Role.PRODUCER,), "Farm Alpha"),
        (producer_b_key, (Role.PRODUCER,), "Mill Beta"),
        (transporter_key, (Role.TRANSPORTER,), "Coldline"),
        (dual_key, (Role.PRODUCER, Role.TRANSPORTER), "Hybrid Co"),
    ]
    harness = ApiHarness(actors, seed=77)
    server = LiveServer(harness.client.app)
    yield harness, server
    server.stop()


@pytest.fixture()
def runner():
    return CliRunner()


class TestKeygen:
    def test_fresh_key(self, runner, tmp_path):
        out = tmp_path / "k1.key"
        result = runner.invoke(main, ["keygen", "--out", str(out)])
        assert result.exit_code == 0, result.output
        fp = result.output.strip()
        assert len(fp) == 16 and all(c in "0123456789abcdef" for c in fp)
        assert out.exists() and Path(str(out) + ".pub").exists()
        assert (out.stat().st_mode & 0o777) == 0o600
        assert fingerprint(load_public_key(str(out) + ".pub")) == fp

    def test_existing_path_refused(self, runner, tmp_path):
        out = tmp_path / "k2.key"
        assert runner.invoke(main, ["keygen", "--out", str(out)]).exit_code == 0
        result = runner.invoke(main, ["keygen", "--out", str(out)])
        assert result.exit_code == 2

    def test_force_overwrites(self, runner, tmp_path):
        out = tmp_path / "k3.key"
        first = runner.invoke(main, ["keygen", "--out", str(out)])
        second = runner.invoke(main, ["keygen", "--out", str(out), "--force"])
        assert second.exit_code == 0
        assert first.output != second.output  # distinct keys


def write_spec(tmp_path, key_files, name="cli-chain"):
    spec = {
        "name": name,
        "authorities": [{"pubkey": str(k) + ".pub", "endpoint": ""} for k in key_files],
        "coldchain": {"min_temp": "0.0", "max_temp": "8.0", "max_excursion_seconds": 600},
    }
    path = tmp_path / "chain.json"
    path.write_text(json.dumps(spec))
    return path


class TestGenesis:
    def _keys(self, runner, tmp_path, n):
        files = []
        for i in range(n):
            out = tmp_path / f"auth{i}.key"
            assert runner.invoke(main, ["keygen", "--out", str(out)]).exit_code == 0
            files.append(out)
        return files

    def test_three_keys_ok_and_deterministic(self, runner, tmp_path):
        keys = self._keys(runner, tmp_path, 3)
        spec = write_spec(tmp_path, keys)
        args = ["genesis", "--spec", str(spec), "--timestamp", "1700000000",
                "--out", str(tmp_path / "genesis.json")]
        first = runner.invoke(main, args)
        assert first.exit_code == 0, first.output
        chain_id = first.output.strip()
        assert len(chain_id) == 64
        second = runner.invoke(main, args)
        assert second.output.strip() == chain_id

    def test_two_keys_exit_3(self, runner, tmp_path):
        keys = self._keys(runner, tmp_path, 2)
        spec = write_spec(tmp_path, keys)
        result = runner.invoke(main, ["genesis", "--spec", str(spec),
                                      "--out", str(tmp_path / "genesis.json")])
        assert result.exit_code == 3
        assert "minimum-authority" in result.output

    def test_bad_spec_exit_3(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        result = runner.invoke(main, ["genesis", "--spec", str(bad),
                                      "--out", str(tmp_path / "genesis.json")])
        assert result.exit_code == 3


class TestSubmitTraceIngest:
    def _save_key(self, key, tmp_path, name):
        path = tmp_path / name
        key.save(path)
        return path

    def test_submit_and_trace(self, runner, tmp_path, live, producer_key):
        harness, server = live
        key_path = self._save_key(producer_key, tmp_path, "prod.key")
        tx_doc = {"process_type": "inbound_receipt", "input_lots": ["CLI-RAW-1"],
                  "delivery_note": "DN-CLI-1"}
        tx_file = tmp_path / "tx.json"
        tx_file.write_text(json.dumps(tx_doc))
        result = runner.invoke(main, ["submit", "--api", server.url,
                                      "--key", str(key_path), "--tx", str(tx_file)])
        assert result.exit_code == 0, result.output
        receipt = json.loads(result.output)
        assert receipt["status"] in ("accepted", "queued")

        prod_doc = {"process_type": "production", "input_lots": ["CLI-RAW-1"],
                    "output_lot": "CLI-TOM-1"}
        prod_file = tmp_path / "tx2.json"
        prod_file.write_text(json.dumps(prod_doc))
        assert runner.invoke(main, ["submit", "--api", server.url, "--key", str(key_path),
                                    "--tx", str(prod_file)]).exit_code == 0

        trace = runner.invoke(main, ["trace", "CLI-TOM-1", "--api", server.url])
        assert trace.exit_code == 0, trace.output
        lines = trace.output.splitlines()
        assert lines[0].startswith("production ")
        assert lines[1].startswith("  inbound_receipt ")
        assert any("external input lot=CLI-RAW-1" in line for line in lines)

    def test_trace_json_matches_api_response(self, runner, live):
        harness, server = live
        resp = requests.get(f"{server.url}/v1/lots/CLI-TOM-1/history", timeout=10)
        result = runner.invoke(main, ["trace", "CLI-TOM-1", "--api", server.url, "--json"])
        assert result.exit_code == 0
        assert result.output == resp.text + "\n"

    def test_trace_unknown_exit_4(self, runner, live):
        _, server = live
        result = runner.invoke(main, ["trace", "CLI-GHOST", "--api", server.url])
        assert result.exit_code == 4

    def test_api_url_from_env(self, runner, live):
        _, server = live
        result = runner.invoke(main, ["trace", "CLI-TOM-1"],
                               env={"BIOTRAK_API": server.url})
        assert result.exit_code == 0

    def test_network_failure_exit_5(self, runner, tmp_path, producer_key):
        key_path = self._save_key(producer_key, tmp_path, "prod2.key")
        result = runner.invoke(main, ["trace", "X", "--api", "http://127.0.0.1:1"])
        assert result.exit_code == 5

    def test_ingest_sensor(self, runner, tmp_path, live, producer_key, transporter_key):
        harness, server = live
        start = seed_transport(harness, producer_key, transporter_key, lot="CLI-TR-1")
        key_path = self._save_key(transporter_key, tmp_path, "trans.key")
        dump_file = tmp_path / "dump.csv"
        dump_file.write_bytes(GOOD_DUMP)
        result = runner.invoke(main, [
            "ingest-sensor", "--api", server.url, "--key", str(key_path),
            "--transport", start.tx_id.hex(), "--dump", str(dump_file),
        ])
        assert result.exit_code == 0, result.output
        assert "NON-COMPLIANT" in result.output
        again = runner.invoke(main, [
            "ingest-sensor", "--api", server.url, "--key", str(key_path),
            "--transport", start.tx_id.hex(), "--dump", str(dump_file),
        ])
        assert again.exit_code == 2  # already terminated -> refusal


class TestRunCommand:
    def test_foreign_key_refused(self, runner, tmp_path):
        for i in range(3):
            assert runner.invoke(main, ["keygen", "--out", str(tmp_path / f"a{i}.key")]).exit_code == 0
        spec = write_spec(tmp_path, [tmp_path / f"a{i}.key" for i in range(3)])
        assert runner.invoke(main, ["genesis", "--spec", str(spec), "--timestamp", "1",
                                    "--out", str(tmp_path / "genesis.json")]).exit_code == 0
        assert runner.invoke(main, ["keygen", "--out", str(tmp_path / "foreign.key")]).exit_code == 0
        config = tmp_path / "node.conf"
        config.write_text(
            f"mode = authoritative\ndata_dir = {tmp_path}/data\n"
            f"genesis = {tmp_path}/genesis.json\nkey_path = {tmp_path}/foreign.key\n"
        )
        result = runner.invoke(main, ["run", "--config", str(config)])
        assert result.exit_code == 2
        assert "authority set" in result.output

    def test_bad_config_exit_3(self, runner, tmp_path):
        config = tmp_path / "node.conf"
        config.write_text("mode = wat\n")
        result = runner.invoke(main, ["run", "--config", str(config)])
        assert result.exit_code == 3


class TestTcpCluster:
    def test_three_authorities_one_replica_converge(self, runner, tmp_path,
                                                    producer_key):
        from biotrak.chainspec import load_node_config
        from biotrak.runtime import NodeRuntime

        keys = []
        for i in range(3):
            out = tmp_path / f"auth{i}.key"
            assert runner.invoke(main, ["keygen", "--out", str(out)]).exit_code == 0
            keys.append(out)
        prod_path = tmp_path / "prod.key"
        producer_key.save(prod_path)
        spec = {
            "name": "tcp-test",
            "authorities": [{"pubkey": str(k) + ".pub", "endpoint": ""} for k in keys],
            "actors": [{"pubkey": str(prod_path) + ".pub", "roles": ["producer"],
                        "name": "Farm"}],
            "coldchain": {"min_temp": "0.0", "max_temp": "8.0",
                          "max_excursion_seconds": 600},
        }
        spec_path = tmp_path / "chain.json"
        spec_path.write_text(json.dumps(spec))
        assert runner.invoke(main, ["genesis", "--spec", str(spec_path),
                                    "--timestamp", "1700000000",
                                    "--out", str(tmp_path / "genesis.json")]).exit_code == 0

        p2p = [free_port() for _ in range(4)]
        api = [free_port() for _ in range(4)]
        runtimes = []
        try:
            for i in range(4):
                is_replica = i == 3
                peers = ",".join(f"127.0.0.1:{p2p[j]}" for j in range(3) if j != i)
                lines = [
                    f"mode = {'non-authoritative' if is_replica else 'authoritative'}",
                    f"data_dir = {tmp_path}/data{i}",
                    f"genesis = {tmp_path}/genesis.json",
                    f"listen = 127.0.0.1:{p2p[i]}",
                    f"api_listen = 127.0.0.1:{api[i]}",
                    f"peers = {peers}",
                ]
                if not is_replica:
                    lines.append(f"key_path = {keys[i]}")
                config_path = tmp_path / f"node{i}.conf"
                config_path.write_text("\n".join(lines) + "\n")
                runtime = NodeRuntime(load_node_config(config_path))
                runtime.start()
                runtimes.append(runtime)

            base = f"http://127.0.0.1:{api[0]}"
            deadline = time.time() + 20
            while time.time() < deadline:
                try:
                    if requests.get(f"{base}/v1/chain/head", timeout=2).status_code == 200:
                        break
                except requests.RequestException:
                    time.sleep(0.2)

            tx_file = tmp_path / "tx.json"
            for i in range(3):
                tx_file.write_text(json.dumps({
                    "process_type": "inbound_receipt",
                    "input_lots": [f"TCP-{i}"],
                    "delivery_note": f"DN-{i}",
                }))
                result = runner.invoke(main, [
                    "submit", "--api", base, "--key", str(prod_path),
                    "--tx", str(tx_file),
                ])
                assert result.exit_code == 0, result.output

            replica_api = f"http://127.0.0.1:{api[3]}"
            deadline = time.time() + 60
            heights = {}
            while time.time() < deadline:
                try:
                    heights = {
                        i: requests.get(f"http://127.0.0.1:{api[i]}/v1/chain/head",
                                        timeout=2).json()
                        for i in range(4)
                    }
                    if all(h["height"] == 3 for h in heights.values()):
                        break
                except requests.RequestException:
                    pass
                time.sleep(0.3)
            assert all(h["height"] == 3 for h in heights.values()), heights
            assert len({h["block_hash"] for h in heights.values()}) == 1

            # the replica serves reads but refuses writes
            tx_file.write_text(json.dumps({
                "process_type": "inbound_receipt", "input_lots": ["TCP-X"],
                "delivery_note": "DN-X",
            }))
            refused = runner.invoke(main, [
                "submit", "--api", replica_api, "--key", str(prod_path),
                "--tx", str(tx_file),
            ])
            assert refused.exit_code == 2
        finally:
            for runtime in runtimes:
                runtime.stop()
