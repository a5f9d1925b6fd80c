"""Live node runtime: TCP peer links, single event thread, HTTP service.

Peer sessions are independent socket reader threads; every inbound message
and every write operation is funneled onto one ordered event queue, so the
consensus engine runs strictly single-threaded exactly as in the simulator.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
import time
from concurrent.futures import Future

from .api import create_app
from .chainspec import FileConfig
from .errors import BiotrakError
from .keys import SigningKey
from .netsync import NodeMode, decode_payload, encode_message
from .node import Node, NodeConfig
from .store import BlockStore

log = logging.getLogger("biotrak.runtime")

TICK_SECONDS = 0.5
RECONNECT_SECONDS = 3.0


def _parse_addr(text: str):
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


class _Conn:
    def __init__(self, peer_id: str, sock: socket.socket):
        self.peer_id = peer_id
        self.sock = sock
        self.alive = True
        self.write_lock = threading.Lock()

    def send(self, frame: bytes) -> bool:
        try:
            with self.write_lock:
                self.sock.sendall(frame)
            return True
        except OSError:
            self.alive = False
            return False

    def close(self) -> None:
        self.alive = False
        try:
            self.sock.close()
        except OSError:
            pass


class NodeRuntime:
    def __init__(self, config: FileConfig):
        self.config = config
        key = SigningKey.load(config.key_path) if config.key_path else None
        from .chainspec import load_genesis_file

        genesis = load_genesis_file(config.genesis_path)
        store = BlockStore(config.data_dir)
        if store.recovered_partial_tail:
            log.warning("recovered from a partially written tail record")
        node_id = key.fingerprint if key else f"replica@{config.listen or 'local'}"
        self.node = Node(
            NodeConfig(node_id=node_id, mode=config.mode, key=key, peers=tuple(config.peers)),
            genesis,
            store=store,
        )
        self.events: queue.Queue = queue.Queue()
        self.conns: dict = {}
        self._stop = threading.Event()
        self._threads: list = []
        self._listener: socket.socket | None = None
        self._api_server = None

    # -- lifecycle ---------------------------------------------------------------

    def start(self) -> None:
        self._spawn(self._event_loop, "events")
        if self.config.listen:
            self._listen()
        for peer in self.config.peers:
            self._spawn(lambda p=peer: self._dialer(p), f"dial-{peer}")
        if self.config.api_listen:
            self._start_api()

    def stop(self) -> None:
        self._stop.set()
        if self._listener:
            try:
                self._listener.close()
            except OSError:
                pass
        for conn in list(self.conns.values()):
            conn.close()
        if self._api_server is not None:
            self._api_server.should_exit = True
        for t in self._threads:
            t.join(timeout=5)
        self.node.store.close()

    def wait(self) -> None:
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            self.stop()

    def _spawn(self, target, name: str) -> None:
        t = threading.Thread(target=target, name=f"biotrak-{name}", daemon=True)
        t.start()
        self._threads.append(t)

    # -- event loop ---------------------------------------------------------------

    def _event_loop(self) -> None:
        next_tick = time.monotonic()
        while not self._stop.is_set():
            now = time.monotonic()
            if now >= next_tick:
                self.node.tick()
                next_tick = now + TICK_SECONDS
                self._flush_outbox()
            try:
                event = self.events.get(timeout=min(TICK_SECONDS, max(next_tick - now, 0.01)))
            except queue.Empty:
                continue
            try:
                event()
            except Exception:
                log.exception("event failed")
            self._flush_outbox()

    def _flush_outbox(self) -> None:
        node = self.node
        while node.outbox:
            peer_id, msg = node.outbox.pop(0)
            conn = self.conns.get(peer_id)
            if conn is None or not conn.alive:
                continue
            if not conn.send(encode_message(msg)):
                self._drop_conn(peer_id)

    def _drop_conn(self, peer_id: str) -> None:
        conn = self.conns.pop(peer_id, None)
        if conn:
            conn.close()
        self.node.on_peer_disconnected(peer_id)

    def submit(self, tx, submitter_id: str, signature: bytes):
        """Thread-safe submission from the HTTP layer."""
        fut: Future = Future()

        def run():
            try:
                fut.set_result(self.node.submit_local(tx, submitter_id, signature))
            except BiotrakError as exc:
                fut.set_exception(exc)

        self.events.put(run)
        return fut.result(timeout=30)

    # -- TCP ------------------------------------------------------------------------

    def _listen(self) -> None:
        host, port = _parse_addr(self.config.listen)
        listener = socket.create_server((host, port))
        listener.settimeout(0.5)
        self._listener = listener

        def accept_loop():
            counter = 0
            while not self._stop.is_set():
                try:
                    sock, addr = listener.accept()
                except socket.timeout:
                    continue
                except OSError:
                    return
                counter += 1
                peer_id = f"in-{addr[0]}:{addr[1]}-{counter}"
                self._register_conn(peer_id, sock)

        self._spawn(accept_loop, "accept")

    def _dialer(self, peer: str) -> None:
        host, port = _parse_addr(peer)
        while not self._stop.is_set():
            conn = self.conns.get(peer)
            if conn is None or not conn.alive:
                try:
                    sock = socket.create_connection((host, port), timeout=3)
                    self._register_conn(peer, sock)
                except OSError:
                    pass
            time.sleep(RECONNECT_SECONDS)

    def _register_conn(self, peer_id: str, sock: socket.socket) -> None:
        sock.settimeout(None)
        conn = _Conn(peer_id, sock)
        old = self.conns.get(peer_id)
        if old:
            old.close()
        self.conns[peer_id] = conn
        self.events.put(lambda: self.node.on_peer_connected(peer_id))
        self._spawn(lambda: self._read_loop(conn), f"read-{peer_id}")

    def _read_loop(self, conn: _Conn) -> None:
        sock = conn.sock
        try:
            while not self._stop.is_set() and conn.alive:
                header = self._read_exact(sock, 5)
                if header is None:
                    break
                (length,) = struct.unpack(">I", header[:4])
                tag = header[4]
                payload = self._read_exact(sock, length)
                if payload is None:
                    break
                try:
                    msg = decode_payload(tag, payload)
                except BiotrakError as exc:
                    log.warning("undecodable message from %s: %s", conn.peer_id, exc)
                    break
                self.events.put(lambda m=msg: self.node.handle_message(conn.peer_id, m))
        finally:
            self.events.put(lambda: self._drop_conn(conn.peer_id))

    @staticmethod
    def _read_exact(sock: socket.socket, n: int):
        buf = b""
        while len(buf) < n:
            try:
                chunk = sock.recv(n - len(buf))
            except OSError:
                return None
            if not chunk:
                return None
            buf += chunk
        return buf

    # -- HTTP -------------------------------------------------------------------------

    def _start_api(self) -> None:
        import uvicorn

        app = create_app(self.node, submit_fn=self.submit)
        host, port = _parse_addr(self.config.api_listen)
        config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        self._api_server = uvicorn.Server(config)
        self._spawn(self._api_server.run, "api")
