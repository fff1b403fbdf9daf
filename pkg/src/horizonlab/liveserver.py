"""Real-time telemetry/steering endpoint for manual sessions.

One port serves both the console's static files (plain HTTP GET) and a
WebSocket upgrade at /ws carrying JSON messages: outbound ``config`` then
``telemetry`` frames, inbound ``steer`` messages. The simulation loop and
the transport never share mutable state directly: steering goes through a
latest-value slot, telemetry through per-client latest-frame mailboxes, so
the loop never blocks on a slow client.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import socket
import struct
import threading
import time
from pathlib import Path
from typing import Dict, Optional

from .errors import ConfigError
from .harness import ExperimentConfig, LiveBridge, run_experiment

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


# ---------------------------------------------------------------------------
# RFC 6455 framing (text frames, server side)
# ---------------------------------------------------------------------------

def encode_text_frame(payload: bytes) -> bytes:
    n = len(payload)
    if n < 126:
        header = struct.pack("!BB", 0x81, n)
    elif n < 1 << 16:
        header = struct.pack("!BBH", 0x81, 126, n)
    else:
        header = struct.pack("!BBQ", 0x81, 127, n)
    return header + payload


def encode_close_frame() -> bytes:
    return struct.pack("!BB", 0x88, 0)


def encode_pong(payload: bytes) -> bytes:
    return struct.pack("!BB", 0x8A, len(payload)) + payload


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("socket closed")
        buf += chunk
    return buf


def read_frame(sock: socket.socket):
    """(opcode, payload); client frames are masked per the RFC."""
    b0, b1 = struct.unpack("!BB", _recv_exact(sock, 2))
    opcode = b0 & 0x0F
    masked = bool(b1 & 0x80)
    length = b1 & 0x7F
    if length == 126:
        (length,) = struct.unpack("!H", _recv_exact(sock, 2))
    elif length == 127:
        (length,) = struct.unpack("!Q", _recv_exact(sock, 8))
    mask = _recv_exact(sock, 4) if masked else b"\x00" * 4
    payload = bytearray(_recv_exact(sock, length))
    if masked:
        for i in range(length):
            payload[i] ^= mask[i % 4]
    return opcode, bytes(payload)


def handshake_response(headers: Dict[str, str]) -> bytes:
    key = headers.get("sec-websocket-key")
    if key is None:
        raise ValueError("missing Sec-WebSocket-Key")
    accept = base64.b64encode(
        hashlib.sha1((key + WS_GUID).encode()).digest()).decode()
    return ("HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept}\r\n\r\n").encode()


# ---------------------------------------------------------------------------
# Client session
# ---------------------------------------------------------------------------

class _Client:
    def __init__(self, sock: socket.socket, server: "LiveServer"):
        self.sock = sock
        self.server = server
        self.alive = True
        self._frame: Optional[bytes] = None      # latest-frame mailbox
        self._cond = threading.Condition()

    def offer(self, frame: bytes) -> None:
        with self._cond:
            self._frame = frame
            self._cond.notify()

    def sender_loop(self) -> None:
        try:
            while self.alive:
                with self._cond:
                    if self._frame is None:
                        self._cond.wait(timeout=0.5)
                    frame, self._frame = self._frame, None
                if frame is not None:
                    self.sock.sendall(frame)
        except OSError:
            pass
        finally:
            self.close()

    def receiver_loop(self) -> None:
        try:
            while self.alive:
                opcode, payload = read_frame(self.sock)
                if opcode == 0x8:          # close
                    break
                if opcode == 0x9:          # ping
                    self.sock.sendall(encode_pong(payload))
                    continue
                if opcode != 0x1:
                    continue
                self.server.handle_message(payload)
        except (OSError, ConnectionError):
            pass
        finally:
            self.close()

    def close(self) -> None:
        if not self.alive:
            return
        self.alive = False
        try:
            self.sock.sendall(encode_close_frame())
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass
        self.server.drop_client(self)


# ---------------------------------------------------------------------------
# Bridge between the loop thread and the transport threads
# ---------------------------------------------------------------------------

class WallClockBridge(LiveBridge):
    """Paces the simulated clock against wall time and carries steering."""

    def __init__(self, server: "LiveServer", speed: float = 1.0):
        self.server = server
        self.speed = speed
        self._t0: Optional[float] = None

    def pace(self, t_us: int) -> bool:
        if self.speed > 0:
            if self._t0 is None:
                self._t0 = time.monotonic()
            target = self._t0 + (t_us / 1e6) / self.speed
            lag = target - time.monotonic()
            if lag > 0:
                time.sleep(lag)
        return not self.server.stop_event.is_set()

    def steer(self) -> Optional[float]:
        return self.server.take_steer()

    def publish(self, frame: dict) -> None:
        self.server.broadcast(frame)


class LiveServer:
    """Serves one live closed-loop session; restartable only by recreating."""

    def __init__(self, cfg: ExperimentConfig, port: int = 8765,
                 host: str = "127.0.0.1", static_dir: Optional[str] = None,
                 speed: float = 1.0):
        if cfg.scenario != "manual":
            raise ConfigError("serve requires the manual scenario")
        self.cfg = cfg
        self.port = port
        self.host = host
        self.static_dir = Path(static_dir) if static_dir else None
        self.speed = speed
        self.stop_event = threading.Event()
        self.malformed_count = 0
        self._steer_lock = threading.Lock()
        self._steer_value: Optional[float] = None
        self._clients: list[_Client] = []
        self._clients_lock = threading.Lock()
        self._sock: Optional[socket.socket] = None
        self._accept_thread: Optional[threading.Thread] = None
        self.result = None

    # -- steering slot -------------------------------------------------------

    def take_steer(self) -> Optional[float]:
        with self._steer_lock:
            value, self._steer_value = self._steer_value, None
        return value

    def handle_message(self, payload: bytes) -> None:
        try:
            msg = json.loads(payload.decode())
            if msg.get("kind") != "steer":
                raise ValueError("not a steer message")
            angle = math.radians(float(msg["angle_deg"]))
            if not math.isfinite(angle):
                raise ValueError("non-finite angle")
        except (ValueError, KeyError, UnicodeDecodeError):
            self.malformed_count += 1
            return
        with self._steer_lock:
            self._steer_value = angle

    # -- telemetry fan-out ----------------------------------------------------

    def broadcast(self, frame: dict) -> None:
        data = encode_text_frame(json.dumps(frame).encode())
        with self._clients_lock:
            clients = list(self._clients)
        for c in clients:
            c.offer(data)

    def drop_client(self, client: _Client) -> None:
        with self._clients_lock:
            if client in self._clients:
                self._clients.remove(client)

    # -- HTTP / upgrade -------------------------------------------------------

    def _serve_static(self, sock: socket.socket, path: str) -> None:
        body = b"not found"
        status = "404 Not Found"
        ctype = "text/plain"
        if self.static_dir is not None:
            rel = "index.html" if path in ("/", "") else path.lstrip("/")
            base = self.static_dir.resolve()
            target = (base / rel).resolve()
            if target.is_file() and base in target.parents:
                body = target.read_bytes()
                status = "200 OK"
                ctype = CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        head = (f"HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\n"
                f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n")
        sock.sendall(head.encode() + body)
        sock.close()

    def _accept_loop(self) -> None:
        while not self.stop_event.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                break
            threading.Thread(target=self._handle_connection, args=(conn,),
                             daemon=True).start()

    def _handle_connection(self, conn: socket.socket) -> None:
        try:
            conn.settimeout(5.0)
            request = b""
            while b"\r\n\r\n" not in request:
                chunk = conn.recv(4096)
                if not chunk:
                    conn.close()
                    return
                request += chunk
            head = request.split(b"\r\n\r\n", 1)[0].decode(errors="replace")
            lines = head.split("\r\n")
            path = lines[0].split(" ")[1] if len(lines[0].split(" ")) > 1 else "/"
            headers = {}
            for line in lines[1:]:
                if ":" in line:
                    k, v = line.split(":", 1)
                    headers[k.strip().lower()] = v.strip()
            if headers.get("upgrade", "").lower() == "websocket":
                conn.sendall(handshake_response(headers))
                conn.settimeout(None)
                client = _Client(conn, self)
                with self._clients_lock:
                    self._clients.append(client)
                client.offer(encode_text_frame(json.dumps(self._config_message()).encode()))
                threading.Thread(target=client.sender_loop, daemon=True).start()
                client.receiver_loop()
            else:
                self._serve_static(conn, path)
        except (OSError, ValueError):
            try:
                conn.close()
            except OSError:
                pass

    def _config_message(self) -> dict:
        cam = self.cfg.camera
        return {
            "kind": "config",
            "width": cam.width, "height": cam.height,
            "cx": cam.cx, "cy": cam.cy, "disk_radius": cam.disk_radius,
            "min_line_count": 40,
            "telemetry_hz": 60,
        }

    # -- lifecycle -------------------------------------------------------------

    def start(self) -> None:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((self.host, self.port))
        except OSError as exc:
            raise ConfigError(f"cannot bind port {self.port}: {exc}") from exc
        sock.listen(8)
        self._sock = sock
        self.port = sock.getsockname()[1]
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def run_loop(self) -> None:
        """Run the closed loop (blocking) until duration or stop()."""
        bridge = WallClockBridge(self, speed=self.speed)
        self.result = run_experiment(self.cfg, live=bridge)

    def serve_forever(self) -> None:
        self.start()
        try:
            self.run_loop()
        finally:
            self.stop()

    def stop(self) -> None:
        self.stop_event.set()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        with self._clients_lock:
            clients = list(self._clients)
        for c in clients:
            c.close()
