"""Topic-based pub/sub relay over newline-delimited JSON on TCP, with
client-side pose interpolation / dead reckoning and cycle-time
measurement against the 100 ms real-time budget.

Wire protocol: one UTF-8 JSON object per newline-terminated line, max
64 KiB per line.  Ops: advertise, subscribe, unsubscribe, publish,
ping, pong, error.
"""

from __future__ import annotations

import json
import socket
import threading
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    quat_from_axis_angle,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_slerp,
    UNIT_TOL,
)

MAX_LINE_BYTES = 64 * 1024

KNOWN_OPS = {"advertise", "subscribe", "unsubscribe", "publish",
             "ping", "pong", "error"}

_REQUIRED_FIELDS = {
    "advertise": ("topic", "type"),
    "subscribe": ("topic",),
    "unsubscribe": ("topic",),
    "publish": ("topic", "msg"),
    "ping": ("t",),
    "pong": ("t", "server_t"),
    "error": ("reason",),
}


class ProtocolError(Exception):
    pass


def encode_frame(msg: dict) -> bytes:
    """Serialize one protocol message to a newline-terminated line."""
    _check_message(msg)
    line = json.dumps(msg, separators=(",", ":"), allow_nan=False).encode("utf-8")
    if len(line) + 1 > MAX_LINE_BYTES:
        raise ProtocolError("encoded line exceeds 64 KiB")
    return line + b"\n"


def decode_frame(line: bytes) -> dict:
    """Parse one complete line back into a protocol message."""
    if len(line) > MAX_LINE_BYTES:
        raise ProtocolError("line exceeds 64 KiB")
    try:
        msg = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed line: {exc}") from None
    if not isinstance(msg, dict):
        raise ProtocolError("message must be an object")
    _check_message(msg)
    return msg


def _check_message(msg: dict):
    op = msg.get("op")
    if op is None:
        raise ProtocolError("missing required field 'op'")
    if op not in KNOWN_OPS:
        raise ProtocolError(f"unknown op '{op}'")
    for key in _REQUIRED_FIELDS[op]:
        if key not in msg:
            raise ProtocolError(f"op '{op}': missing required field '{key}'")


# ---------------------------------------------------------------------------
# vehicle states


@dataclass(frozen=True)
class VehicleStateMsg:
    topic: str
    seq: int
    stamp_secs: float
    frame_id: str
    position: np.ndarray
    orientation: np.ndarray
    linear_vel: np.ndarray
    angular_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("position", "orientation", "linear_vel", "angular_vel"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if abs(np.linalg.norm(self.orientation) - 1.0) > UNIT_TOL:
            raise ValueError("orientation must be a unit quaternion")

    def to_wire(self) -> dict:
        return {
            "op": "publish",
            "topic": self.topic,
            "msg": {
                "seq": self.seq,
                "stamp": self.stamp_secs,
                "frame_id": self.frame_id,
                "position": [float(v) for v in self.position],
                "rotation": [float(v) for v in self.orientation],
                "linear_vel": [float(v) for v in self.linear_vel],
                "angular_vel": [float(v) for v in self.angular_vel],
            },
        }

    @staticmethod
    def from_wire(frame: dict) -> "VehicleStateMsg":
        if frame.get("op") != "publish":
            raise ProtocolError("not a publish frame")
        m = frame["msg"]
        return VehicleStateMsg(
            topic=frame["topic"],
            seq=int(m["seq"]),
            stamp_secs=float(m["stamp"]),
            frame_id=m["frame_id"],
            position=m["position"],
            orientation=m["rotation"],
            linear_vel=m["linear_vel"],
            angular_vel=m.get("angular_vel", [0.0, 0.0, 0.0]),
        )


@dataclass(frozen=True)
class FrameTransform:
    from_frame: str
    to_frame: str
    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))

    def inverse(self) -> "FrameTransform":
        inv_rot = quat_normalize(self.rotation) * np.array([1.0, -1, -1, -1])
        return FrameTransform(
            from_frame=self.to_frame,
            to_frame=self.from_frame,
            translation=-quat_rotate(inv_rot, self.translation),
            rotation=inv_rot,
        )


def apply_frame_transform(msg: VehicleStateMsg, tf: FrameTransform) -> VehicleStateMsg:
    """Re-express a state in tf.to_frame: rotate then translate the
    position, rotate orientation and both velocity vectors."""
    if msg.frame_id != tf.from_frame:
        raise ValueError(
            f"frame mismatch: message in '{msg.frame_id}', transform from "
            f"'{tf.from_frame}'")
    return replace(
        msg,
        frame_id=tf.to_frame,
        position=quat_rotate(tf.rotation, msg.position) + tf.translation,
        orientation=quat_normalize(quat_mul(tf.rotation, msg.orientation)),
        linear_vel=quat_rotate(tf.rotation, msg.linear_vel),
        angular_vel=quat_rotate(tf.rotation, msg.angular_vel),
    )


# ---------------------------------------------------------------------------
# interpolation / dead reckoning


class InterpBuffer:
    """Time-ordered ring of vehicle states; single writer, snapshot reads."""

    def __init__(self, capacity: int = 64, max_extrapolation_secs: float = 0.2):
        if capacity < 2:
            raise ValueError("capacity must be >= 2")
        self.capacity = capacity
        self.max_extrapolation_secs = max_extrapolation_secs
        self._samples = []
        self._lock = threading.Lock()

    def add(self, msg: VehicleStateMsg):
        with self._lock:
            samples = [s for s in self._samples if s.stamp_secs < msg.stamp_secs]
            samples.append(msg)
            self._samples = samples[-self.capacity:]

    def __len__(self):
        return len(self._samples)

    def pose_at(self, t: float) -> VehicleStateMsg:
        """State at time t: interpolated inside the buffer span,
        dead-reckoned up to the extrapolation cap beyond it."""
        with self._lock:
            samples = list(self._samples)
        if not samples:
            raise ValueError("empty buffer")
        if t <= samples[0].stamp_secs:
            return samples[0]
        latest = samples[-1]
        if t >= latest.stamp_secs:
            dt = min(t - latest.stamp_secs, self.max_extrapolation_secs)
            return _dead_reckon(latest, dt)
        for a, b in zip(samples, samples[1:]):
            if a.stamp_secs <= t <= b.stamp_secs:
                return _interpolate(a, b, t)
        return latest  # unreachable for ordered samples


def _interpolate(a: VehicleStateMsg, b: VehicleStateMsg, t: float) -> VehicleStateMsg:
    u = (t - a.stamp_secs) / (b.stamp_secs - a.stamp_secs)
    return replace(
        a,
        stamp_secs=t,
        position=(1.0 - u) * a.position + u * b.position,
        orientation=quat_slerp(a.orientation, b.orientation, u),
        linear_vel=(1.0 - u) * a.linear_vel + u * b.linear_vel,
        angular_vel=(1.0 - u) * a.angular_vel + u * b.angular_vel,
    )


def _dead_reckon(latest: VehicleStateMsg, dt: float) -> VehicleStateMsg:
    # world-frame angular velocity integrated as an axis-angle increment
    w = latest.angular_vel
    speed = float(np.linalg.norm(w))
    rot = latest.orientation
    if speed > 0.0:
        rot = quat_normalize(quat_mul(quat_from_axis_angle(w, speed * dt), rot))
    return replace(
        latest,
        stamp_secs=latest.stamp_secs + dt,
        position=latest.position + latest.linear_vel * dt,
        orientation=rot,
    )


# ---------------------------------------------------------------------------
# relay server


class _Connection:
    def __init__(self, sock: socket.socket, peer):
        self.sock = sock
        self.peer = peer
        self.rfile = sock.makefile("rb")
        self.write_lock = threading.Lock()
        self.topics = set()
        self.alive = True

    def send_line(self, line: bytes):
        with self.write_lock:
            self.sock.sendall(line)

    def close(self):
        self.alive = False
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class Relay:
    """Threaded pub/sub relay; per-publisher FIFO is preserved because
    each connection's frames are relayed synchronously by its reader
    thread."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._listener = socket.create_server((host, port))
        # short accept timeout so stop() is never blocked behind accept()
        self._listener.settimeout(0.1)
        self._subscribers = {}  # topic -> list of _Connection
        self._lock = threading.Lock()
        self._conns = set()
        self._running = False
        self._accept_thread = None

    @property
    def address(self):
        return self._listener.getsockname()

    def start(self):
        self._running = True
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def stop(self):
        self._running = False
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            conns = list(self._conns)
        for conn in conns:
            conn.close()
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2.0)

    def serve_forever(self):
        self.start()
        try:
            while self._running:
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # internals ------------------------------------------------------------

    def _accept_loop(self):
        while self._running:
            try:
                sock, peer = self._listener.accept()
            except TimeoutError:
                continue
            except OSError:
                return
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Connection(sock, peer)
            with self._lock:
                self._conns.add(conn)
            threading.Thread(target=self._client_loop, args=(conn,),
                             daemon=True).start()

    def _client_loop(self, conn: _Connection):
        try:
            while True:
                line = conn.rfile.readline(MAX_LINE_BYTES + 1)
                if not line:
                    return
                try:
                    msg = decode_frame(line)
                except ProtocolError as exc:
                    self._send_error(conn, str(exc))
                    return
                self._handle(conn, msg, line)
        except (OSError, ValueError):
            pass
        finally:
            self._drop(conn)

    def _handle(self, conn: _Connection, msg: dict, raw: bytes):
        op = msg["op"]
        if op == "subscribe":
            with self._lock:
                subs = self._subscribers.setdefault(msg["topic"], [])
                if conn not in subs:
                    subs.append(conn)
                conn.topics.add(msg["topic"])
        elif op == "unsubscribe":
            with self._lock:
                subs = self._subscribers.get(msg["topic"], [])
                if conn in subs:
                    subs.remove(conn)
                conn.topics.discard(msg["topic"])
        elif op == "publish":
            with self._lock:
                subs = list(self._subscribers.get(msg["topic"], []))
            for sub in subs:
                if sub is conn or not sub.alive:
                    continue
                try:
                    sub.send_line(raw)
                except OSError:
                    self._drop(sub)
        elif op == "ping":
            reply = {"op": "pong", "t": msg["t"], "server_t": time.monotonic()}
            try:
                conn.send_line(encode_frame(reply))
            except OSError:
                pass
        # advertise is registry bookkeeping only; pong/error from a client
        # are ignored

    def _send_error(self, conn: _Connection, reason: str):
        try:
            conn.send_line(encode_frame({"op": "error", "reason": reason}))
        except OSError:
            pass
        conn.close()

    def _drop(self, conn: _Connection):
        with self._lock:
            self._conns.discard(conn)
            for subs in self._subscribers.values():
                if conn in subs:
                    subs.remove(conn)
        conn.close()


def serve(endpoint: tuple, start: bool = True) -> Relay:
    relay = Relay(*endpoint)
    if start:
        relay.start()
    return relay


# ---------------------------------------------------------------------------
# client


class BridgeClient:
    """Line-oriented client; safe for one reader plus one writer thread."""

    def __init__(self, address: tuple, timeout: float = 10.0):
        self.sock = socket.create_connection(address, timeout=timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.rfile = self.sock.makefile("rb")
        self._write_lock = threading.Lock()

    def send(self, msg: dict):
        line = encode_frame(msg)
        with self._write_lock:
            self.sock.sendall(line)

    def recv(self) -> dict:
        line = self.rfile.readline(MAX_LINE_BYTES + 1)
        if not line:
            raise ConnectionError("relay closed the connection")
        return decode_frame(line)

    def subscribe(self, topic: str):
        self.send({"op": "subscribe", "topic": topic})

    def advertise(self, topic: str, type_name: str = "vehicle_state"):
        self.send({"op": "advertise", "topic": topic, "type": type_name})

    def publish(self, state: VehicleStateMsg):
        self.send(state.to_wire())

    def ping(self, t: float):
        self.send({"op": "ping", "t": t})

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


# ---------------------------------------------------------------------------
# cycle measurement


@dataclass(frozen=True)
class CycleStats:
    count: int
    p50_ms: float
    p95_ms: float
    max_ms: float
    budget_ms: float = 100.0

    @property
    def passed(self) -> bool:
        return self.p95_ms < self.budget_ms


def measure_cycle(address: tuple, n: int, budget_ms: float = 100.0,
                  topic: str = "/measure") -> CycleStats:
    """Publish n timestamped states through a running relay and measure
    publish-to-deliver latency at a subscriber on the same clock."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sub = BridgeClient(address)
    pub = BridgeClient(address)
    try:
        sub.subscribe(topic)
        _sync(sub)  # pong proves the relay processed the subscribe
        latencies = np.empty(n)
        for i in range(n):
            t_send = time.monotonic()
            pub.publish(VehicleStateMsg(
                topic=topic, seq=i, stamp_secs=t_send, frame_id="map",
                position=np.zeros(3), orientation=np.array([1.0, 0, 0, 0]),
                linear_vel=np.zeros(3)))
            frame = _next_publish(sub)
            latencies[i] = time.monotonic() - float(frame["msg"]["stamp"])
    finally:
        sub.close()
        pub.close()
    ms = latencies * 1e3
    return CycleStats(
        count=n,
        p50_ms=float(np.percentile(ms, 50)),
        p95_ms=float(np.percentile(ms, 95)),
        max_ms=float(ms.max()),
        budget_ms=budget_ms,
    )


def _next_publish(client: BridgeClient) -> dict:
    while True:
        frame = client.recv()
        if frame["op"] == "publish":
            return frame


def _sync(client: BridgeClient):
    """Round-trip a ping; per-connection FIFO means every earlier op on
    this connection has been processed once the pong arrives."""
    client.ping(time.monotonic())
    while True:
        if client.recv()["op"] == "pong":
            return
