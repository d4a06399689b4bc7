"""Point-to-point ordered channels among three parties, with accounting.

Wire format: every message is one frame, an 8-byte little-endian payload
byte length followed by the payload as little-endian 64-bit words. The
handshake (TCP backend only) is magic "MPC3" + 1-byte version + 1-byte
sender party id + 16-byte session id; handshakes are not counted in
CommStats so in-process and TCP runs report identical numbers.

The in-process backend moves the same encoded frames through SPSC queues,
so byte counters agree with the TCP backend by construction.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import FrameError, TopologyError, TransportError

NUM_PARTIES = 3
FRAME_HEADER_BYTES = 8
MAX_FRAME_BYTES = 1 << 32
HANDSHAKE_MAGIC = b"MPC3"
HANDSHAKE_VERSION = 1
SESSION_ID_BYTES = 16

_U64 = np.uint64


def encode_frame(words: np.ndarray) -> bytes:
    payload = np.ascontiguousarray(words, dtype="<u8").tobytes()
    if len(payload) > MAX_FRAME_BYTES:
        raise FrameError(f"frame of {len(payload)} bytes exceeds 2^32")
    return struct.pack("<Q", len(payload)) + payload


def decode_frame(frame: bytes) -> np.ndarray:
    if len(frame) < FRAME_HEADER_BYTES:
        raise FrameError("truncated frame header")
    (n,) = struct.unpack_from("<Q", frame)
    if len(frame) != FRAME_HEADER_BYTES + n or n % 8:
        raise FrameError("frame length mismatch")
    return np.frombuffer(frame, dtype="<u8", offset=FRAME_HEADER_BYTES).astype(_U64, copy=False)


@dataclass
class CommStats:
    """Per-party traffic and round accounting."""

    bytes_sent: dict = field(default_factory=dict)
    bytes_received: dict = field(default_factory=dict)
    messages: int = 0
    messages_received: int = 0
    rounds: int = 0
    round_labels: list = field(default_factory=list)

    def total_bytes_sent(self) -> int:
        return sum(self.bytes_sent.values())

    def total_bytes_received(self) -> int:
        return sum(self.bytes_received.values())

    def payload_bytes_sent(self) -> int:
        """Sent bytes net of the 8-byte frame headers."""
        return self.total_bytes_sent() - FRAME_HEADER_BYTES * self.messages

    def and_rounds(self) -> int:
        return sum(1 for lab in self.round_labels if lab.startswith("and."))

    def copy(self) -> "CommStats":
        return CommStats(
            dict(self.bytes_sent),
            dict(self.bytes_received),
            self.messages,
            self.messages_received,
            self.rounds,
            list(self.round_labels),
        )

    def since(self, base: "CommStats") -> "CommStats":
        """Delta of self against an earlier snapshot."""
        return CommStats(
            {p: self.bytes_sent.get(p, 0) - base.bytes_sent.get(p, 0) for p in self.bytes_sent},
            {p: self.bytes_received.get(p, 0) - base.bytes_received.get(p, 0) for p in self.bytes_received},
            self.messages - base.messages,
            self.messages_received - base.messages_received,
            self.rounds - base.rounds,
            self.round_labels[len(base.round_labels):],
        )

    def as_dict(self) -> dict:
        return {
            "bytes_sent": {str(k): v for k, v in sorted(self.bytes_sent.items())},
            "bytes_received": {str(k): v for k, v in sorted(self.bytes_received.items())},
            "messages": self.messages,
            "messages_received": self.messages_received,
            "rounds": self.rounds,
            "round_labels": list(self.round_labels),
        }


class Transport:
    """Base class: framing plus accounting; backends move raw frames."""

    def __init__(self, party: int):
        if party not in range(NUM_PARTIES):
            raise TopologyError(f"party id {party} outside 0..2")
        self.party = party
        self.stats = CommStats()

    @property
    def peers(self) -> tuple[int, int]:
        return tuple(p for p in range(NUM_PARTIES) if p != self.party)

    def send(self, to: int, words: np.ndarray) -> None:
        if to == self.party or to not in range(NUM_PARTIES):
            raise TopologyError(f"cannot send to party {to}")
        frame = encode_frame(words)
        self._send_bytes(to, frame)
        self.stats.bytes_sent[to] = self.stats.bytes_sent.get(to, 0) + len(frame)
        self.stats.messages += 1

    def recv(self, frm: int) -> np.ndarray:
        if frm == self.party or frm not in range(NUM_PARTIES):
            raise TopologyError(f"cannot receive from party {frm}")
        frame = self._recv_bytes(frm)
        self.stats.bytes_received[frm] = self.stats.bytes_received.get(frm, 0) + len(frame)
        self.stats.messages_received += 1
        return decode_frame(frame)

    def round_mark(self, label: str) -> None:
        self.stats.rounds += 1
        self.stats.round_labels.append(label)

    def close(self) -> None:
        pass

    def _send_bytes(self, to: int, frame: bytes) -> None:
        raise NotImplementedError

    def _recv_bytes(self, frm: int) -> bytes:
        raise NotImplementedError


class InProcessNetwork:
    """Queues for all ordered party pairs inside one process."""

    def __init__(self) -> None:
        self.queues = {
            (i, j): queue.SimpleQueue()
            for i in range(NUM_PARTIES)
            for j in range(NUM_PARTIES)
            if i != j
        }

    def transport(self, party: int) -> "InProcessTransport":
        return InProcessTransport(party, self)


class InProcessTransport(Transport):
    def __init__(self, party: int, net: InProcessNetwork):
        super().__init__(party)
        self._net = net

    def _send_bytes(self, to: int, frame: bytes) -> None:
        self._net.queues[(self.party, to)].put(frame)

    def _recv_bytes(self, frm: int) -> bytes:
        return self._net.queues[(frm, self.party)].get()


class _SocketWriter(threading.Thread):
    """Drains a queue into a socket so cyclic bulk sends cannot deadlock."""

    def __init__(self, sock: socket.socket):
        super().__init__(daemon=True)
        self.sock = sock
        self.q: queue.SimpleQueue = queue.SimpleQueue()
        self.error: Exception | None = None
        self.start()

    def run(self) -> None:
        while True:
            frame = self.q.get()
            if frame is None:
                return
            try:
                self.sock.sendall(frame)
            except OSError as e:
                self.error = e
                return


class TcpTransport(Transport):
    """One TCP connection per ordered pair; the sender side connects.

    `addresses` maps party id -> (host, port) listen endpoint for all three
    parties. All six sockets are established during construction; the
    handshake carries the sender's id and the session id.
    """

    def __init__(
        self,
        party: int,
        addresses: dict[int, tuple[str, int]],
        session_id: bytes,
        connect_timeout: float = 20.0,
    ):
        super().__init__(party)
        if sorted(addresses) != list(range(NUM_PARTIES)):
            raise TopologyError("need addresses for parties 0, 1, 2")
        if len(session_id) != SESSION_ID_BYTES:
            raise TransportError(f"session id must be {SESSION_ID_BYTES} bytes")
        self.session_id = bytes(session_id)
        self._in: dict[int, socket.socket] = {}
        self._writers: dict[int, _SocketWriter] = {}
        self._listener = socket.create_server(addresses[party], reuse_port=False)
        self._listener.settimeout(connect_timeout)
        accept_err: list[Exception] = []
        acceptor = threading.Thread(
            target=self._accept_peers, args=(accept_err,), daemon=True
        )
        acceptor.start()
        try:
            for peer in self.peers:
                self._writers[peer] = _SocketWriter(
                    self._connect(addresses[peer], connect_timeout)
                )
            acceptor.join(timeout=connect_timeout)
            if acceptor.is_alive():
                raise TransportError("timed out waiting for inbound connections")
            if accept_err:
                raise accept_err[0]
        finally:
            self._listener.close()

    def _connect(self, addr: tuple[str, int], timeout: float) -> socket.socket:
        deadline = time.monotonic() + timeout
        last: Exception | None = None
        while time.monotonic() < deadline:
            try:
                sock = socket.create_connection(addr, timeout=timeout)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                hello = (
                    HANDSHAKE_MAGIC
                    + bytes([HANDSHAKE_VERSION, self.party])
                    + self.session_id
                )
                sock.sendall(hello)
                return sock
            except OSError as e:
                last = e
                time.sleep(0.05)
        raise TransportError(f"cannot connect to {addr}: {last}")

    def _accept_peers(self, errors: list) -> None:
        try:
            while len(self._in) < NUM_PARTIES - 1:
                sock, _ = self._listener.accept()
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                hello = self._read_exact(sock, len(HANDSHAKE_MAGIC) + 2 + SESSION_ID_BYTES)
                if hello[:4] != HANDSHAKE_MAGIC:
                    raise TransportError("bad handshake magic")
                if hello[4] != HANDSHAKE_VERSION:
                    raise TransportError(f"unsupported version {hello[4]}")
                peer = hello[5]
                if peer not in self.peers:
                    raise TransportError(f"handshake from invalid party {peer}")
                if hello[6:] != self.session_id:
                    raise TransportError("session id mismatch")
                if peer in self._in:
                    raise TransportError(f"duplicate connection from party {peer}")
                self._in[peer] = sock
        except Exception as e:  # surfaced in the constructor
            errors.append(e if isinstance(e, TransportError) else TransportError(str(e)))

    @staticmethod
    def _read_exact(sock: socket.socket, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = sock.recv(n - len(buf))
            if not chunk:
                raise TransportError("peer closed connection")
            buf.extend(chunk)
        return bytes(buf)

    def _send_bytes(self, to: int, frame: bytes) -> None:
        writer = self._writers[to]
        if writer.error is not None:
            raise TransportError(f"send to party {to} failed: {writer.error}")
        writer.q.put(frame)

    def _recv_bytes(self, frm: int) -> bytes:
        sock = self._in[frm]
        head = self._read_exact(sock, FRAME_HEADER_BYTES)
        (n,) = struct.unpack("<Q", head)
        if n > MAX_FRAME_BYTES:
            raise FrameError(f"frame of {n} bytes exceeds 2^32")
        return head + self._read_exact(sock, n)

    def close(self) -> None:
        for w in self._writers.values():
            w.q.put(None)
            w.join(timeout=5)
            try:
                w.sock.close()
            except OSError:
                pass
        for s in self._in.values():
            try:
                s.close()
            except OSError:
                pass
