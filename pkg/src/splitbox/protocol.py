"""Binary wire protocol shared by clients and servers.

Framing is [length: u32 big-endian][type: 1 byte][payload], where length
counts the type byte plus payload.  All integers inside payloads are
little-endian, matching the field-element encoding.

Client-facing types:
  0x01 REGISTER      key 16B, v_opt flag 1B, v 16B (zero when flag = 0)
  0x02 REGISTER_RESP p 8B, v 16B           (p = 2^64-1 signals failure)
  0x03 DUMMY_REQ     empty                 (asks for the cover-traffic target)
  0x04 DUMMY_RESP    p 8B, v 16B
  0x10 WRITE_KEY     request_id 16B, serialized DPF key
  0x11 AUDIT_SEED    request_id 16B, seed 16B
  0x12 PROOF         request_id 16B, proof share 160B
  0x13 WRITE_RESULT  request_id 16B, accept 1B
  0x20 READ          p 8B, v 16B
  0x21 READ_RESP     nonce 8B, ct L*16B    (nonce = 2^64-1 signals denial)

Server-to-server types:
  0x30 SEQ_PROPOSE   seq 8B, kind 1B, request_id 16B [, p 8B, v 16B for reads]
  0x31 SEQ_ACK       seq 8B               (also the follower's channel hello)
  0x32 AUDIT_XCHG    request_id 16B, 7 field elements
  0x33 REG_SYNC      seq 8B, v 16B, p 8B
  0x34 EVAL_SET      request_id 16B, active-set watermark 8B
"""

from __future__ import annotations

import socket
import struct
import threading

MSG_REGISTER = 0x01
MSG_REGISTER_RESP = 0x02
MSG_DUMMY_REQ = 0x03
MSG_DUMMY_RESP = 0x04
MSG_WRITE_KEY = 0x10
MSG_AUDIT_SEED = 0x11
MSG_PROOF = 0x12
MSG_WRITE_RESULT = 0x13
MSG_READ = 0x20
MSG_READ_RESP = 0x21
MSG_SEQ_PROPOSE = 0x30
MSG_SEQ_ACK = 0x31
MSG_AUDIT_XCHG = 0x32
MSG_REG_SYNC = 0x33
MSG_EVAL_SET = 0x34

KIND_REGISTER = 1
KIND_WRITE_COMMIT = 2
KIND_READ = 3

REGISTER_FAILED_P = 2**64 - 1
READ_DENIED_NONCE = 2**64 - 1

MAX_FRAME = 1 << 24


class ProtocolError(Exception):
    pass


class Connection:
    """One framed TCP connection with byte counters and a write lock.

    Byte counters exist so benchmarks measure communication at the wire
    layer instead of estimating it.
    """

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._rfile = sock.makefile("rb")
        self.bytes_sent = 0
        self.bytes_received = 0
        self._send_lock = threading.Lock()

    @classmethod
    def dial(cls, host: str, port: int, timeout: float | None = None) -> "Connection":
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return cls(sock)

    def send(self, mtype: int, payload: bytes = b"") -> None:
        frame = struct.pack(">IB", len(payload) + 1, mtype) + payload
        with self._send_lock:
            self.sock.sendall(frame)
            self.bytes_sent += len(frame)

    def recv(self) -> tuple[int, bytes]:
        header = self._rfile.read(4)
        if len(header) < 4:
            raise ProtocolError("connection closed")
        (length,) = struct.unpack(">I", header)
        if not 1 <= length <= MAX_FRAME:
            raise ProtocolError("bad frame length")
        body = self._rfile.read(length)
        if len(body) < length:
            raise ProtocolError("connection closed mid-frame")
        self.bytes_received += 4 + length
        return body[0], body[1:]

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def pack_register(key: bytes, v_opt: int | None) -> bytes:
    if v_opt is None:
        return key + b"\x00" + bytes(16)
    return key + b"\x01" + v_opt.to_bytes(16, "little")


def unpack_register(payload: bytes) -> tuple[bytes, int | None]:
    if len(payload) != 33 or payload[16] not in (0, 1):
        raise ProtocolError("bad REGISTER payload")
    v_opt = int.from_bytes(payload[17:], "little") if payload[16] else None
    return payload[:16], v_opt


def pack_addr(p: int, v: int) -> bytes:
    return struct.pack("<Q", p) + v.to_bytes(16, "little")


def unpack_addr(payload: bytes) -> tuple[int, int]:
    if len(payload) != 24:
        raise ProtocolError("bad address payload")
    return struct.unpack_from("<Q", payload)[0], int.from_bytes(payload[8:], "little")


def pack_tagged(request_id: bytes, rest: bytes) -> bytes:
    return request_id + rest


def split_tagged(payload: bytes, rest_len: int | None = None) -> tuple[bytes, bytes]:
    if len(payload) < 16 or (rest_len is not None and len(payload) != 16 + rest_len):
        raise ProtocolError("bad tagged payload")
    return payload[:16], payload[16:]


def pack_read_resp(nonce: int, ct: list[int]) -> bytes:
    return struct.pack("<Q", nonce) + b"".join(b.to_bytes(16, "little") for b in ct)


def unpack_read_resp(payload: bytes, n_blocks: int) -> tuple[int, list[int]]:
    if len(payload) != 8 + 16 * n_blocks:
        raise ProtocolError("bad READ_RESP payload")
    (nonce,) = struct.unpack_from("<Q", payload)
    ct = [
        int.from_bytes(payload[8 + 16 * j : 24 + 16 * j], "little")
        for j in range(n_blocks)
    ]
    return nonce, ct


def pack_propose(seq: int, kind: int, request_id: bytes, p: int = 0, v: int = 0) -> bytes:
    body = struct.pack("<QB", seq, kind) + request_id
    if kind == KIND_READ:
        body += pack_addr(p, v)
    return body


def unpack_propose(payload: bytes) -> tuple[int, int, bytes, int, int]:
    if len(payload) < 25:
        raise ProtocolError("bad SEQ_PROPOSE payload")
    seq, kind = struct.unpack_from("<QB", payload)
    request_id = payload[9:25]
    p = v = 0
    if kind == KIND_READ:
        p, v = unpack_addr(payload[25:])
    elif len(payload) != 25:
        raise ProtocolError("bad SEQ_PROPOSE payload")
    return seq, kind, request_id, p, v


def pack_reg_sync(seq: int, v: int, p: int) -> bytes:
    return struct.pack("<Q", seq) + v.to_bytes(16, "little") + struct.pack("<Q", p)


def unpack_reg_sync(payload: bytes) -> tuple[int, int, int]:
    if len(payload) != 32:
        raise ProtocolError("bad REG_SYNC payload")
    (seq,) = struct.unpack_from("<Q", payload)
    v = int.from_bytes(payload[8:24], "little")
    (p,) = struct.unpack_from("<Q", payload, 24)
    return seq, v, p


def pack_u64(value: int) -> bytes:
    return struct.pack("<Q", value)


def unpack_u64(payload: bytes) -> int:
    if len(payload) != 8:
        raise ProtocolError("bad u64 payload")
    return struct.unpack("<Q", payload)[0]
