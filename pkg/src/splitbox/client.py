"""Client library: registration, private sends, mailbox checks, cover traffic.

A send never reveals its destination to either server: the target address and
message travel only inside the two DPF key shares.  The client talks to the
servers in a fixed order (A, then B) so real and cover traffic produce the
same connection pattern, and every send for a given deployment message size
emits exactly the same number of bytes.

Payload layout inside the fixed-size B-byte message body:

    [length: u16 LE][message][zero padding]            without integrity key
    [length: u16 LE][message][zero padding][tag: 16B]  with integrity key

The tag is HMAC-SHA-256 truncated to 16 bytes over everything before it,
keyed by SHA-256(master_secret || "mac")[:16] so the writer and owner derive
the same key from the shared master secret.  MAC then encrypt: the tag sits
inside the counter-mode-encrypted body, so MACed and plain writes are
indistinguishable on the wire.  Cover writes fill the body with random bytes.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
import struct
from dataclasses import dataclass

from . import audit, dpf, protocol
from .field import PRODUCTION_MODULUS, Field
from .protocol import Connection, ProtocolError
from .vault import decrypt_blocks


class ClientError(Exception):
    pass


class ServerMismatch(ClientError):
    """The two servers returned inconsistent values; one may be malicious."""


class RegistrationFailed(ClientError):
    pass


class ReadDenied(ClientError):
    pass


MAC_TAG_BYTES = 16
LENGTH_PREFIX_BYTES = 2

STATUS_EMPTY = "empty"
STATUS_MESSAGE = "message"
STATUS_INTEGRITY_FAILURE = "integrity-failure"


def mac_key_from_master(master_secret: bytes) -> bytes:
    return hashlib.sha256(master_secret + b"mac").digest()[:16]


def message_capacity(message_size: int, with_mac: bool) -> int:
    cap = message_size - LENGTH_PREFIX_BYTES - (MAC_TAG_BYTES if with_mac else 0)
    if cap <= 0:
        raise ValueError("message size too small for framing")
    return cap


@dataclass
class MailboxCredential:
    """Everything the owner holds: address pair, both keys, optional secret."""

    p: int
    v: int
    key_a: bytes
    key_b: bytes
    master_secret: bytes | None = None

    def to_bytes(self) -> bytes:
        out = struct.pack("<Q", self.p) + self.v.to_bytes(16, "little")
        out += self.key_a + self.key_b
        if self.master_secret is None:
            return out + b"\x00"
        return out + b"\x01" + self.master_secret

    @classmethod
    def from_bytes(cls, data: bytes) -> "MailboxCredential":
        if len(data) < 57 or data[56] not in (0, 1) or len(data) != (89 if data[56] else 57):
            raise ValueError("bad credential encoding")
        (p,) = struct.unpack_from("<Q", data)
        v = int.from_bytes(data[8:24], "little")
        key_a, key_b = data[24:40], data[40:56]
        master = data[57:89] if data[56] == 1 else None
        return cls(p, v, key_a, key_b, master)

    def send_target(self) -> "SendTarget":
        return SendTarget.from_master(self.p, self.v, self.master_secret)


@dataclass
class SendTarget:
    """The writer's view of a mailbox: address pair plus optional MAC key."""

    p: int
    v: int
    mac_key: bytes | None = None

    @classmethod
    def from_master(cls, p: int, v: int, master_secret: bytes | None) -> "SendTarget":
        mac_key = mac_key_from_master(master_secret) if master_secret else None
        return cls(p, v, mac_key)

def addr_file_bytes(p: int, v: int, master_secret: bytes | None) -> bytes:
    out = struct.pack("<Q", p) + v.to_bytes(16, "little")
    if master_secret is None:
        return out + b"\x00"
    return out + b"\x01" + master_secret


def target_from_addr_file(data: bytes) -> SendTarget:
    if len(data) < 25 or data[24] not in (0, 1) or len(data) != (57 if data[24] else 25):
        raise ValueError("bad address file")
    (p,) = struct.unpack_from("<Q", data)
    v = int.from_bytes(data[8:24], "little")
    master = data[25:57] if data[24] == 1 else None
    return SendTarget.from_master(p, v, master)


@dataclass
class CheckResult:
    status: str
    message: bytes | None = None


class Client:
    """One client endpoint; a single instance is not thread-safe.

    Independent operations may run concurrently through separate Client
    instances.
    """

    def __init__(
        self,
        addr_a: tuple[str, int],
        addr_b: tuple[str, int],
        message_size: int = 160,
        modulus: int = PRODUCTION_MODULUS,
        timeout: float = 30.0,
    ):
        self.addr_a = addr_a
        self.addr_b = addr_b
        self.message_size = message_size
        self.field = Field(modulus)
        self.n_blocks = dpf.message_blocks(message_size)
        self.timeout = timeout
        self._conns: list[Connection | None] = [None, None]
        self._dummy: SendTarget | None = None

    # ------------------------------------------------------------- plumbing

    def _conn(self, which: int) -> Connection:
        if self._conns[which] is None:
            addr = self.addr_a if which == 0 else self.addr_b
            self._conns[which] = Connection.dial(addr[0], addr[1], timeout=self.timeout)
        return self._conns[which]

    def close(self) -> None:
        for conn in self._conns:
            if conn is not None:
                conn.close()
        self._conns = [None, None]

    def __enter__(self) -> "Client":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def bytes_sent(self) -> int:
        return sum(c.bytes_sent for c in self._conns if c is not None)

    def bytes_received(self) -> int:
        return sum(c.bytes_received for c in self._conns if c is not None)

    def _expect(self, which: int, mtype: int) -> bytes:
        got, payload = self._conn(which).recv()
        if got != mtype:
            raise ProtocolError(f"expected message {mtype:#x}, got {got:#x}")
        return payload

    # ------------------------------------------------------------ operations

    def register(
        self, master_secret: bytes | None = None, v_opt: int | None = None
    ) -> MailboxCredential:
        """Register a fresh mailbox; servers must agree on its address pair."""
        key_a, key_b = secrets.token_bytes(16), secrets.token_bytes(16)
        self._conn(0).send(protocol.MSG_REGISTER, protocol.pack_register(key_a, v_opt))
        p_a, v_a = protocol.unpack_addr(self._expect(0, protocol.MSG_REGISTER_RESP))
        if p_a == protocol.REGISTER_FAILED_P:
            raise RegistrationFailed("server A refused the registration")
        # Echo A's assigned address to B so B pairs this key with the same slot.
        self._conn(1).send(protocol.MSG_REGISTER, protocol.pack_register(key_b, v_a))
        p_b, v_b = protocol.unpack_addr(self._expect(1, protocol.MSG_REGISTER_RESP))
        if p_b == protocol.REGISTER_FAILED_P:
            raise RegistrationFailed("server B refused the registration")
        if (p_a, v_a) != (p_b, v_b):
            raise ServerMismatch("servers returned different mailbox addresses")
        return MailboxCredential(p_a, v_a, key_a, key_b, master_secret)

    def _build_body(self, message: bytes, mac_key: bytes | None) -> bytes:
        cap = message_capacity(self.message_size, mac_key is not None)
        if len(message) > cap:
            raise ValueError(f"message longer than the {cap}-byte capacity")
        body = struct.pack("<H", len(message)) + message
        body += bytes(self.message_size - (MAC_TAG_BYTES if mac_key else 0) - len(body))
        if mac_key is not None:
            tag = hmac.new(mac_key, body, hashlib.sha256).digest()[:MAC_TAG_BYTES]
            body += tag
        return body

    def _send_body(self, target: SendTarget, body: bytes) -> bool:
        payload = dpf.pack_payload(self.field, body)
        rid = secrets.token_bytes(16)
        key_a, key_b = dpf.gen(self.field, target.v, payload)
        self._conn(0).send(protocol.MSG_WRITE_KEY, rid + key_a.to_bytes())
        self._conn(1).send(protocol.MSG_WRITE_KEY, rid + key_b.to_bytes())
        seeds = []
        for which in (0, 1):
            got_rid, seed = protocol.split_tagged(
                self._expect(which, protocol.MSG_AUDIT_SEED), 16
            )
            if got_rid != rid:
                raise ProtocolError("audit seed for a different request")
            seeds.append(seed)
        if seeds[0] != seeds[1]:
            raise ServerMismatch("servers disagree on the audit seed")
        w_a_t = dpf.eval_point(self.field, key_a, target.v, n_blocks=1)[0]
        w_b_t = dpf.eval_point(self.field, key_b, target.v, n_blocks=1)[0]
        m, c, big_c = audit.client_checks(self.field, seeds[0], target.p, w_a_t, w_b_t)
        proof_a, proof_b = audit.snip_gen(self.field, m, c, big_c)
        self._conn(0).send(protocol.MSG_PROOF, rid + proof_a.to_bytes())
        self._conn(1).send(protocol.MSG_PROOF, rid + proof_b.to_bytes())
        accepted = True
        for which in (0, 1):
            got_rid, flag = protocol.split_tagged(
                self._expect(which, protocol.MSG_WRITE_RESULT), 1
            )
            if got_rid != rid:
                raise ProtocolError("write result for a different request")
            accepted &= flag == b"\x01"
        return accepted

    def send(self, target: SendTarget, message: bytes) -> bool:
        """Privately write `message` into the target mailbox.

        Returns True only if both servers accepted the write.
        """
        return self._send_body(target, self._build_body(message, target.mac_key))

    def dummy_target(self) -> SendTarget:
        """The published write-only cover-traffic mailbox."""
        if self._dummy is None:
            self._conn(0).send(protocol.MSG_DUMMY_REQ)
            addr_a = protocol.unpack_addr(self._expect(0, protocol.MSG_DUMMY_RESP))
            self._conn(1).send(protocol.MSG_DUMMY_REQ)
            addr_b = protocol.unpack_addr(self._expect(1, protocol.MSG_DUMMY_RESP))
            if addr_a != addr_b:
                raise ServerMismatch("servers disagree on the dummy address")
            self._dummy = SendTarget(addr_a[0], addr_a[1], None)
        return self._dummy

    def cover_send(self) -> bool:
        """One cover write: a random body to the dummy mailbox.

        Byte-for-byte the same wire shape as a real send.
        """
        return self._send_body(self.dummy_target(), secrets.token_bytes(self.message_size))

    def check(self, cred: MailboxCredential) -> CheckResult:
        """Read and clear the mailbox; decrypt, combine and verify shares."""
        self._conn(0).send(protocol.MSG_READ, protocol.pack_addr(cred.p, cred.v))
        nonce_a, ct_a = protocol.unpack_read_resp(
            self._expect(0, protocol.MSG_READ_RESP), self.n_blocks
        )
        self._conn(1).send(protocol.MSG_READ, protocol.pack_addr(cred.p, cred.v))
        nonce_b, ct_b = protocol.unpack_read_resp(
            self._expect(1, protocol.MSG_READ_RESP), self.n_blocks
        )
        if protocol.READ_DENIED_NONCE in (nonce_a, nonce_b):
            raise ReadDenied("read refused")
        pt_a = decrypt_blocks(self.field, ct_a, cred.key_a, nonce_a)
        pt_b = decrypt_blocks(self.field, ct_b, cred.key_b, nonce_b)
        blocks = [self.field.add(a, b) for a, b in zip(pt_a, pt_b)]
        if all(b == 0 for b in blocks):
            return CheckResult(STATUS_EMPTY)
        body = dpf.unpack_payload([0] + blocks, self.message_size)
        if cred.master_secret is not None:
            data, tag = body[:-MAC_TAG_BYTES], body[-MAC_TAG_BYTES:]
            mac_key = mac_key_from_master(cred.master_secret)
            want = hmac.new(mac_key, data, hashlib.sha256).digest()[:MAC_TAG_BYTES]
            if not hmac.compare_digest(tag, want):
                return CheckResult(STATUS_INTEGRITY_FAILURE)
            body = data
        (length,) = struct.unpack_from("<H", body)
        if length > len(body) - LENGTH_PREFIX_BYTES:
            return CheckResult(STATUS_INTEGRITY_FAILURE)
        return CheckResult(STATUS_MESSAGE, body[2 : 2 + length])
