"""Server daemon: client protocol, peer channel, sequencing, write audits.

Two servers hold the mailbox shares.  Server A is the sequencing leader: it
assigns a position to every state-changing operation (registration, write
commit, read-and-clear) and streams the assignments to server B, so both
vaults apply the identical order.  Additive writes commute with each other,
but reads and registrations do not commute with writes, which is why a total
order is required for the two share vaults to stay consistent.

A write is processed in stages: the client ships its DPF key share; the
leader fixes the active-set watermark for the request and both servers
evaluate the key over that prefix of the address list (evaluation is
pipelined off the sequencing path, which only orders the commit); both
derive the per-request audit seeds from the shared secret, return the sketch
seed to the client, collect the client's proof share, and run the audit
exchange.  Only an accepted write is committed, at a leader-assigned
position; a rejected one leaves no trace in the vault.

No operation that mutates state is ever applied by one server alone: if the
peer channel is down, requests fail.
"""

from __future__ import annotations

import hashlib
import hmac as hmac_mod
import logging
import secrets
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass, field as dc_field

from . import audit, dpf, protocol
from .field import PRODUCTION_MODULUS, Field
from .protocol import Connection, ProtocolError
from .vault import AccessDenied, AddressCollision, Vault

log = logging.getLogger(__name__)

ROLE_A = "A"
ROLE_B = "B"


@dataclass
class ServerConfig:
    role: str
    listen: tuple[str, int]
    peer: tuple[str, int] | None
    shared_secret: bytes
    message_size: int = 160
    modulus: int = PRODUCTION_MODULUS
    audit_timeout: float = 10.0
    reg_timeout: float = 10.0
    seed: int | None = None  # deterministic address sampling, tests only

    def __post_init__(self):
        if self.role not in (ROLE_A, ROLE_B):
            raise ValueError("role must be 'A' or 'B'")
        if len(self.shared_secret) != 32:
            raise ValueError("shared secret must be 32 bytes")


def derive_request_seed(shared_secret: bytes, tag: bytes, request_id: bytes) -> bytes:
    """Per-request 16-byte seed both servers derive without coordination."""
    return hmac_mod.new(shared_secret, tag + request_id, hashlib.sha256).digest()[:16]


def derive_dummy_address(shared_secret: bytes) -> int:
    """The pair's shared write-only dummy virtual address."""
    raw = hmac_mod.new(shared_secret, b"dummy-address", hashlib.sha256).digest()[:16]
    return int.from_bytes(raw, "little")


class _Rendezvous:
    """Hand single values between threads, keyed; either side may be first."""

    def __init__(self):
        self._cond = threading.Condition()
        self._values: dict = {}

    def put(self, key, value) -> None:
        with self._cond:
            self._values[key] = value
            self._cond.notify_all()

    def wait(self, key, timeout: float):
        deadline = time.monotonic() + timeout
        with self._cond:
            while key not in self._values:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError(f"rendezvous timed out: {key}")
                self._cond.wait(remaining)
            return self._values.pop(key)

    def discard(self, key) -> None:
        with self._cond:
            self._values.pop(key, None)


@dataclass
class WriteSession:
    request_id: bytes
    conn: Connection
    key: dpf.DpfKey
    seed_r: bytes
    seed_t: bytes
    matrix: list[list[int]] | None = None
    decision: audit.AuditDecision | None = None
    decided: threading.Event = dc_field(default_factory=threading.Event)


class Server:
    """One of the two mailbox servers.  start() returns once listening."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.field = Field(config.modulus)
        self.n_blocks = dpf.message_blocks(config.message_size)
        self.vault = Vault(self.field, self.n_blocks)
        self.v_dummy = derive_dummy_address(config.shared_secret)
        self._rng = None
        if config.seed is not None:
            import random

            self._rng = random.Random(config.seed)
        self.vault.setup_dummy(self.v_dummy, self._rng)

        self._running = False
        self._listener: socket.socket | None = None
        self.port: int | None = None
        self._threads: list[threading.Thread] = []
        self._conns: set[Connection] = set()
        self._conns_lock = threading.Lock()

        self._peer: Connection | None = None
        self._peer_lock = threading.Lock()
        self.peer_ready = threading.Event()

        # Sequencing.  The leader assigns; both sides apply in order.
        self._seq_lock = threading.Lock()
        self._next_seq = 1
        self._reg_count = 1  # physical index 0 is the dummy mailbox
        self._pending_vs: set[int] = set()
        self._apply_cond = threading.Condition()
        self._ops: dict[int, object] = {}
        self._applied_seq = 0

        self._rv = _Rendezvous()
        self._sessions: dict[bytes, WriteSession] = {}
        self._seen_rids: set[bytes] = set()
        self._session_lock = threading.Lock()

        # Follower-side buffers for client messages that race their
        # leader-sequenced counterparts.
        self._reg_clients: dict[int, tuple[Connection, bytes]] = {}
        self._read_waiters: dict[tuple[int, int], deque] = {}
        self._read_results: dict[tuple[int, int], deque] = {}
        self._match_lock = threading.Lock()

        self.stats = {"audits": 0, "audit_us": 0.0, "writes_accepted": 0, "writes_rejected": 0}
        self._stats_lock = threading.Lock()

    @property
    def is_leader(self) -> bool:
        return self.config.role == ROLE_A

    # ------------------------------------------------------------- lifecycle

    def start(self) -> None:
        self._running = True
        self._listener = socket.create_server(self.config.listen, backlog=64)
        self.port = self._listener.getsockname()[1]
        self._spawn(self._accept_loop, "accept")
        self._spawn(self._applier_loop, "applier")
        if not self.is_leader:
            self._spawn(self._dial_peer, "dial-peer")

    def stop(self) -> None:
        self._running = False
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._conns_lock:
            conns = list(self._conns)
        for conn in conns:
            conn.close()
        if self._peer is not None:
            self._peer.close()
        with self._apply_cond:
            self._apply_cond.notify_all()
        for t in self._threads:
            t.join(timeout=2.0)

    def wait_ready(self, timeout: float = 10.0) -> None:
        if not self.peer_ready.wait(timeout):
            raise TimeoutError("peer channel not established")

    def _spawn(self, fn, name: str, *args, track: bool = True) -> None:
        t = threading.Thread(target=fn, args=args, name=f"{self.config.role}-{name}", daemon=True)
        t.start()
        if track:
            self._threads.append(t)

    # ----------------------------------------------------------- connections

    def _accept_loop(self) -> None:
        self._listener.settimeout(0.2)
        while self._running:
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = Connection(sock)
            with self._conns_lock:
                self._conns.add(conn)
            self._spawn(self._conn_loop, "conn", conn, track=False)

    def _dial_peer(self) -> None:
        assert self.config.peer is not None
        deadline = time.monotonic() + 30.0
        while self._running:
            try:
                conn = Connection.dial(*self.config.peer)
                break
            except OSError:
                if time.monotonic() > deadline:
                    log.error("could not reach peer %s", self.config.peer)
                    return
                time.sleep(0.05)
        else:
            return
        conn.send(protocol.MSG_SEQ_ACK, protocol.pack_u64(0))
        self._peer = conn
        self.peer_ready.set()
        self._peer_loop(conn)

    def _conn_loop(self, conn: Connection) -> None:
        try:
            while self._running:
                mtype, payload = conn.recv()
                if mtype == protocol.MSG_SEQ_ACK and self.is_leader:
                    # The follower's hello: this connection is the peer channel.
                    with self._peer_lock:
                        if self._peer is not None:
                            raise ProtocolError("second peer channel refused")
                        self._peer = conn
                    self.peer_ready.set()
                    self._peer_loop(conn)
                    return
                self._dispatch_client(conn, mtype, payload)
        except (ProtocolError, OSError):
            pass
        finally:
            with self._conns_lock:
                self._conns.discard(conn)
            conn.close()

    def _peer_send(self, mtype: int, payload: bytes) -> bool:
        peer = self._peer
        if peer is None:
            return False
        try:
            peer.send(mtype, payload)
            return True
        except OSError:
            return False

    def _peer_loop(self, conn: Connection) -> None:
        try:
            while self._running:
                mtype, payload = conn.recv()
                self._dispatch_peer(mtype, payload)
        except (ProtocolError, OSError):
            pass
        finally:
            self.peer_ready.clear()
            self._peer = None

    # ------------------------------------------------------------ dispatch

    def _dispatch_client(self, conn: Connection, mtype: int, payload: bytes) -> None:
        if mtype == protocol.MSG_REGISTER:
            key, v_opt = protocol.unpack_register(payload)
            if self.is_leader:
                self._leader_register(conn, key, v_opt)
            else:
                self._follower_register(conn, key, v_opt)
        elif mtype == protocol.MSG_WRITE_KEY:
            self._handle_write_key(conn, payload)
        elif mtype == protocol.MSG_PROOF:
            rid, body = protocol.split_tagged(payload, audit.PROOF_SHARE_BYTES)
            self._rv.put(("proof", rid), body)
        elif mtype == protocol.MSG_READ:
            p, v = protocol.unpack_addr(payload)
            if self.is_leader:
                self._leader_read(conn, p, v)
            else:
                self._follower_read_client(conn, p, v)
        elif mtype == protocol.MSG_DUMMY_REQ:
            conn.send(protocol.MSG_DUMMY_RESP, protocol.pack_addr(0, self.v_dummy))
        else:
            raise ProtocolError(f"unexpected client message type {mtype:#x}")

    def _dispatch_peer(self, mtype: int, payload: bytes) -> None:
        if mtype == protocol.MSG_AUDIT_XCHG:
            rid, _ = protocol.split_tagged(payload, audit.EXCHANGE_BODY_BYTES)
            self._rv.put(("xchg", rid), payload)
        elif mtype == protocol.MSG_EVAL_SET:
            rid, rest = protocol.split_tagged(payload, 8)
            self._rv.put(("evalset", rid), protocol.unpack_u64(rest))
        elif mtype == protocol.MSG_REG_SYNC:
            seq, v, p = protocol.unpack_reg_sync(payload)
            self._enqueue_op(seq, lambda: self._apply_register(v, p, None, None))
        elif mtype == protocol.MSG_SEQ_PROPOSE:
            seq, kind, rid, p, v = protocol.unpack_propose(payload)
            if kind == protocol.KIND_READ:
                self._enqueue_op(seq, lambda: self._apply_read(p, v, None))
            elif kind == protocol.KIND_WRITE_COMMIT:
                self._enqueue_op(seq, lambda: self._apply_commit(rid))
            else:
                raise ProtocolError("unexpected proposal kind")
        elif mtype == protocol.MSG_SEQ_ACK:
            pass  # liveness signal only; order is enforced by TCP FIFO
        else:
            raise ProtocolError(f"unexpected peer message type {mtype:#x}")

    # ----------------------------------------------------------- sequencing

    def _enqueue_op(self, seq: int, op) -> None:
        with self._apply_cond:
            if seq <= self._applied_seq or seq in self._ops:
                log.warning("duplicate sequence position %d ignored", seq)
                return
            self._ops[seq] = op
            self._apply_cond.notify_all()

    def _applier_loop(self) -> None:
        while True:
            with self._apply_cond:
                while self._running and (self._applied_seq + 1) not in self._ops:
                    self._apply_cond.wait(0.2)
                if not self._running:
                    return
                seq = self._applied_seq + 1
                op = self._ops.pop(seq)
            try:
                op()
            except Exception:
                log.exception("sequenced op %d failed", seq)
            with self._apply_cond:
                self._applied_seq = seq
                self._apply_cond.notify_all()
            if not self.is_leader:
                self._peer_send(protocol.MSG_SEQ_ACK, protocol.pack_u64(seq))

    def _leader_assign(self, op, frame_builder) -> bool:
        """Assign the next position, enqueue locally, stream to the peer.

        frame_builder(seq) returns the (type, payload) to send; the frame
        goes out under the sequence lock so channel order matches assignment
        order.
        """
        with self._seq_lock:
            seq = self._next_seq
            mtype, payload = frame_builder(seq)
            if not self._peer_send(mtype, payload):
                return False
            self._next_seq += 1
            self._enqueue_op(seq, op)
        return True

    # --------------------------------------------------------- registration

    def _sample_v(self) -> int:
        while True:
            v = self._rng.getrandbits(128) if self._rng else secrets.randbits(128)
            if v not in self.vault.page_table and v not in self._pending_vs:
                return v

    def _leader_register(self, conn: Connection, key: bytes, v_opt: int | None) -> None:
        fail = protocol.pack_addr(protocol.REGISTER_FAILED_P, 0)
        if not self.peer_ready.is_set():
            conn.send(protocol.MSG_REGISTER_RESP, fail)
            return
        with self._seq_lock:
            if v_opt is not None:
                if v_opt in self.vault.page_table or v_opt in self._pending_vs:
                    conn.send(protocol.MSG_REGISTER_RESP, fail)
                    return
                v = v_opt
            else:
                v = self._sample_v()
            self._pending_vs.add(v)
            p = self._reg_count
            self._reg_count += 1
            if not self._peer_send(protocol.MSG_REG_SYNC, protocol.pack_reg_sync(self._next_seq, v, p)):
                self._pending_vs.discard(v)
                self._reg_count -= 1
                conn.send(protocol.MSG_REGISTER_RESP, fail)
                return
            seq = self._next_seq
            self._next_seq += 1
            self._enqueue_op(seq, lambda: self._apply_register(v, p, conn, key))

    def _follower_register(self, conn: Connection, key: bytes, v_opt: int | None) -> None:
        if v_opt is None:
            # The follower needs the leader-assigned address to pair this
            # key with the right REG_SYNC; clients always contact A first.
            conn.send(protocol.MSG_REGISTER_RESP, protocol.pack_addr(protocol.REGISTER_FAILED_P, 0))
            return
        self._rv.put(("regkey", v_opt), (conn, key))

    def _apply_register(self, v: int, p: int, conn: Connection | None, key: bytes | None) -> None:
        if key is None:
            # Follower: wait for the owner's key to arrive on our own client
            # connection.  If it never does, register with a random key so
            # both vaults stay aligned; the slot is simply unusable.
            try:
                conn, key = self._rv.wait(("regkey", v), self.config.reg_timeout)
            except TimeoutError:
                conn, key = None, secrets.token_bytes(16)
                log.warning("registration %d applied without a client key", p)
        got_p, _ = self.vault.register(key, v_opt=v)
        if got_p != p:
            raise RuntimeError(f"physical index mismatch: assigned {p}, applied {got_p}")
        self._pending_vs.discard(v)
        if conn is not None:
            try:
                conn.send(protocol.MSG_REGISTER_RESP, protocol.pack_addr(p, v))
            except OSError:
                pass

    # ---------------------------------------------------------------- reads

    def _read_request_id(self, seq: int, p: int, v: int) -> bytes:
        material = b"read" + struct.pack("<QQ", seq, p) + v.to_bytes(16, "little")
        return hashlib.sha256(material).digest()[:16]

    def _leader_read(self, conn: Connection, p: int, v: int) -> None:
        if not self.peer_ready.is_set():
            self._send_read_denied(conn)
            return
        with self._seq_lock:
            seq = self._next_seq
            rid = self._read_request_id(seq, p, v)
            if not self._peer_send(
                protocol.MSG_SEQ_PROPOSE,
                protocol.pack_propose(seq, protocol.KIND_READ, rid, p, v),
            ):
                self._send_read_denied(conn)
                return
            self._next_seq += 1
            self._enqueue_op(seq, lambda: self._apply_read(p, v, conn))

    def _follower_read_client(self, conn: Connection, p: int, v: int) -> None:
        key = (p, v)
        with self._match_lock:
            results = self._read_results.get(key)
            if results:
                payload = results.popleft()
                if not results:
                    del self._read_results[key]
            else:
                self._read_waiters.setdefault(key, deque()).append(conn)
                return
        try:
            conn.send(protocol.MSG_READ_RESP, payload)
        except OSError:
            pass

    def _apply_read(self, p: int, v: int, conn: Connection | None) -> None:
        try:
            ct, nonce = self.vault.read_and_clear(p, v)
            payload = protocol.pack_read_resp(nonce, ct)
        except AccessDenied:
            payload = protocol.pack_read_resp(protocol.READ_DENIED_NONCE, [0] * self.n_blocks)
        if conn is not None:
            try:
                conn.send(protocol.MSG_READ_RESP, payload)
            except OSError:
                pass
            return
        # Follower: the client's READ may not have arrived yet.
        key = (p, v)
        with self._match_lock:
            waiters = self._read_waiters.get(key)
            if waiters:
                conn = waiters.popleft()
                if not waiters:
                    del self._read_waiters[key]
            else:
                bucket = self._read_results.setdefault(key, deque())
                bucket.append(payload)
                if len(bucket) > 64:
                    bucket.popleft()
                return
        try:
            conn.send(protocol.MSG_READ_RESP, payload)
        except OSError:
            pass

    def _send_read_denied(self, conn: Connection) -> None:
        try:
            conn.send(
                protocol.MSG_READ_RESP,
                protocol.pack_read_resp(protocol.READ_DENIED_NONCE, [0] * self.n_blocks),
            )
        except OSError:
            pass

    # --------------------------------------------------------------- writes

    def _handle_write_key(self, conn: Connection, payload: bytes) -> None:
        try:
            rid, key_bytes = protocol.split_tagged(payload, dpf.key_size(self.n_blocks + 1))
        except ProtocolError:
            rid = payload[:16] if len(payload) >= 16 else bytes(16)
            self._send_write_result(conn, rid, False)
            return
        with self._session_lock:
            if rid in self._seen_rids:
                self._send_write_result(conn, rid, False)
                return
            self._seen_rids.add(rid)
        if not self.peer_ready.is_set():
            self._send_write_result(conn, rid, False)
            return
        try:
            key = dpf.DpfKey.from_bytes(key_bytes, self.n_blocks + 1)
        except ValueError:
            self._send_write_result(conn, rid, False)
            return
        sess = WriteSession(
            request_id=rid,
            conn=conn,
            key=key,
            seed_r=derive_request_seed(self.config.shared_secret, b"seed-r", rid),
            seed_t=derive_request_seed(self.config.shared_secret, b"seed-t", rid),
        )
        with self._session_lock:
            self._sessions[rid] = sess
        self._spawn(self._write_worker, "write", sess, track=False)

    def _send_write_result(self, conn: Connection, rid: bytes, accept: bool) -> None:
        try:
            conn.send(protocol.MSG_WRITE_RESULT, rid + (b"\x01" if accept else b"\x00"))
        except OSError:
            pass

    def _write_worker(self, sess: WriteSession) -> None:
        rid = sess.request_id
        timeout = self.config.audit_timeout
        try:
            sess.conn.send(protocol.MSG_AUDIT_SEED, rid + sess.seed_r)
            if self.is_leader:
                addrs = self.vault.addresses()
                self._peer_send(protocol.MSG_EVAL_SET, rid + protocol.pack_u64(len(addrs)))
            else:
                watermark = self._rv.wait(("evalset", rid), timeout)
                with self._apply_cond:
                    deadline = time.monotonic() + timeout
                    while len(self.vault) < watermark:
                        remaining = deadline - time.monotonic()
                        if remaining <= 0:
                            raise TimeoutError("active set never reached watermark")
                        self._apply_cond.wait(remaining)
                addrs = self.vault.addresses(watermark)
            matrix = dpf.eval_many(self.field, sess.key, addrs)
            w_share = [row[0] for row in matrix]
            proof_bytes = self._rv.wait(("proof", rid), timeout)
            proof = audit.SnipProofShare.from_bytes(proof_bytes, self.field)
            audit_start = time.perf_counter()
            sketch = audit.server_sketch(self.field, w_share, sess.seed_r)
            decision = audit.audit_verify(
                self.field,
                rid,
                sketch,
                proof,
                sess.seed_t,
                send=lambda data: self._peer_send(protocol.MSG_AUDIT_XCHG, data),
                recv=lambda: self._rv.wait(("xchg", rid), timeout),
            )
            audit_us = (time.perf_counter() - audit_start) * 1e6
            with self._stats_lock:
                self.stats["audits"] += 1
                self.stats["audit_us"] += audit_us
        except (TimeoutError, ValueError, ProtocolError, OSError):
            decision = audit.AuditDecision(False, audit.REASON_DECODE_ERROR)
            matrix = None
        sess.matrix = matrix
        sess.decision = decision
        sess.decided.set()
        if decision.accept and matrix is not None:
            if self.is_leader:
                committed = self._leader_assign(
                    lambda: self._apply_commit(rid),
                    lambda seq: (
                        protocol.MSG_SEQ_PROPOSE,
                        protocol.pack_propose(seq, protocol.KIND_WRITE_COMMIT, rid),
                    ),
                )
                if not committed:
                    self._finish_session(sess, False)
            # Follower: the commit lands when the leader's proposal arrives.
        else:
            self._finish_session(sess, False)

    def _apply_commit(self, rid: bytes) -> None:
        with self._session_lock:
            sess = self._sessions.get(rid)
        if sess is None:
            log.warning("commit proposal for unknown request")
            return
        if not sess.decided.wait(self.config.audit_timeout):
            log.warning("commit proposal before local audit decision")
            self._finish_session(sess, False)
            return
        if sess.decision is None or not sess.decision.accept or sess.matrix is None:
            # Only reachable if the peer's decision diverged from ours.
            self._finish_session(sess, False)
            return
        self.vault.apply_write(sess.matrix)
        self._finish_session(sess, True)

    def _finish_session(self, sess: WriteSession, accepted: bool) -> None:
        with self._session_lock:
            self._sessions.pop(sess.request_id, None)
        with self._stats_lock:
            self.stats["writes_accepted" if accepted else "writes_rejected"] += 1
        self._rv.discard(("proof", sess.request_id))
        self._rv.discard(("xchg", sess.request_id))
        self._rv.discard(("evalset", sess.request_id))
        self._send_write_result(sess.conn, sess.request_id, accepted)

    # ------------------------------------------------------------- test aids

    def state_digest(self) -> bytes:
        """Digest of (page table, nonces); equal across a converged pair."""
        return self.vault.state_digest()

    def peer_bytes(self) -> tuple[int, int]:
        peer = self._peer
        if peer is None:
            return (0, 0)
        return peer.bytes_sent, peer.bytes_received

    def audit_stats(self) -> tuple[int, float]:
        with self._stats_lock:
            return self.stats["audits"], self.stats["audit_us"]
