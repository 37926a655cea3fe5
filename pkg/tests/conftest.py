"""Shared fixtures and an adversarial raw-protocol driver."""

import random

import pytest

from splitbox import audit, dpf, protocol
from splitbox.field import Field
from splitbox.pair import LocalPair
from splitbox.protocol import Connection


@pytest.fixture(scope="module")
def pair160():
    """One live pair shared across a module's read-only-ish protocol tests."""
    with LocalPair(message_size=160, audit_timeout=5.0, reg_timeout=5.0) as pair:
        yield pair


class RawWriter:
    """Drives the write protocol with arbitrary key and proof bytes.

    Used to play the malicious client: whatever the two servers receive is
    entirely under the caller's control.
    """

    def __init__(self, pair: LocalPair):
        self.pair = pair
        self.field = pair.a.field
        self.conn_a = Connection.dial(*pair.addr_a, timeout=10)
        self.conn_b = Connection.dial(*pair.addr_b, timeout=10)

    def close(self):
        self.conn_a.close()
        self.conn_b.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _recv(self, conn, mtype):
        got, payload = conn.recv()
        assert got == mtype, f"expected {mtype:#x}, got {got:#x}"
        return payload

    def write(self, rid, key_a_bytes, key_b_bytes, proof_builder):
        """Send raw key bytes, then proofs built from the revealed seed.

        proof_builder(seed) returns (proof_a_bytes, proof_b_bytes).
        Returns (accept_a, accept_b).
        """
        self.conn_a.send(protocol.MSG_WRITE_KEY, rid + key_a_bytes)
        self.conn_b.send(protocol.MSG_WRITE_KEY, rid + key_b_bytes)
        _, seed_a = protocol.split_tagged(self._recv(self.conn_a, protocol.MSG_AUDIT_SEED), 16)
        _, seed_b = protocol.split_tagged(self._recv(self.conn_b, protocol.MSG_AUDIT_SEED), 16)
        assert seed_a == seed_b
        proof_a, proof_b = proof_builder(seed_a)
        self.conn_a.send(protocol.MSG_PROOF, rid + proof_a)
        self.conn_b.send(protocol.MSG_PROOF, rid + proof_b)
        _, flag_a = protocol.split_tagged(self._recv(self.conn_a, protocol.MSG_WRITE_RESULT), 1)
        _, flag_b = protocol.split_tagged(self._recv(self.conn_b, protocol.MSG_WRITE_RESULT), 1)
        return flag_a == b"\x01", flag_b == b"\x01"

    def write_garbage_keys(self, rng: random.Random):
        """Unparseable key bytes to both servers; rejected before auditing."""
        rid = rng.randbytes(16)
        self.conn_a.send(protocol.MSG_WRITE_KEY, rid + rng.randbytes(37))
        self.conn_b.send(protocol.MSG_WRITE_KEY, rid + rng.randbytes(37))
        _, flag_a = protocol.split_tagged(self._recv(self.conn_a, protocol.MSG_WRITE_RESULT), 1)
        _, flag_b = protocol.split_tagged(self._recv(self.conn_b, protocol.MSG_WRITE_RESULT), 1)
        return flag_a == b"\x01", flag_b == b"\x01"

    def write_mismatched_pair(self, rng: random.Random):
        """Key shares from two different honest pairs: the summed write
        vector is pseudorandom at every active slot, the classic
        corrupt-everything attack.  The forged checks follow the honest
        client recipe for one of the two targets."""
        field = self.field
        n_blocks = self.pair.a.n_blocks
        payload = [1] + [field.rand(rng) for _ in range(n_blocks)]
        v1, v2 = rng.getrandbits(128), rng.getrandbits(128)
        key_a, _ = dpf.gen(field, v1, payload, rng=rng)
        _, key_b = dpf.gen(field, v2, payload, rng=rng)

        def proofs(seed):
            m, c, big_c = audit.client_checks(
                field, seed, 0,
                dpf.eval_point(field, key_a, v1)[0],
                dpf.eval_point(field, key_b, v2)[0],
            )
            pa, pb = audit.snip_gen(field, m, c, big_c, rng)
            return pa.to_bytes(), pb.to_bytes()

        rid = rng.randbytes(16)
        return self.write(rid, key_a.to_bytes(), key_b.to_bytes(), proofs)

    def write_honest(self, target_p, target_v, body, rng: random.Random):
        """A well-formed write, driven manually."""
        field = self.field
        payload = dpf.pack_payload(field, body)
        key_a, key_b = dpf.gen(field, target_v, payload, rng=rng)

        def proofs(seed):
            m, c, big_c = audit.client_checks(
                field, seed, target_p,
                dpf.eval_point(field, key_a, target_v)[0],
                dpf.eval_point(field, key_b, target_v)[0],
            )
            pa, pb = audit.snip_gen(field, m, c, big_c, rng)
            return pa.to_bytes(), pb.to_bytes()

        rid = rng.randbytes(16)
        return self.write(rid, key_a.to_bytes(), key_b.to_bytes(), proofs)

    def write_honest_tampered_proof(self, target_p, target_v, rng: random.Random):
        """Honest keys, but one h coefficient of server A's share is shifted."""
        field = self.field
        body = rng.randbytes(self.pair.message_size)
        payload = dpf.pack_payload(field, body)
        key_a, key_b = dpf.gen(field, target_v, payload, rng=rng)

        def proofs(seed):
            m, c, big_c = audit.client_checks(
                field, seed, target_p,
                dpf.eval_point(field, key_a, target_v)[0],
                dpf.eval_point(field, key_b, target_v)[0],
            )
            pa, pb = audit.snip_gen(field, m, c, big_c, rng)
            h1 = list(pa.h1)
            h1[rng.randrange(3)] = field.add(h1[rng.randrange(3)], 1)
            pa = audit.SnipProofShare(pa.rf1, pa.rg1, tuple(h1), pa.rf2, pa.rg2, pa.h2)
            return pa.to_bytes(), pb.to_bytes()

        rid = rng.randbytes(16)
        return self.write(rid, key_a.to_bytes(), key_b.to_bytes(), proofs)
