"""One server's mailbox store.

Physical slots live in a dense array; a page table maps each active 128-bit
virtual address to its physical index.  Slot contents are this server's
additive share of the mailbox, encrypted under the owner's per-server key in
additive counter mode over F_p: ct = pt + keystream.  Because counter-mode
keystreams and write shares add in the same group, accepted writes are folded
straight into ciphertexts and re-encryption happens lazily, only when a read
clears the slot.

Physical index 0 is reserved for the write-only dummy mailbox that absorbs
cover traffic; its key is local to the server and never exported, and reads
of it are always denied.
"""

from __future__ import annotations

import hashlib
import secrets
import struct
from dataclasses import dataclass

from .field import ELEMENT_BYTES, Field, aes_ecb


class AccessDenied(Exception):
    """Read refused; deliberately silent about which check failed."""


class AddressCollision(Exception):
    """A caller-supplied virtual address is already active."""


def keystream(field: Field, key: bytes, nonce: int, count: int) -> list[int]:
    """Counter-mode keystream: block j = AES_key(LE64(nonce) || LE64(j)) mod p."""
    if count == 0:
        return []
    blocks_in = b"".join(struct.pack("<QQ", nonce, j) for j in range(count))
    raw = aes_ecb(key, blocks_in)
    p = field.modulus
    return [
        int.from_bytes(raw[off : off + 16], "little") % p
        for off in range(0, 16 * count, 16)
    ]


def encrypt_blocks(field: Field, pt: list[int], key: bytes, nonce: int) -> list[int]:
    ks = keystream(field, key, nonce, len(pt))
    return [field.add(a, b) for a, b in zip(pt, ks)]


def decrypt_blocks(field: Field, ct: list[int], key: bytes, nonce: int) -> list[int]:
    ks = keystream(field, key, nonce, len(ct))
    return [field.sub(a, b) for a, b in zip(ct, ks)]


@dataclass
class MailboxRecord:
    v: int
    key: bytes
    nonce: int
    ct: list[int]


class Vault:
    """Mailbox slots plus the virtual-to-physical page table.

    All mutating calls must come from a single applier sequence; that
    serialization, not internal locking, is the thread-safety contract.
    Slots are append-only: physical indices never move or disappear.
    """

    def __init__(self, field: Field, n_blocks: int):
        self.field = field
        self.n_blocks = n_blocks
        self.records: list[MailboxRecord] = []
        self.page_table: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.records)

    def _append(self, key: bytes, v: int) -> int:
        if v in self.page_table:
            raise AddressCollision("virtual address already active")
        p = len(self.records)
        ct = encrypt_blocks(self.field, [0] * self.n_blocks, key, 0)
        self.records.append(MailboxRecord(v, key, 0, ct))
        self.page_table[v] = p
        return p

    def setup_dummy(self, v_dummy: int, rng=None) -> tuple[int, int]:
        """Create the write-only dummy mailbox at physical index 0.

        Its key is sampled locally and never leaves this server, so nothing
        written to it can ever be decrypted.
        """
        if self.records:
            raise RuntimeError("dummy mailbox must be created first")
        key = secrets.token_bytes(16) if rng is None else rng.randbytes(16)
        p = self._append(key, v_dummy)
        return p, v_dummy

    def register(self, key: bytes, v_opt: int | None = None, rng=None) -> tuple[int, int]:
        """Append a fresh mailbox; returns (physical index, virtual address).

        v_opt supports callers that bring their own address (dialing-style
        registration, or the follower replaying the leader's choice); a
        collision raises and resampling is the caller's job.
        """
        if v_opt is not None:
            v = v_opt
        elif rng is None:
            v = secrets.randbits(128)
        else:
            v = rng.getrandbits(128)
        p = self._append(key, v)
        return p, v

    def apply_write(self, matrix: list[list[int]]) -> None:
        """Fold an accepted write into the first len(matrix) slots.

        Row i carries the audit tag in column 0 (ignored here) and the
        payload share in columns 1..L, added elementwise to slot i's
        ciphertext.  Nonces are untouched: ciphertext addition commutes with
        counter-mode decryption, so re-encryption can wait for the next read.
        Rows may be fewer than the current slot count when mailboxes were
        registered after the write's active-set snapshot.
        """
        if len(matrix) > len(self.records):
            raise ValueError("write matrix has more rows than mailboxes")
        p = self.field.modulus
        for rec, row in zip(self.records, matrix):
            if len(row) != self.n_blocks + 1:
                raise ValueError("write matrix row has wrong block count")
            ct = rec.ct
            for j in range(self.n_blocks):
                ct[j] = (ct[j] + row[j + 1]) % p

    def read_and_clear(self, p: int, v: int) -> tuple[list[int], int]:
        """Return (ciphertext, nonce) for slot p, then reset it to a fresh
        encryption of zero under the next nonce."""
        if p <= 0 or p >= len(self.records):
            raise AccessDenied("read refused")
        rec = self.records[p]
        if rec.v != v:
            raise AccessDenied("read refused")
        out = (list(rec.ct), rec.nonce)
        rec.nonce += 1
        rec.ct = encrypt_blocks(self.field, [0] * self.n_blocks, rec.key, rec.nonce)
        return out

    def addresses(self, count: int | None = None) -> list[int]:
        """Active virtual addresses in physical order (a copy)."""
        if count is None:
            return [rec.v for rec in self.records]
        return [rec.v for rec in self.records[:count]]

    def state_digest(self) -> bytes:
        """Digest of the cross-server-comparable state: (v, nonce) per slot.

        Keys and ciphertext shares intentionally differ between servers and
        are excluded.
        """
        h = hashlib.sha256()
        h.update(struct.pack("<Q", len(self.records)))
        for rec in self.records:
            h.update(rec.v.to_bytes(16, "little"))
            h.update(struct.pack("<Q", rec.nonce))
        return h.digest()

    def snapshot_bytes(self) -> bytes:
        """Serialize the full store: [n][per record: v, key, nonce, ct]."""
        out = bytearray(struct.pack("<Q", len(self.records)))
        for rec in self.records:
            out += rec.v.to_bytes(16, "little")
            out += rec.key
            out += struct.pack("<Q", rec.nonce)
            for block in rec.ct:
                out += block.to_bytes(ELEMENT_BYTES, "little")
        return bytes(out)

    @classmethod
    def load_snapshot(cls, data: bytes, field: Field, n_blocks: int) -> "Vault":
        vault = cls(field, n_blocks)
        (n,) = struct.unpack_from("<Q", data, 0)
        off = 8
        rec_size = 16 + 16 + 8 + ELEMENT_BYTES * n_blocks
        if len(data) != 8 + n * rec_size:
            raise ValueError("vault snapshot has wrong length")
        for p in range(n):
            v = int.from_bytes(data[off : off + 16], "little")
            key = data[off + 16 : off + 32]
            (nonce,) = struct.unpack_from("<Q", data, off + 32)
            ct = [
                field.from_bytes(data[off + 40 + 16 * j : off + 56 + 16 * j])
                for j in range(n_blocks)
            ]
            vault.records.append(MailboxRecord(v, key, nonce, ct))
            vault.page_table[v] = p
            off += rec_size
        return vault
