"""Tree-based distributed point function with field-vector payloads.

A sender splits the point function "payload at virtual address v, zero
everywhere else" into two keys.  Each key alone is pseudorandom; evaluations
of the two keys at any point sum (in F_p) to the point function.  The tree
walks one PRG level per domain bit, so keys are O(domain_bits) plus one
correction word per payload block.

Payload layout: block 0 is the audit tag (1 for honestly generated writes),
blocks 1..L carry the message packed 15 bytes per field element so packed
values never wrap the modulus.

The per-level PRG is fixed-key AES in Matyas-Meyer-Oseas form
(AES_K(s) xor s), which lets batch evaluation run one ECB call per level
across all requested addresses instead of one per address.  The leaf seed is
converted into field elements with the keyed PRF stream from `field`.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .field import Field, aes_ecb, label16

DOMAIN_BITS = 128

PAYLOAD_BYTES_PER_BLOCK = 15

_EXPAND_KEY_L = label16(b"dpf-expand-left")
_EXPAND_KEY_R = label16(b"dpf-expand-right")
_CONVERT_LABEL = label16(b"dpf-convert")

_local = threading.local()


def _expand_ciphers():
    """Per-thread reusable ECB contexts for the two fixed expansion keys.

    ECB is stateless across blocks, so update() calls chain safely; contexts
    are thread-local because OpenSSL contexts are not shareable.
    """
    try:
        return _local.enc_l, _local.enc_r
    except AttributeError:
        _local.enc_l = Cipher(algorithms.AES(_EXPAND_KEY_L), modes.ECB()).encryptor()
        _local.enc_r = Cipher(algorithms.AES(_EXPAND_KEY_R), modes.ECB()).encryptor()
        return _local.enc_l, _local.enc_r


def message_blocks(message_size: int) -> int:
    """Number of payload blocks L for a deployment message size in bytes."""
    if message_size <= 0:
        raise ValueError("message size must be positive")
    return -(-message_size // PAYLOAD_BYTES_PER_BLOCK)


def pack_payload(field: Field, data: bytes) -> list[int]:
    """Pack raw bytes into [tag=1, block_1, ..., block_L], 15 bytes each."""
    blocks = [1]
    for off in range(0, len(data), PAYLOAD_BYTES_PER_BLOCK):
        chunk = data[off : off + PAYLOAD_BYTES_PER_BLOCK]
        blocks.append(int.from_bytes(chunk.ljust(PAYLOAD_BYTES_PER_BLOCK, b"\x00"), "little"))
    return blocks


def unpack_payload(blocks: list[int], size: int) -> bytes:
    """Inverse of pack_payload for blocks[1:]; returns `size` bytes.

    Blocks of clobbered mailboxes (field sums of several writes) can exceed
    15 bytes; the low 15 are kept so integrity checks can run on the result.
    """
    out = bytearray()
    for value in blocks[1:]:
        out += value.to_bytes(16, "little")[:PAYLOAD_BYTES_PER_BLOCK]
    return bytes(out[:size])


def key_size(n_blocks: int, domain_bits: int = DOMAIN_BITS) -> int:
    """Serialized key length: party + root seed + 17 per level + payload CWs."""
    return 1 + 16 + 17 * domain_bits + 16 * n_blocks


@dataclass
class DpfKey:
    """One party's share of the point function.

    levels holds (seed_cw, t_cw_left, t_cw_right) per domain bit; payload_cw
    corrects the converted leaf seed so shares sum to the payload.
    """

    party: int
    root_seed: bytes
    levels: list[tuple[bytes, int, int]]
    payload_cw: list[int]
    domain_bits: int = DOMAIN_BITS

    def to_bytes(self) -> bytes:
        out = bytearray()
        out.append(self.party)
        out += self.root_seed
        for seed_cw, t_l, t_r in self.levels:
            out += seed_cw
            out.append(t_l | (t_r << 1))
        for cw in self.payload_cw:
            out += cw.to_bytes(16, "little")
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes, n_blocks: int, domain_bits: int = DOMAIN_BITS) -> "DpfKey":
        if len(data) != key_size(n_blocks, domain_bits):
            raise ValueError("dpf key has wrong length")
        party = data[0]
        if party not in (0, 1):
            raise ValueError("dpf key party byte must be 0 or 1")
        root_seed = data[1:17]
        levels = []
        off = 17
        for _ in range(domain_bits):
            seed_cw = data[off : off + 16]
            bits = data[off + 16]
            if bits & ~0x03:
                raise ValueError("dpf key control byte has high bits set")
            levels.append((seed_cw, bits & 1, (bits >> 1) & 1))
            off += 17
        payload_cw = []
        for _ in range(n_blocks):
            payload_cw.append(int.from_bytes(data[off : off + 16], "little"))
            off += 16
        return cls(party, root_seed, levels, payload_cw, domain_bits)


def _expand(seed: bytes) -> tuple[bytes, int, bytes, int]:
    """PRG step: seed -> (left seed, left bit, right seed, right bit)."""
    enc_l, enc_r = _expand_ciphers()
    left = bytes(a ^ b for a, b in zip(enc_l.update(seed), seed))
    right = bytes(a ^ b for a, b in zip(enc_r.update(seed), seed))
    t_l = left[15] & 1
    t_r = right[15] & 1
    return left[:15] + bytes([left[15] & 0xFE]), t_l, right[:15] + bytes([right[15] & 0xFE]), t_r


@lru_cache(maxsize=8)
def _convert_input(n_blocks: int) -> bytes:
    label_int = int.from_bytes(_CONVERT_LABEL, "little")
    return b"".join((label_int ^ j).to_bytes(16, "little") for j in range(n_blocks))


def _convert(field: Field, seed: bytes, n_blocks: int) -> list[int]:
    """Convert a leaf seed into n_blocks field elements.

    Identical to prf_stream(field, seed, conversion label, n_blocks); the PRF
    input blocks are cached since they do not depend on the seed.
    """
    raw = aes_ecb(seed, _convert_input(n_blocks))
    p = field.modulus
    return [
        int.from_bytes(raw[off : off + 16], "little") % p
        for off in range(0, 16 * n_blocks, 16)
    ]


def _xor16(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "little") ^ int.from_bytes(b, "little")).to_bytes(16, "little")


def _rand16(rng) -> bytes:
    return secrets.token_bytes(16) if rng is None else rng.randbytes(16)


def gen(
    field: Field,
    v: int,
    payload: list[int],
    domain_bits: int = DOMAIN_BITS,
    rng=None,
) -> tuple[DpfKey, DpfKey]:
    """Generate the two key shares of the point function (v -> payload).

    payload[0] must be 1, the audit tag convention.  Party B's evaluation
    negates its converted output so that eval(A, x) + eval(B, x) equals the
    payload at v and zero elsewhere, with plain field addition.
    """
    if not 0 <= v < (1 << domain_bits):
        raise ValueError("target address outside the domain")
    if payload[0] != 1:
        raise ValueError("payload block 0 must be the audit tag 1")
    roots = [_rand16(rng), _rand16(rng)]
    seeds = list(roots)
    ts = [0, 1]
    levels: list[tuple[bytes, int, int]] = []
    for i in range(domain_bits):
        bit = (v >> (domain_bits - 1 - i)) & 1
        s0_l, t0_l, s0_r, t0_r = _expand(seeds[0])
        s1_l, t1_l, s1_r, t1_r = _expand(seeds[1])
        if bit == 0:
            keep0, keep1 = (s0_l, t0_l), (s1_l, t1_l)
            lose0, lose1 = s0_r, s1_r
        else:
            keep0, keep1 = (s0_r, t0_r), (s1_r, t1_r)
            lose0, lose1 = s0_l, s1_l
        seed_cw = _xor16(lose0, lose1)
        t_cw_l = t0_l ^ t1_l ^ bit ^ 1
        t_cw_r = t0_r ^ t1_r ^ bit
        levels.append((seed_cw, t_cw_l, t_cw_r))
        t_cw_keep = t_cw_r if bit else t_cw_l
        for party, (keep_s, keep_t) in enumerate((keep0, keep1)):
            if ts[party]:
                seeds[party] = _xor16(keep_s, seed_cw)
                ts[party] = keep_t ^ t_cw_keep
            else:
                seeds[party] = keep_s
                ts[party] = keep_t
    conv0 = _convert(field, seeds[0], len(payload))
    conv1 = _convert(field, seeds[1], len(payload))
    sign = -1 if ts[1] else 1
    payload_cw = [
        sign * (beta - c0 + c1) % field.modulus
        for beta, c0, c1 in zip(payload, conv0, conv1)
    ]
    key_a = DpfKey(0, roots[0], levels, payload_cw, domain_bits)
    key_b = DpfKey(1, roots[1], list(levels), list(payload_cw), domain_bits)
    return key_a, key_b


def eval_point(field: Field, key: DpfKey, x: int, n_blocks: int | None = None) -> list[int]:
    """Evaluate one key at one point; returns n_blocks field elements.

    n_blocks defaults to the full payload width; writers computing only the
    audit tag pass 1 and skip the rest of the leaf conversion.
    """
    if n_blocks is None:
        n_blocks = len(key.payload_cw)
    seed = key.root_seed
    t = key.party
    bits = key.domain_bits
    for i, (seed_cw, t_cw_l, t_cw_r) in enumerate(key.levels):
        s_l, t_l, s_r, t_r = _expand(seed)
        if t:
            s_l = _xor16(s_l, seed_cw)
            s_r = _xor16(s_r, seed_cw)
            t_l ^= t_cw_l
            t_r ^= t_cw_r
        if (x >> (bits - 1 - i)) & 1:
            seed, t = s_r, t_r
        else:
            seed, t = s_l, t_l
    conv = _convert(field, seed, n_blocks)
    p = field.modulus
    if key.party:
        return [-(c + t * cw) % p for c, cw in zip(conv, key.payload_cw)]
    return [(c + t * cw) % p for c, cw in zip(conv, key.payload_cw)]


def eval_many(field: Field, key: DpfKey, addrs) -> list[list[int]]:
    """Evaluate one key over an ordered address list; row i = eval(addrs[i]).

    Column 0 of the result is the server's audit vector.  All tree levels are
    batched: one fixed-key AES-ECB call per level per side covers every
    address, so the per-address cost is dominated by the leaf conversion.
    Output ordering always matches input ordering.
    """
    n = len(addrs)
    if n == 0:
        return []
    if n <= 4:
        # Below this the fixed per-level cost of the batched path exceeds
        # plain per-point evaluation.
        return [eval_point(field, key, x) for x in addrs]
    bits = key.domain_bits
    byte_len = (bits + 7) // 8
    addr_bytes = b"".join(a.to_bytes(byte_len, "big") for a in addrs)
    addr_bits = np.unpackbits(
        np.frombuffer(addr_bytes, dtype=np.uint8).reshape(n, byte_len), axis=1
    )[:, 8 * byte_len - bits :]
    seeds = np.tile(np.frombuffer(key.root_seed, dtype=np.uint8), (n, 1))
    t = np.full(n, key.party, dtype=np.uint8)
    enc_l, enc_r = _expand_ciphers()
    for i, (seed_cw, t_cw_l, t_cw_r) in enumerate(key.levels):
        raw = seeds.tobytes()
        left = np.frombuffer(enc_l.update(raw), dtype=np.uint8).reshape(n, 16) ^ seeds
        right = np.frombuffer(enc_r.update(raw), dtype=np.uint8).reshape(n, 16) ^ seeds
        t_l = left[:, 15] & 1
        t_r = right[:, 15] & 1
        left[:, 15] &= 0xFE
        right[:, 15] &= 0xFE
        corr = t[:, None] * np.frombuffer(seed_cw, dtype=np.uint8)
        left ^= corr
        right ^= corr
        t_l ^= t * t_cw_l
        t_r ^= t * t_cw_r
        bit_col = addr_bits[:, i]
        seeds = np.where(bit_col[:, None] == 1, right, left)
        t = np.where(bit_col == 1, t_r, t_l)
    p = field.modulus
    n_blocks = len(key.payload_cw)
    negate = key.party == 1
    rows = []
    seed_bytes = seeds.tobytes()
    for idx in range(n):
        conv = _convert(field, seed_bytes[16 * idx : 16 * idx + 16], n_blocks)
        ti = int(t[idx])
        if negate:
            row = [-(c + ti * cw) % p for c, cw in zip(conv, key.payload_cw)]
        else:
            row = [(c + ti * cw) % p for c, cw in zip(conv, key.payload_cw)]
        rows.append(row)
    return rows
