"""Prime-field arithmetic and AES-backed PRF streams of field elements.

Everything else in the package computes over F_p.  The production modulus is
2^128 - 159 (the largest prime below 2^128) so that one element fits exactly
16 bytes; the modulus is a runtime parameter so that statistical soundness
tests can run over small primes where rejection rates are measurable.

Elements are plain Python ints in [0, p).  The wire encoding of one element
is always 16 bytes little-endian, regardless of the modulus.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

PRODUCTION_MODULUS = 2**128 - 159

ELEMENT_BYTES = 16


def aes_ecb(key: bytes, data: bytes) -> bytes:
    """Raw AES-128-ECB over one or more 16-byte blocks (the PRF core)."""
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(data) + enc.finalize()


def label16(tag: bytes) -> bytes:
    """Zero-pad a short domain-separation tag to a 16-byte PRF label."""
    if len(tag) > 16:
        raise ValueError("label tag longer than 16 bytes")
    return tag.ljust(16, b"\x00")


@dataclass(frozen=True)
class Field:
    """F_p with canonical int representation.

    Methods never return values outside [0, p); callers are expected to pass
    canonical values back in.
    """

    modulus: int = PRODUCTION_MODULUS

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.modulus

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.modulus

    def neg(self, a: int) -> int:
        return -a % self.modulus

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.modulus

    def inv(self, a: int) -> int:
        if a % self.modulus == 0:
            raise ZeroDivisionError("zero has no multiplicative inverse")
        return pow(a, -1, self.modulus)

    def from_bytes(self, b: bytes) -> int:
        if len(b) != ELEMENT_BYTES:
            raise ValueError("field element encoding must be 16 bytes")
        return int.from_bytes(b, "little") % self.modulus

    def to_bytes(self, a: int) -> bytes:
        return (a % self.modulus).to_bytes(ELEMENT_BYTES, "little")

    def rand(self, rng=None) -> int:
        """Uniform element; `rng` is a random.Random for reproducible tests."""
        if rng is None:
            return secrets.randbelow(self.modulus)
        return rng.randrange(self.modulus)


def prf_block(key: bytes, label: bytes, index: int) -> bytes:
    """Block `index` of the PRF stream: AES_key(label xor LE128(index))."""
    block_in = (int.from_bytes(label, "little") ^ index).to_bytes(16, "little")
    return aes_ecb(key, block_in)


def prf_element(field: Field, key: bytes, label: bytes, index: int) -> int:
    """Random access into prf_stream: element `index` computed standalone."""
    return field.from_bytes(prf_block(key, label, index))


def prf_stream(field: Field, key: bytes, label: bytes, count: int) -> list[int]:
    """Deterministic stream of `count` field elements from (key, label).

    Element j is AES_key(label xor LE128(j)) reduced mod p, so any element
    can also be recomputed on its own with prf_element.
    """
    if count == 0:
        return []
    if len(key) != 16 or len(label) != 16:
        raise ValueError("prf_stream key and label must be 16 bytes")
    label_int = int.from_bytes(label, "little")
    blocks_in = b"".join(
        (label_int ^ j).to_bytes(16, "little") for j in range(count)
    )
    raw = aes_ecb(key, blocks_in)
    p = field.modulus
    return [
        int.from_bytes(raw[off : off + 16], "little") % p
        for off in range(0, 16 * count, 16)
    ]
