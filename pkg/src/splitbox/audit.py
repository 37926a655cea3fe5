"""Two-server write audit: sketches plus constant-size secret-shared proofs.

Servers hold additive shares w_A, w_B of the write vector w (one field
element per active mailbox, the DPF audit-tag column).  The audit convinces
both servers that w has Hamming weight at most one, without revealing which
entry is nonzero, in constant communication.

Sketch step: from a per-request seed both servers derive the same random
vector r and its squares R, then compute shares of m = sum(w),
c = <w, r> and C = <w, R>.  For weight <= 1 vectors, c^2 - m*C = 0; for
weight >= 2 it is nonzero except with probability O(1/p) over r.

Proof step: the writer, who can compute m, c, C from its own keys in O(1)
work, proves c^2 - m*C = 0 with two linear-polynomial proofs, one per
multiplication:

  proof 1:  f1 through (0, rf1), (1, c);  g1 through (0, rg1), (1, c);
            h1 = f1*g1 (quadratic), so h1(1) = c^2.
  proof 2:  f2 through (0, rf2), (1, m);  g2 through (0, rg2), (1, C);
            h2 = f2*g2, so h2(1) = m*C.

The client sends each server additive shares of the masks and of the h
coefficients.  Each server rebuilds its linear shares of f_k and g_k using
its *own* sketch shares at point 1 (never client-supplied values), evaluates
everything at a challenge point t derived from a second seed withheld from
the client, and the servers exchange one message of seven elements each:
f_k(t), g_k(t), h_k(t) shares for k in {1, 2} plus a share of h1(1) - h2(1).
They accept iff, after reconstruction, f_k(t)*g_k(t) = h_k(t) for both
proofs and h1(1) - h2(1) = 0.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

from .field import ELEMENT_BYTES, Field, label16, prf_element, prf_stream

SKETCH_LABEL = label16(b"audit-sketch")
CHALLENGE_LABEL = label16(b"audit-challenge")

PROOF_SHARE_BYTES = 10 * ELEMENT_BYTES
EXCHANGE_BODY_BYTES = 7 * ELEMENT_BYTES

REASON_OK = "ok"
REASON_SKETCH_MISMATCH = "sketch-mismatch"
REASON_SEED_MISMATCH = "seed-mismatch"
REASON_DECODE_ERROR = "decode-error"


def derive_sketch_rand(field: Field, seed: bytes, i: int) -> int:
    """Sketch element r_i, random-access: element i of the seeded stream."""
    return prf_element(field, seed, SKETCH_LABEL, i)


def sketch_rand_vector(field: Field, seed: bytes, n: int) -> list[int]:
    """The full sketch vector (r_0 ... r_{n-1}) for a server with n mailboxes."""
    return prf_stream(field, seed, SKETCH_LABEL, n)


@dataclass(frozen=True)
class ServerSketch:
    """One server's additive shares of (m, c, C)."""

    m_share: int
    c_share: int
    C_share: int


def server_sketch(field: Field, w_share: list[int], seed: bytes) -> ServerSketch:
    """Sketch a share vector: (sum w, <w, r>, <w, r^2>), all mod p."""
    r = sketch_rand_vector(field, seed, len(w_share))
    p = field.modulus
    m = c = big_c = 0
    for w_i, r_i in zip(w_share, r):
        m += w_i
        c += w_i * r_i
        big_c += w_i * r_i * r_i
    return ServerSketch(m % p, c % p, big_c % p)


def client_checks(
    field: Field, seed: bytes, i_star: int, w_a_t: int, w_b_t: int
) -> tuple[int, int, int]:
    """The writer's O(1) copy of the sketch outputs.

    w_a_t, w_b_t are the writer's local evaluations of its two keys at the
    target (audit-tag block); i_star is the target's physical index, the only
    position where the servers' vectors are nonzero.
    """
    r_i = derive_sketch_rand(field, seed, i_star)
    m = field.add(w_a_t, w_b_t)
    c = field.mul(r_i, m)
    big_c = field.mul(field.mul(r_i, r_i), m)
    return m, c, big_c


@dataclass(frozen=True)
class SnipProofShare:
    """One server's share of the audit proof: ten field elements (160 bytes).

    Fields hold shares of: mask pair and h coefficients (constant, linear,
    quadratic) for proof 1, then the same for proof 2.
    """

    rf1: int
    rg1: int
    h1: tuple[int, int, int]
    rf2: int
    rg2: int
    h2: tuple[int, int, int]

    def to_bytes(self) -> bytes:
        vals = (self.rf1, self.rg1, *self.h1, self.rf2, self.rg2, *self.h2)
        return b"".join(v.to_bytes(ELEMENT_BYTES, "little") for v in vals)

    @classmethod
    def from_bytes(cls, data: bytes, field: Field) -> "SnipProofShare":
        if len(data) != PROOF_SHARE_BYTES:
            raise ValueError("proof share must be 160 bytes")
        vals = [
            field.from_bytes(data[off : off + ELEMENT_BYTES])
            for off in range(0, PROOF_SHARE_BYTES, ELEMENT_BYTES)
        ]
        return cls(vals[0], vals[1], (vals[2], vals[3], vals[4]), vals[5], vals[6], (vals[7], vals[8], vals[9]))


def _poly_mul_linear(field: Field, f: tuple[int, int], g: tuple[int, int]) -> tuple[int, int, int]:
    """(f0 + f1 X)(g0 + g1 X) as quadratic coefficients."""
    p = field.modulus
    return (
        f[0] * g[0] % p,
        (f[0] * g[1] + f[1] * g[0]) % p,
        f[1] * g[1] % p,
    )


def _split(field: Field, value: int, rng) -> tuple[int, int]:
    share_a = field.rand(rng)
    return share_a, field.sub(value, share_a)


def snip_gen(
    field: Field, m: int, c: int, big_c: int, rng=None
) -> tuple[SnipProofShare, SnipProofShare]:
    """Build the two proof shares for the statement c^2 - m*C = 0.

    Masks are uniform; every transmitted element is a fresh uniform additive
    share, so either share alone is independent of (m, c, C).
    """
    rf1, rg1, rf2, rg2 = (field.rand(rng) for _ in range(4))
    # Linear polynomials as (value at 0, slope): f(X) = f(0) + (f(1)-f(0)) X.
    f1 = (rf1, field.sub(c, rf1))
    g1 = (rg1, field.sub(c, rg1))
    f2 = (rf2, field.sub(m, rf2))
    g2 = (rg2, field.sub(big_c, rg2))
    h1 = _poly_mul_linear(field, f1, g1)
    h2 = _poly_mul_linear(field, f2, g2)
    rf1_a, rf1_b = _split(field, rf1, rng)
    rg1_a, rg1_b = _split(field, rg1, rng)
    rf2_a, rf2_b = _split(field, rf2, rng)
    rg2_a, rg2_b = _split(field, rg2, rng)
    h1_shares = [_split(field, coeff, rng) for coeff in h1]
    h2_shares = [_split(field, coeff, rng) for coeff in h2]
    share_a = SnipProofShare(
        rf1_a, rg1_a, tuple(s[0] for s in h1_shares),
        rf2_a, rg2_a, tuple(s[0] for s in h2_shares),
    )
    share_b = SnipProofShare(
        rf1_b, rg1_b, tuple(s[1] for s in h1_shares),
        rf2_b, rg2_b, tuple(s[1] for s in h2_shares),
    )
    return share_a, share_b


def challenge_point(field: Field, seed2: bytes) -> int:
    """Challenge t from the second per-request seed, resampled until t not in {0, 1}.

    The seed never reaches the client: a writer who could predict t could
    forge h away from t and defeat the polynomial identity test.
    """
    j = 0
    while True:
        t = prf_element(field, seed2, CHALLENGE_LABEL, j)
        if t not in (0, 1):
            return t
        j += 1


def exchange_values(
    field: Field, sketch: ServerSketch, proof: SnipProofShare, t: int
) -> tuple[int, int, int, int, int, int, int]:
    """This server's seven published shares for the audit exchange.

    Point 1 of each linear polynomial share is this server's own sketch
    share, which binds the proof to the write actually received rather than
    to values of the client's choosing.
    """
    p = field.modulus

    def lin(at0: int, at1: int) -> int:
        return (at0 + (at1 - at0) * t) % p

    def quad(coeffs: tuple[int, int, int], x: int) -> int:
        return (coeffs[0] + coeffs[1] * x + coeffs[2] * x * x) % p

    f1t = lin(proof.rf1, sketch.c_share)
    g1t = lin(proof.rg1, sketch.c_share)
    h1t = quad(proof.h1, t)
    f2t = lin(proof.rf2, sketch.m_share)
    g2t = lin(proof.rg2, sketch.C_share)
    h2t = quad(proof.h2, t)
    diff1 = (sum(proof.h1) - sum(proof.h2)) % p
    return (f1t, g1t, h1t, f2t, g2t, h2t, diff1)


@dataclass(frozen=True)
class AuditDecision:
    accept: bool
    reason: str


def decide(field: Field, ours, theirs) -> AuditDecision:
    """Combine the two published 7-tuples into the accept/reject decision."""
    f1t, g1t, h1t, f2t, g2t, h2t, diff = (
        field.add(a, b) for a, b in zip(ours, theirs)
    )
    ok = (
        field.mul(f1t, g1t) == h1t
        and field.mul(f2t, g2t) == h2t
        and diff == 0
    )
    return AuditDecision(ok, REASON_OK if ok else REASON_SKETCH_MISMATCH)


def pack_exchange(request_id: bytes, values) -> bytes:
    return request_id + b"".join(v.to_bytes(ELEMENT_BYTES, "little") for v in values)


def unpack_exchange(field: Field, data: bytes) -> tuple[bytes, tuple[int, ...]]:
    if len(data) != 16 + EXCHANGE_BODY_BYTES:
        raise ValueError("audit exchange message must be 128 bytes")
    values = tuple(
        field.from_bytes(data[off : off + ELEMENT_BYTES])
        for off in range(16, len(data), ELEMENT_BYTES)
    )
    return data[:16], values


def audit_verify(
    field: Field,
    request_id: bytes,
    sketch: ServerSketch,
    proof: SnipProofShare,
    seed2: bytes,
    send,
    recv,
) -> AuditDecision:
    """Run one server's side of the audit exchange.

    `send` transmits this server's exchange message to the peer; `recv`
    returns the peer's (raising on channel failure).  Both servers reach the
    same decision on the same transcript.
    """
    t = challenge_point(field, seed2)
    ours = exchange_values(field, sketch, proof, t)
    send(pack_exchange(request_id, ours))
    try:
        reply = recv()
        peer_id, theirs = unpack_exchange(field, reply)
    except Exception:
        return AuditDecision(False, REASON_DECODE_ERROR)
    if peer_id != request_id:
        return AuditDecision(False, REASON_SEED_MISMATCH)
    return decide(field, ours, theirs)
