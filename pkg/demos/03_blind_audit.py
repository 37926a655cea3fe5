"""The write audit: servers reject malformed writes without seeing them.

A malicious client could ship DPF keys whose combined evaluation is nonzero
at many mailboxes, wiping every message in the system with one request.  The
audit stops this: each server sketches its share of the write vector into
three field elements (sum, random inner product, squared inner product), the
writer - who can compute the same three values in O(1) - proves
c^2 - m*C = 0 with two tiny secret-shared proofs, and the servers verify by
exchanging seven field elements.  Weight-0 and weight-1 vectors satisfy the
identity; anything heavier fails it with overwhelming probability.

Run:  python demos/03_blind_audit.py
"""

import random

from splitbox import audit, dpf
from splitbox.field import Field

field = Field()
rng = random.Random(99)

# --- setup: 8 active mailboxes on an 8-bit toy domain --------------------
addrs = rng.sample(range(256), 8)
i_star = 5
payload = [1, field.rand(rng)]

print("honest client writes to physical slot", i_star)
key_a, key_b = dpf.gen(field, addrs[i_star], payload, domain_bits=8, rng=rng)

w_a = [row[0] for row in dpf.eval_many(field, key_a, addrs)]
w_b = [row[0] for row in dpf.eval_many(field, key_b, addrs)]

seed = rng.randbytes(16)       # revealed to the writer
seed2 = rng.randbytes(16)      # withheld: fixes the challenge point

sketch_a = audit.server_sketch(field, w_a, seed)
sketch_b = audit.server_sketch(field, w_b, seed)
print(f"server A's sketch shares: m={sketch_a.m_share:x} c={sketch_a.c_share:x}")

m, c, big_c = audit.client_checks(
    field, seed, i_star,
    dpf.eval_point(field, key_a, addrs[i_star])[0],
    dpf.eval_point(field, key_b, addrs[i_star])[0],
)
print(f"writer's O(1) checks:  m={m}  c^2-mC = {field.sub(field.mul(c, c), field.mul(m, big_c))}")

proof_a, proof_b = audit.snip_gen(field, m, c, big_c, rng)
print(f"proof share size: {len(proof_a.to_bytes())} bytes per server, any n")

t = audit.challenge_point(field, seed2)
decision = audit.decide(
    field,
    audit.exchange_values(field, sketch_a, proof_a, t),
    audit.exchange_values(field, sketch_b, proof_b, t),
)
print(f"honest write -> {'ACCEPT' if decision.accept else 'REJECT'}")

# --- now a cheating client: a weight-2 vector -----------------------------
print("\ncheating client targets two slots at once")
w = [0] * 8
w[2], w[6] = field.rand(rng), field.rand(rng)
w_a = [field.rand(rng) for _ in w]
w_b = [field.sub(x, y) for x, y in zip(w, w_a)]
sketch_a = audit.server_sketch(field, w_a, seed)
sketch_b = audit.server_sketch(field, w_b, seed)

# best effort: it knows w and seed, so it computes the true (m, c, C) ...
r = audit.sketch_rand_vector(field, seed, 8)
m = sum(w) % field.modulus
c = sum(x * y for x, y in zip(w, r)) % field.modulus
big_c = sum(x * y * y for x, y in zip(w, r)) % field.modulus
gap = field.sub(field.mul(c, c), field.mul(m, big_c))
print(f"... but now c^2 - mC = {gap:x} != 0")

proof_a, proof_b = audit.snip_gen(field, m, c, big_c, rng)
decision = audit.decide(
    field,
    audit.exchange_values(field, sketch_a, proof_a, t),
    audit.exchange_values(field, sketch_b, proof_b, t),
)
print(f"forged write  -> {'ACCEPT' if decision.accept else 'REJECT'} "
      f"(accept probability is O(1/p), p ~ 2^128)")
