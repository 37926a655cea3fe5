"""Field arithmetic and PRF streams, the bedrock everything else sits on.

Every value in the system - message blocks, audit randomness, keystreams,
proof elements - is an element of F_p with p = 2^128 - 159, encoded as 16
little-endian bytes.  Run:  python demos/01_field_and_prf.py
"""

import random

from splitbox.field import Field, PRODUCTION_MODULUS, label16, prf_element, prf_stream

field = Field()
print(f"modulus p = 2^128 - 159 = {PRODUCTION_MODULUS}")

a, b = field.rand(), field.rand()
print(f"\na + b  = {field.add(a, b):#034x}")
print(f"a * b  = {field.mul(a, b):#034x}")
print(f"a * a^-1 = {field.mul(a, field.inv(a))}")

encoded = field.to_bytes(a)
print(f"\nwire form of a: {encoded.hex()}  ({len(encoded)} bytes, round-trips: "
      f"{field.from_bytes(encoded) == a})")

# A PRF stream is how the two servers agree on unbounded shared randomness
# after exchanging a single 16-byte seed.
seed = random.Random(7).randbytes(16)
stream = prf_stream(field, seed, label16(b"demo"), 5)
print("\nfive elements from one seed:")
for j, x in enumerate(stream):
    print(f"  r_{j} = {x:#034x}")

# Random access matters: a writer needs element i* alone, in O(1) work.
print(f"\nstandalone r_3 equals stream[3]: "
      f"{prf_element(field, seed, label16(b'demo'), 3) == stream[3]}")
