"""Point-function share generation and evaluation."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from splitbox import dpf
from splitbox.field import Field

F = Field()


def rand_payload(rng, n_blocks):
    return [1] + [F.rand(rng) for _ in range(n_blocks)]


def point_oracle(v, payload, n_points):
    """The function the shares must sum to: payload at v, zero elsewhere."""
    width = len(payload)
    return [list(payload) if x == v else [0] * width for x in range(n_points)]


def test_shares_sum_to_payload_at_target():
    rng = random.Random(1)
    v = rng.getrandbits(128)
    payload = rand_payload(rng, 11)
    ka, kb = dpf.gen(F, v, payload, rng=rng)
    out = [F.add(a, b) for a, b in zip(dpf.eval_point(F, ka, v), dpf.eval_point(F, kb, v))]
    assert out == payload
    assert out[0] == 1  # audit tag


def test_shares_cancel_off_target():
    rng = random.Random(2)
    v = rng.getrandbits(128)
    payload = rand_payload(rng, 4)
    ka, kb = dpf.gen(F, v, payload, rng=rng)
    for _ in range(20):
        x = rng.getrandbits(128)
        if x == v:
            continue
        out = [F.add(a, b) for a, b in zip(dpf.eval_point(F, ka, x), dpf.eval_point(F, kb, x))]
        assert out == [0] * 5


def test_eval_deterministic():
    rng = random.Random(3)
    ka, _ = dpf.gen(F, rng.getrandbits(128), rand_payload(rng, 2), rng=rng)
    x = rng.getrandbits(128)
    assert dpf.eval_point(F, ka, x) == dpf.eval_point(F, ka, x)


@pytest.mark.parametrize("bits", [4, 8])
def test_small_domain_exhaustive(bits):
    # Brute force over every outcome: exactly one nonzero summed slot, at v.
    rng = random.Random(bits)
    for _ in range(25):
        v = rng.randrange(1 << bits)
        payload = rand_payload(rng, 3)
        ka, kb = dpf.gen(F, v, payload, domain_bits=bits, rng=rng)
        full = range(1 << bits)
        ma = dpf.eval_many(F, ka, list(full))
        mb = dpf.eval_many(F, kb, list(full))
        summed = [[F.add(a, b) for a, b in zip(ra, rb)] for ra, rb in zip(ma, mb)]
        assert summed == point_oracle(v, payload, 1 << bits)


def test_eval_many_matches_eval_point_rows():
    rng = random.Random(4)
    v = rng.getrandbits(128)
    ka, kb = dpf.gen(F, v, rand_payload(rng, 11), rng=rng)
    addrs = [rng.getrandbits(128) for _ in range(64)] + [v]
    for key in (ka, kb):
        rows = dpf.eval_many(F, key, addrs)
        assert rows == [dpf.eval_point(F, key, x) for x in addrs]
        # column 0 is the audit vector
        assert [row[0] for row in rows] == [dpf.eval_point(F, key, x)[0] for x in addrs]


def test_eval_many_single_target_row():
    rng = random.Random(5)
    v = rng.getrandbits(128)
    payload = rand_payload(rng, 2)
    ka, kb = dpf.gen(F, v, payload, rng=rng)
    ra = dpf.eval_many(F, ka, [v])
    rb = dpf.eval_many(F, kb, [v])
    assert [F.add(a, b) for a, b in zip(ra[0], rb[0])] == payload


def test_eval_many_inactive_target():
    rng = random.Random(6)
    v = rng.getrandbits(128)
    ka, kb = dpf.gen(F, v, rand_payload(rng, 2), rng=rng)
    addrs = [rng.getrandbits(128) for _ in range(40)]  # v not among them
    ma = dpf.eval_many(F, ka, addrs)
    mb = dpf.eval_many(F, kb, addrs)
    for ra, rb in zip(ma, mb):
        assert all(F.add(a, b) == 0 for a, b in zip(ra, rb))


def test_eval_many_large_set_one_nonzero_row():
    rng = random.Random(7)
    v = rng.getrandbits(128)
    payload = rand_payload(rng, 1)
    ka, kb = dpf.gen(F, v, payload, rng=rng)
    addrs = [rng.getrandbits(128) for _ in range(10_000)]
    slot = rng.randrange(len(addrs))
    addrs[slot] = v
    ma = dpf.eval_many(F, ka, addrs)
    mb = dpf.eval_many(F, kb, addrs)
    nonzero = [
        i
        for i, (ra, rb) in enumerate(zip(ma, mb))
        if any(F.add(a, b) for a, b in zip(ra, rb))
    ]
    assert nonzero == [slot]


def test_key_serialization_roundtrip_and_size():
    rng = random.Random(8)
    v = rng.getrandbits(128)
    ka, kb = dpf.gen(F, v, rand_payload(rng, 11), rng=rng)
    blob = ka.to_bytes()
    # size formula: 1 + 16 + 128*17 + 16*(L+1) with L = 11
    assert len(blob) == dpf.key_size(12) == 1 + 16 + 128 * 17 + 16 * 12 == 2385
    back = dpf.DpfKey.from_bytes(blob, 12)
    assert back.to_bytes() == blob
    x = rng.getrandbits(128)
    assert dpf.eval_point(F, back, x) == dpf.eval_point(F, ka, x)
    assert len(kb.to_bytes()) == len(blob)


def test_key_size_independent_of_target_and_payload():
    rng = random.Random(9)
    sizes = set()
    for _ in range(10):
        v = rng.getrandbits(128)
        payload = rand_payload(rng, 11)
        ka, kb = dpf.gen(F, v, payload, rng=rng)
        sizes.add(len(ka.to_bytes()))
        sizes.add(len(kb.to_bytes()))
    assert sizes == {2385}


def test_key_decode_errors():
    rng = random.Random(10)
    ka, _ = dpf.gen(F, rng.getrandbits(128), rand_payload(rng, 1), rng=rng)
    blob = bytearray(ka.to_bytes())
    with pytest.raises(ValueError):
        dpf.DpfKey.from_bytes(bytes(blob[:-1]), 2)
    blob[0] = 7  # party byte
    with pytest.raises(ValueError):
        dpf.DpfKey.from_bytes(bytes(blob), 2)
    blob[0] = 0
    blob[17 + 16] = 0xF0  # control byte high bits
    with pytest.raises(ValueError):
        dpf.DpfKey.from_bytes(bytes(blob), 2)


def test_gen_rejects_bad_inputs():
    rng = random.Random(11)
    with pytest.raises(ValueError):
        dpf.gen(F, 2**128, [1, 0], rng=rng)
    with pytest.raises(ValueError):
        dpf.gen(F, 5, [2, 0], rng=rng)  # audit tag must be 1


def test_message_blocks():
    assert dpf.message_blocks(160) == 11
    assert dpf.message_blocks(1024) == 69
    assert dpf.message_blocks(15) == 1
    assert dpf.message_blocks(16) == 2
    with pytest.raises(ValueError):
        dpf.message_blocks(0)


@settings(max_examples=100)
@given(st.binary(min_size=0, max_size=160))
def test_payload_pack_roundtrip(data):
    blocks = dpf.pack_payload(F, data)
    assert blocks[0] == 1
    assert len(blocks) == 1 + dpf.message_blocks(max(len(data), 1)) if data else True
    assert dpf.unpack_payload(blocks, len(data)) == data
