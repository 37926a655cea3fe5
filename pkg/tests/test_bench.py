"""Benchmark plumbing: wire-layer measurement and output formats."""

import io

from splitbox import bench


def test_bench_comm_flat_in_mailbox_count():
    records = bench.bench_comm([32, 128], message_size=160)
    assert records[0].client_bytes == records[1].client_bytes
    assert records[0].server_bytes == records[1].server_bytes > 0
    # matches the serialization arithmetic: 2 uploads + 2 downloads per server
    key_frame = 5 + 16 + 2385
    proof_frame = 5 + 16 + 160
    seed_frame = 5 + 16 + 16
    result_frame = 5 + 16 + 1
    expected = 2 * (key_frame + proof_frame + seed_frame + result_frame)
    assert records[0].client_bytes == expected == 5292


def test_bench_latency_and_csv():
    records = bench.bench_latency([16, 64], [160], samples=2)
    assert all(r.write_latency_us > 0 for r in records)
    assert all(r.audit_client_us < 1000 for r in records)
    out = io.StringIO()
    bench.write_csv(records, out)
    lines = out.getvalue().strip().split("\n")
    assert lines[0] == (
        "n,B,client_bytes,server_bytes,write_latency_us,"
        "audit_client_us,audit_server_us,throughput_wps"
    )
    assert len(lines) == 3
    assert lines[1].split(",")[0] == "16"
    table = bench.format_gnuplot(records)
    assert table.startswith("# n B ")


def test_bench_throughput_smoke():
    record = bench.bench_throughput(n=16, message_size=160, concurrency=3, duration=1.0)
    assert record.throughput_wps > 1


def test_throughput_non_increasing_in_mailbox_count():
    small = bench.bench_throughput(n=64, message_size=160, concurrency=3, duration=2.0)
    large = bench.bench_throughput(n=4096, message_size=160, concurrency=3, duration=2.0)
    assert small.throughput_wps >= large.throughput_wps
