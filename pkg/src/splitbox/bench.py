"""Desk-scale benchmarks of the live pair: communication, latency, throughput.

Byte counts come from the wire layer (socket counters), never from size
formulas.  Absolute numbers depend on the machine; the interesting outputs
are the trends: client traffic flat in the number of mailboxes, write
latency linear in it, client-side compute constant.
"""

from __future__ import annotations

import io
import random
import secrets
import threading
import time
from dataclasses import dataclass

from . import audit
from .field import Field
from .pair import LocalPair

CSV_HEADER = "n,B,client_bytes,server_bytes,write_latency_us,audit_client_us,audit_server_us,throughput_wps"


@dataclass
class BenchRecord:
    n: int
    B: int
    client_bytes: int
    server_bytes: int
    write_latency_us: float
    audit_client_us: float
    audit_server_us: float
    throughput_wps: float

    def csv_row(self) -> str:
        return (
            f"{self.n},{self.B},{self.client_bytes},{self.server_bytes},"
            f"{self.write_latency_us:.1f},{self.audit_client_us:.3f},"
            f"{self.audit_server_us:.1f},{self.throughput_wps:.2f}"
        )


def write_csv(records: list[BenchRecord], fh) -> None:
    fh.write(CSV_HEADER + "\n")
    for rec in records:
        fh.write(rec.csv_row() + "\n")


def format_gnuplot(records: list[BenchRecord]) -> str:
    """Whitespace-separated table with a comment header, for `plot ... using`."""
    out = io.StringIO()
    out.write("# " + CSV_HEADER.replace(",", " ") + "\n")
    for rec in records:
        out.write(rec.csv_row().replace(",", " ") + "\n")
    return out.getvalue()


def measure_client_audit_us(field: Field, reps: int = 200) -> float:
    """Time of the writer's audit work: check values plus proof generation."""
    rng = random.Random(12)
    seed = rng.randbytes(16)
    start = time.perf_counter()
    for i in range(reps):
        m, c, big_c = audit.client_checks(field, seed, i, 1, 0)
        audit.snip_gen(field, m, c, big_c, rng)
    return (time.perf_counter() - start) / reps * 1e6


def _measured_write(pair: LocalPair, cli, target, body_size: int) -> tuple[int, int, float]:
    """One write; returns (client bytes, peer-channel bytes, latency us)."""
    sent0, recv0 = cli.bytes_sent(), cli.bytes_received()
    peer0 = sum(pair.a.peer_bytes())
    start = time.perf_counter()
    accepted = cli.send(target, secrets.token_bytes(body_size))
    latency_us = (time.perf_counter() - start) * 1e6
    if not accepted:
        raise RuntimeError("benchmark write rejected")
    client_bytes = (cli.bytes_sent() - sent0) + (cli.bytes_received() - recv0)
    server_bytes = sum(pair.a.peer_bytes()) - peer0
    return client_bytes, server_bytes, latency_us


def bench_comm(n_list: list[int], message_size: int = 160) -> list[BenchRecord]:
    """Exact per-write byte counts at each active-set size."""
    records = []
    for n in n_list:
        with LocalPair(message_size=message_size) as pair:
            creds = pair.preload(max(n - 1, 1))  # dummy mailbox is slot 0
            with pair.client() as cli:
                target = creds[0].send_target()
                client_bytes, server_bytes, latency = _measured_write(
                    pair, cli, target, message_size // 4
                )
                audits, audit_us = pair.a.audit_stats()
                records.append(
                    BenchRecord(
                        n=len(pair.a.vault),
                        B=message_size,
                        client_bytes=client_bytes,
                        server_bytes=server_bytes,
                        write_latency_us=latency,
                        audit_client_us=measure_client_audit_us(pair.a.field),
                        audit_server_us=audit_us / max(audits, 1),
                        throughput_wps=0.0,
                    )
                )
    return records


def bench_latency(
    n_list: list[int], message_size_list: list[int], samples: int = 3
) -> list[BenchRecord]:
    """End-to-end write-then-read latency per (n, B)."""
    records = []
    for message_size in message_size_list:
        for n in n_list:
            with LocalPair(message_size=message_size) as pair:
                creds = pair.preload(max(n - 1, 1))
                with pair.client() as cli:
                    target = creds[0].send_target()
                    cred = creds[0]
                    lat = []
                    bytes_c = bytes_s = 0
                    for _ in range(samples):
                        bytes_c, bytes_s, write_us = _measured_write(
                            pair, cli, target, message_size // 4
                        )
                        start = time.perf_counter()
                        cli.check(cred)
                        read_us = (time.perf_counter() - start) * 1e6
                        lat.append(write_us + read_us)
                    audits, audit_us = pair.a.audit_stats()
                    lat.sort()
                    records.append(
                        BenchRecord(
                            n=len(pair.a.vault),
                            B=message_size,
                            client_bytes=bytes_c,
                            server_bytes=bytes_s,
                            write_latency_us=lat[len(lat) // 2],
                            audit_client_us=measure_client_audit_us(pair.a.field),
                            audit_server_us=audit_us / max(audits, 1),
                            throughput_wps=0.0,
                        )
                    )
    return records


def bench_throughput(
    n: int, message_size: int, concurrency: int, duration: float = 5.0
) -> BenchRecord:
    """Sustained accepted writes per second under concurrent clients."""
    with LocalPair(message_size=message_size) as pair:
        creds = pair.preload(max(n - 1, 1))
        accepted = [0] * concurrency
        rejected = [0] * concurrency
        stop_at = time.monotonic() + duration

        def worker(idx: int) -> None:
            rng = random.Random(idx)
            with pair.client() as cli:
                while time.monotonic() < stop_at:
                    target = rng.choice(creds).send_target()
                    if cli.send(target, secrets.token_bytes(message_size // 4)):
                        accepted[idx] += 1
                    else:
                        rejected[idx] += 1

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(concurrency)]
        start = time.perf_counter()
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        elapsed = time.perf_counter() - start
        if sum(rejected):
            raise RuntimeError(f"{sum(rejected)} writes rejected under honest load")
        audits, audit_us = pair.a.audit_stats()
        return BenchRecord(
            n=len(pair.a.vault),
            B=message_size,
            client_bytes=0,
            server_bytes=0,
            write_latency_us=0.0,
            audit_client_us=measure_client_audit_us(pair.a.field),
            audit_server_us=audit_us / max(audits, 1),
            throughput_wps=sum(accepted) / elapsed,
        )
