"""Desk-scale benchmark run: the trends behind the design.

Client traffic should be flat in the number of mailboxes (the write request
is a fixed-size DPF key plus a fixed-size proof), while server work grows
linearly (one DPF evaluation per active mailbox).  This prints a small CSV;
larger sweeps via `splitbox bench`.

Run:  python demos/06_benchmarks.py
"""

import sys

from splitbox import bench

print("communication vs mailbox count (expect flat client bytes):")
records = bench.bench_comm([64, 1024, 8192], message_size=160)
bench.write_csv(records, sys.stdout)

print("\nwrite+read latency vs mailbox count (expect linear growth):")
records = bench.bench_latency([500, 2000, 8000], [160], samples=3)
bench.write_csv(records, sys.stdout)

print("\nthroughput under 4 concurrent writers:")
records = [bench.bench_throughput(n=200, message_size=160, concurrency=4, duration=2.0)]
bench.write_csv(records, sys.stdout)

print("\ngnuplot-friendly form of the latency sweep:")
sys.stdout.write(bench.format_gnuplot(records))
