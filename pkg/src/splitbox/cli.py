"""Command-line entry points.

`splitbox-server` runs one of the two servers; `splitbox` is the client with
register / send / check / cover / bench subcommands.  Every server flag can
also come from an environment variable (SPLITBOX_ROLE, SPLITBOX_LISTEN,
SPLITBOX_PEER, SPLITBOX_SECRET_FILE, SPLITBOX_MSG_SIZE,
SPLITBOX_TEST_MODULUS); flags win over the environment.
"""

from __future__ import annotations

import argparse
import os
import secrets
import sys
import time

from .client import Client, MailboxCredential, ReadDenied, STATUS_EMPTY, STATUS_MESSAGE
from .client import addr_file_bytes, target_from_addr_file
from .field import PRODUCTION_MODULUS
from .server import Server, ServerConfig


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def _env_default(name: str, fallback=None):
    return os.environ.get(f"SPLITBOX_{name}", fallback)


def server_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="splitbox-server", description="Run one of the two mailbox servers."
    )
    parser.add_argument("--role", choices=["A", "B"], default=_env_default("ROLE"))
    parser.add_argument("--listen", type=_parse_endpoint, default=_env_default("LISTEN"))
    parser.add_argument("--peer", type=_parse_endpoint, default=_env_default("PEER"))
    parser.add_argument("--secret-file", default=_env_default("SECRET_FILE"))
    parser.add_argument("--msg-size", type=int, default=int(_env_default("MSG_SIZE", 160)))
    parser.add_argument(
        "--test-modulus",
        type=int,
        default=_env_default("TEST_MODULUS"),
        help="override the field modulus (testing only)",
    )
    args = parser.parse_args(argv)
    if args.role is None or args.listen is None or args.secret_file is None:
        parser.error("--role, --listen and --secret-file are required")
    if isinstance(args.listen, str):
        args.listen = _parse_endpoint(args.listen)
    if isinstance(args.peer, str):
        args.peer = _parse_endpoint(args.peer)
    if args.role == "B" and args.peer is None:
        parser.error("server B needs --peer pointing at server A")
    with open(args.secret_file, "rb") as fh:
        secret = fh.read()
    if len(secret) != 32:
        parser.error("secret file must hold exactly 32 bytes")
    config = ServerConfig(
        role=args.role,
        listen=args.listen,
        peer=args.peer,
        shared_secret=secret,
        message_size=args.msg_size,
        modulus=int(args.test_modulus) if args.test_modulus else PRODUCTION_MODULUS,
    )
    server = Server(config)
    server.start()
    print(f"server {args.role} listening on {args.listen[0]}:{server.port}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def _client_from_args(args) -> Client:
    return Client(
        args.server_a,
        args.server_b,
        message_size=args.msg_size,
        modulus=args.test_modulus or PRODUCTION_MODULUS,
    )


def _add_client_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--server-a", type=_parse_endpoint, required=True)
    sub.add_argument("--server-b", type=_parse_endpoint, required=True)
    sub.add_argument("--msg-size", type=int, default=int(_env_default("MSG_SIZE", 160)))
    sub.add_argument("--test-modulus", type=int, default=None)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="splitbox", description="Mailbox client.")
    subs = parser.add_subparsers(dest="command", required=True)

    s_reg = subs.add_parser("register", help="register a mailbox, write a credential file")
    _add_client_flags(s_reg)
    s_reg.add_argument("--out", required=True, help="credential file to create")
    s_reg.add_argument("--addr-out", help="also write a sender address file")
    s_reg.add_argument(
        "--with-secret",
        action="store_true",
        help="generate a master secret for MACed messages",
    )

    s_send = subs.add_parser("send", help="privately send a message")
    _add_client_flags(s_send)
    s_send.add_argument("--to", required=True, help="address file from the mailbox owner")
    s_send.add_argument("--msg", required=True, help="file holding the message bytes")

    s_check = subs.add_parser("check", help="read and clear an owned mailbox")
    _add_client_flags(s_check)
    s_check.add_argument("--cred", required=True, help="credential file")
    s_check.add_argument("--out", help="write the message to this file instead of stdout")

    s_cover = subs.add_parser("cover", help="emit cover traffic to the dummy mailbox")
    _add_client_flags(s_cover)
    s_cover.add_argument("--rate", type=float, default=1.0, help="cover writes per second")
    s_cover.add_argument("--count", type=int, help="stop after this many writes")

    s_bench = subs.add_parser("bench", help="run the desk-scale benchmarks, CSV to stdout")
    s_bench.add_argument(
        "--mode", choices=["comm", "latency", "throughput"], default="latency"
    )
    s_bench.add_argument("--sizes", default="1000,10000", help="mailbox counts, comma separated")
    s_bench.add_argument("--msg-size", type=int, default=160)
    s_bench.add_argument("--concurrency", type=int, default=4)
    s_bench.add_argument("--duration", type=float, default=5.0)
    s_bench.add_argument("--gnuplot", action="store_true", help="emit a gnuplot table instead")

    args = parser.parse_args(argv)

    if args.command == "register":
        with _client_from_args(args) as cli:
            master = secrets.token_bytes(32) if args.with_secret else None
            cred = cli.register(master_secret=master)
        with open(args.out, "wb") as fh:
            fh.write(cred.to_bytes())
        os.chmod(args.out, 0o600)
        if args.addr_out:
            with open(args.addr_out, "wb") as fh:
                fh.write(addr_file_bytes(cred.p, cred.v, master))
            os.chmod(args.addr_out, 0o600)
        print(f"registered mailbox p={cred.p} v={cred.v:032x}")
        return 0

    if args.command == "send":
        with open(args.to, "rb") as fh:
            target = target_from_addr_file(fh.read())
        with open(args.msg, "rb") as fh:
            message = fh.read()
        with _client_from_args(args) as cli:
            accepted = cli.send(target, message)
        print("accepted" if accepted else "rejected")
        return 0 if accepted else 1

    if args.command == "check":
        with open(args.cred, "rb") as fh:
            cred = MailboxCredential.from_bytes(fh.read())
        with _client_from_args(args) as cli:
            try:
                result = cli.check(cred)
            except ReadDenied:
                print("access denied", file=sys.stderr)
                return 2
        if result.status == STATUS_EMPTY:
            print("empty")
            return 0
        if result.status != STATUS_MESSAGE:
            print(result.status, file=sys.stderr)
            return 3
        if args.out:
            with open(args.out, "wb") as fh:
                fh.write(result.message)
        else:
            sys.stdout.buffer.write(result.message + b"\n")
        return 0

    if args.command == "cover":
        sent = 0
        interval = 1.0 / args.rate if args.rate > 0 else 0.0
        with _client_from_args(args) as cli:
            try:
                while args.count is None or sent < args.count:
                    started = time.perf_counter()
                    if not cli.cover_send():
                        print("cover write rejected", file=sys.stderr)
                        return 1
                    sent += 1
                    leftover = interval - (time.perf_counter() - started)
                    if leftover > 0:
                        time.sleep(leftover)
            except KeyboardInterrupt:
                pass
        print(f"sent {sent} cover writes", file=sys.stderr)
        return 0

    if args.command == "bench":
        from . import bench

        n_list = [int(x) for x in args.sizes.split(",") if x]
        if args.mode == "comm":
            records = bench.bench_comm(n_list, args.msg_size)
        elif args.mode == "latency":
            records = bench.bench_latency(n_list, [args.msg_size])
        else:
            records = [
                bench.bench_throughput(n, args.msg_size, args.concurrency, args.duration)
                for n in n_list
            ]
        if args.gnuplot:
            sys.stdout.write(bench.format_gnuplot(records))
        else:
            bench.write_csv(records, sys.stdout)
        return 0

    parser.error("unknown command")
    return 2


if __name__ == "__main__":
    sys.exit(main())
