"""Cover traffic: plausible deniability from a write-only dummy mailbox.

Contacting the servers at all would mark someone as a source, so
cooperating deployments generate writes to a published dummy address whose
per-server keys are never exported: nobody, servers included, can ever read
what lands there.  Cover writes are byte-identical in shape to real ones,
so an observer cannot split real senders from noise.

Run:  python demos/05_cover_traffic.py
"""

import secrets

from splitbox.pair import LocalPair

with LocalPair(message_size=160) as pair:
    with pair.client() as cli:
        real_cred = cli.register(master_secret=secrets.token_bytes(32))
        dummy = cli.dummy_target()
        print(f"published dummy address: slot {dummy.p}, v = {dummy.v:032x}")

        sent0 = cli.bytes_sent()
        cli.send(real_cred.send_target(), b"an actual tip")
        real_bytes = cli.bytes_sent() - sent0

        sent0 = cli.bytes_sent()
        cli.cover_send()
        cover_bytes = cli.bytes_sent() - sent0
        print(f"real send: {real_bytes} bytes, cover send: {cover_bytes} bytes, "
              f"identical: {real_bytes == cover_bytes}")

        print("\nten more cover writes...")
        for _ in range(10):
            assert cli.cover_send()

        result = cli.check(real_cred)
        print(f"real mailbox unaffected: {result.status!r}: {result.message!r}")

        try:
            from splitbox.client import MailboxCredential
            cli.check(MailboxCredential(dummy.p, dummy.v, bytes(16), bytes(16)))
        except Exception as exc:
            print(f"reading the dummy mailbox: {type(exc).__name__} (write-only)")
