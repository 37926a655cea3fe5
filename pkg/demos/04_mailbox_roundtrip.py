"""A complete live exchange: register, privately send, check.

Starts both servers in-process on loopback ports, registers a mailbox for a
receiving journalist, and lets a source drop a message into it.  The
servers never learn which mailbox the write touched; the owner's read is
authenticated by the derived MAC key.

Run:  python demos/04_mailbox_roundtrip.py
"""

import secrets

from splitbox.pair import LocalPair

with LocalPair(message_size=160) as pair:
    print(f"server A on :{pair.a.port} (leader), server B on :{pair.b.port}")

    # --- the journalist registers a mailbox -----------------------------
    master_secret = secrets.token_bytes(32)
    with pair.client() as journalist:
        cred = journalist.register(master_secret=master_secret)
        print(f"mailbox registered: physical index {cred.p}, "
              f"virtual address {cred.v:032x}")
        print(f"fresh mailbox reads: {journalist.check(cred).status}")

        # --- the source, knowing (p, v, master secret), sends ------------
        with pair.client() as source:
            target = cred.send_target()
            accepted = source.send(target, b"meet tuesday. bring the files.")
            print(f"\nsource's write audited and {'accepted' if accepted else 'rejected'}")
            print(f"source uploaded {source.bytes_sent()} bytes total "
                  f"(constant, whatever the mailbox count)")

        # --- the journalist checks --------------------------------------
        result = journalist.check(cred)
        print(f"\njournalist reads: {result.status!r}: {result.message!r}")
        print(f"second read: {journalist.check(cred).status} (cleared on read)")

    print(f"\nservers consistent: {pair.converged()}")
