"""In-process server pair on loopback, for tests, demos and benchmarks."""

from __future__ import annotations

import random
import secrets

from .client import Client, MailboxCredential
from .field import PRODUCTION_MODULUS
from .server import Server, ServerConfig
from .vault import MailboxRecord, decrypt_blocks


class LocalPair:
    """Two live servers (A leads) listening on ephemeral loopback ports.

    Passing `seed` makes the shared secret and all server-side address
    sampling deterministic, which interleaving and replay tests rely on.
    """

    def __init__(
        self,
        message_size: int = 160,
        modulus: int = PRODUCTION_MODULUS,
        seed: int | None = None,
        audit_timeout: float = 10.0,
        reg_timeout: float = 10.0,
    ):
        self.message_size = message_size
        self.modulus = modulus
        if seed is None:
            secret = secrets.token_bytes(32)
        else:
            secret = random.Random(seed).randbytes(32)
        self.a = Server(
            ServerConfig(
                role="A",
                listen=("127.0.0.1", 0),
                peer=None,
                shared_secret=secret,
                message_size=message_size,
                modulus=modulus,
                audit_timeout=audit_timeout,
                reg_timeout=reg_timeout,
                seed=None if seed is None else seed + 1,
            )
        )
        self.a.start()
        self.b = Server(
            ServerConfig(
                role="B",
                listen=("127.0.0.1", 0),
                peer=("127.0.0.1", self.a.port),
                shared_secret=secret,
                message_size=message_size,
                modulus=modulus,
                audit_timeout=audit_timeout,
                reg_timeout=reg_timeout,
                seed=None if seed is None else seed + 2,
            )
        )
        self.b.start()
        self.a.wait_ready()
        self.b.wait_ready()

    @property
    def addr_a(self) -> tuple[str, int]:
        return ("127.0.0.1", self.a.port)

    @property
    def addr_b(self) -> tuple[str, int]:
        return ("127.0.0.1", self.b.port)

    def client(self, **kwargs) -> Client:
        kwargs.setdefault("message_size", self.message_size)
        kwargs.setdefault("modulus", self.modulus)
        return Client(self.addr_a, self.addr_b, **kwargs)

    def preload(self, count: int, rng: random.Random | None = None) -> list[MailboxCredential]:
        """Bulk-register mailboxes directly into both vaults.

        Benchmark setup only: skips the wire so large active sets are cheap
        to build.  Must run while no client traffic is in flight.
        """
        rng = rng or random.Random(0xB0B)
        creds = []
        for _ in range(count):
            v = rng.getrandbits(128)
            while v in self.a.vault.page_table:
                v = rng.getrandbits(128)
            key_a, key_b = rng.randbytes(16), rng.randbytes(16)
            p_a, _ = self.a.vault.register(key_a, v_opt=v)
            p_b, _ = self.b.vault.register(key_b, v_opt=v)
            assert p_a == p_b
            creds.append(MailboxCredential(p_a, v, key_a, key_b))
        # Keep the leader's physical-index assignment in step.
        self.a._reg_count = len(self.a.vault)
        return creds

    def converged(self) -> bool:
        return self.a.state_digest() == self.b.state_digest()

    def mailbox_plaintext(self, cred: MailboxCredential) -> list[int]:
        """Decrypt and combine both shares in place (no clearing); test aid."""
        rec_a: MailboxRecord = self.a.vault.records[cred.p]
        rec_b: MailboxRecord = self.b.vault.records[cred.p]
        pt_a = decrypt_blocks(self.a.field, rec_a.ct, cred.key_a, rec_a.nonce)
        pt_b = decrypt_blocks(self.b.field, rec_b.ct, cred.key_b, rec_b.nonce)
        return [self.a.field.add(x, y) for x, y in zip(pt_a, pt_b)]

    def stop(self) -> None:
        self.a.stop()
        self.b.stop()

    def __enter__(self) -> "LocalPair":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()
