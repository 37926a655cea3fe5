"""Two-server metadata-hiding mailboxes.

Clients write into secret-shared, per-mailbox-encrypted slots through
distributed point function key shares over a 2^128 virtual address space;
the servers blindly audit every write with a constant-size secret-shared
proof, and owners read asynchronously.
"""

from .client import Client, MailboxCredential, SendTarget
from .field import PRODUCTION_MODULUS, Field
from .pair import LocalPair
from .server import Server, ServerConfig

__all__ = [
    "Client",
    "Field",
    "LocalPair",
    "MailboxCredential",
    "PRODUCTION_MODULUS",
    "SendTarget",
    "Server",
    "ServerConfig",
]
