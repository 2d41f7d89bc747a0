"""Hash-chained transaction ledger with round-robin (proof-of-authority) sealing.

Transactions are signed with Ed25519 over a canonical JSON encoding. Blocks
commit to their height, the previous block hash, the ids of their
transactions, the sealing tick and the sealer's public key. Export format is
one canonical JSON object per line (NDJSON), genesis first.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Any, Callable, Iterable, Iterator, Mapping

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, NoEncryption, PrivateFormat, PublicFormat

GENESIS_PREV_HASH = "0" * 64
SIGNATURE_SCHEME = "ed25519"
CONTRACT_METHODS = ("AddUser", "DeleteUser", "PolicyList", "RetrieveEHRs", "Penalty")
KNOWN_METHODS = CONTRACT_METHODS + ("AccessRequest",)
MAX_PAYLOAD_BYTES = 1024


class LedgerError(Exception):
    pass


class TransactionRejected(LedgerError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class BadSignature(TransactionRejected):
    pass


class DuplicateTransaction(TransactionRejected):
    pass


class MalformedTransaction(LedgerError, ValueError):
    pass


class UnknownMethod(MalformedTransaction):
    pass


class ChainFormatError(LedgerError):
    def __init__(self, height: int, reason: str):
        super().__init__(f"line for height {height}: {reason}")
        self.height = height
        self.reason = reason


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False).encode()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _is_lower_hex(s: Any, n: int | None = None) -> bool:
    return isinstance(s, str) and (n is None or len(s) == n) and all(c in "0123456789abcdef" for c in s)


@dataclass(frozen=True, order=True)
class PatientAddress:
    area_id: str
    patient_id: str

    def __post_init__(self) -> None:
        if not self.area_id or not self.patient_id:
            raise ValueError("area_id and patient_id must be non-empty")
        if ":" in self.area_id or ":" in self.patient_id:
            raise ValueError("ids may not contain ':'")

    def __str__(self) -> str:
        return f"{self.area_id}:{self.patient_id}"

    @classmethod
    def parse(cls, text: str) -> PatientAddress:
        area, sep, patient = text.partition(":")
        if not sep:
            raise ValueError(f"expected 'AreaID:PatientID', got {text!r}")
        return cls(area, patient)


class Identity:
    """An Ed25519 keypair with a human-readable name."""

    def __init__(self, name: str, private_key: Ed25519PrivateKey):
        self.name = name
        self._sk = private_key
        self.public_key = self._sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw).hex()

    @classmethod
    def derive(cls, name: str, seed: int | str) -> Identity:
        secret = hashlib.sha256(f"medshare-identity\x00{seed}\x00{name}".encode()).digest()
        return cls(name, Ed25519PrivateKey.from_private_bytes(secret))

    @classmethod
    def from_secret_hex(cls, name: str, secret_hex: str) -> Identity:
        return cls(name, Ed25519PrivateKey.from_private_bytes(bytes.fromhex(secret_hex.strip())))

    def secret_hex(self) -> str:
        return self._sk.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption()).hex()

    def sign(self, data: bytes) -> str:
        return self._sk.sign(data).hex()

    def __repr__(self) -> str:
        return f"Identity({self.name!r}, {self.public_key[:12]}...)"


@lru_cache(maxsize=1 << 16)
def _verify_signature(public_key_hex: str, body: bytes, signature_hex: str) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(bytes.fromhex(public_key_hex)).verify(bytes.fromhex(signature_hex), body)
    except (InvalidSignature, ValueError):
        return False
    return True


def _check_payload(payload: Mapping[str, Any]) -> None:
    def ok(v: Any) -> bool:
        if isinstance(v, (str, int, bool)) or v is None:
            return True
        if isinstance(v, list):
            return all(ok(i) for i in v)
        return False

    if not isinstance(payload, Mapping) or not all(isinstance(k, str) and ok(v) for k, v in payload.items()):
        raise MalformedTransaction("payload must map strings to JSON scalars or lists")
    if len(canonical_json(dict(payload))) > MAX_PAYLOAD_BYTES:
        raise MalformedTransaction(f"payload exceeds {MAX_PAYLOAD_BYTES} bytes; record bytes belong in storage")


@dataclass(frozen=True)
class Transaction:
    sender: str
    method: str
    payload: dict[str, Any]
    tick: int
    nonce: int
    signature: str = field(default="", compare=False)

    def body(self) -> bytes:
        return canonical_json(
            {"method": self.method, "nonce": self.nonce, "payload": self.payload, "sender": self.sender, "tick": self.tick}
        )

    @cached_property
    def tx_id(self) -> str:
        return sha256_hex(self.body())

    @classmethod
    def create(
        cls, signer: Identity, method: str, payload: Mapping[str, Any], tick: int = 0, nonce: int = 0
    ) -> Transaction:
        if method not in KNOWN_METHODS:
            raise UnknownMethod(f"unknown method {method!r}")
        _check_payload(payload)
        tx = cls(signer.public_key, method, dict(payload), int(tick), int(nonce))
        return cls(tx.sender, tx.method, tx.payload, tx.tick, tx.nonce, signer.sign(tx.body()))

    def verify(self) -> bool:
        if not (_is_lower_hex(self.sender, 64) and _is_lower_hex(self.signature, 128)):
            return False
        return _verify_signature(self.sender, self.body(), self.signature)

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "nonce": self.nonce,
            "payload": self.payload,
            "sender": self.sender,
            "signature": self.signature,
            "tick": self.tick,
            "tx_id": self.tx_id,
        }

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Transaction:
        expected = {"method", "nonce", "payload", "sender", "signature", "tick", "tx_id"}
        if not isinstance(d, Mapping) or set(d) != expected:
            raise MalformedTransaction("transaction fields do not match the schema")
        for name in ("nonce", "tick"):
            if type(d[name]) is not int:
                raise MalformedTransaction(f"{name} must be an integer")
        if not (isinstance(d["method"], str) and isinstance(d["sender"], str) and isinstance(d["signature"], str)):
            raise MalformedTransaction("method, sender and signature must be strings")
        if not isinstance(d["payload"], dict):
            raise MalformedTransaction("payload must be an object")
        tx = cls(d["sender"], d["method"], d["payload"], d["tick"], d["nonce"], d["signature"])
        if tx.tx_id != d["tx_id"]:
            raise MalformedTransaction("tx_id does not match contents")
        return tx

    @classmethod
    def from_bytes(cls, data: bytes) -> Transaction:
        try:
            d = json.loads(data)
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedTransaction(f"not a transaction encoding: {exc}") from exc
        tx = cls.from_dict(d)
        if tx.to_bytes() != bytes(data):
            raise MalformedTransaction("non-canonical transaction encoding")
        return tx


def get_sender_public_key(tx: Transaction) -> str:
    """The sender key, returned only if the signature verifies."""
    if not isinstance(tx, Transaction) or not tx.sender:
        raise MalformedTransaction("not a transaction")
    if not tx.verify():
        raise BadSignature("signature does not verify against sender key")
    return tx.sender


@dataclass(frozen=True)
class DecodedCall:
    method: str
    args: dict[str, Any]
    address: PatientAddress | None = None


def decode_method(tx: Transaction | bytes) -> DecodedCall:
    """Structured view of a transaction's method and arguments.

    A ``patient`` argument in ``AreaID:PatientID`` form is also returned as
    a :class:`PatientAddress`.
    """
    if isinstance(tx, (bytes, bytearray)):
        tx = Transaction.from_bytes(bytes(tx))
    if tx.method not in KNOWN_METHODS:
        raise UnknownMethod(f"unknown method {tx.method!r}")
    args = dict(tx.payload)
    address = PatientAddress.parse(args["patient"]) if "patient" in args else None
    return DecodedCall(tx.method, args, address)


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: str
    transactions: tuple[Transaction, ...]
    sealer: str
    tick: int
    hash: str

    @staticmethod
    def compute_hash(height: int, prev_hash: str, tx_ids: Iterable[str], sealer: str, tick: int) -> str:
        return sha256_hex(canonical_json([height, prev_hash, list(tx_ids), sealer, tick]))

    def recompute_hash(self) -> str:
        return self.compute_hash(self.height, self.prev_hash, (t.tx_id for t in self.transactions), self.sealer, self.tick)

    def to_dict(self) -> dict[str, Any]:
        # field order is fixed by sort_keys in canonical_json
        return {
            "hash": self.hash,
            "height": self.height,
            "prev_hash": self.prev_hash,
            "sealer": self.sealer,
            "tick": self.tick,
            "transactions": [t.to_dict() for t in self.transactions],
        }

    def to_json_line(self) -> str:
        return canonical_json(self.to_dict()).decode()

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Block:
        if not isinstance(d, Mapping) or set(d) != {"hash", "height", "prev_hash", "sealer", "tick", "transactions"}:
            raise ValueError("block fields do not match the schema")
        if type(d["height"]) is not int or type(d["tick"]) is not int:
            raise ValueError("height and tick must be integers")
        if not isinstance(d["transactions"], list) or not isinstance(d["sealer"], str):
            raise ValueError("bad transactions or sealer")
        return cls(
            d["height"], d["prev_hash"], tuple(Transaction.from_dict(t) for t in d["transactions"]), d["sealer"], d["tick"], d["hash"]
        )


@dataclass(frozen=True)
class ChainCheck:
    ok: bool
    height: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def verify_blocks(blocks: Iterable[Block]) -> ChainCheck:
    """Recompute every link; report the first height that does not check out."""
    prev = None
    for i, b in enumerate(blocks):
        if b.height != i:
            return ChainCheck(False, i, "height out of sequence")
        expected_prev = GENESIS_PREV_HASH if prev is None else prev.hash
        if b.prev_hash != expected_prev:
            return ChainCheck(False, i, "previous-hash link broken")
        for tx in b.transactions:
            if not tx.verify():
                return ChainCheck(False, i, f"bad signature on {tx.tx_id[:12]}")
        if not _is_lower_hex(b.hash, 64) or b.recompute_hash() != b.hash:
            return ChainCheck(False, i, "block hash mismatch")
        prev = b
    if prev is None:
        return ChainCheck(False, 0, "empty chain")
    return ChainCheck(True)


class Participant:
    """A node's local copy of the chain, fed by broadcasts."""

    def __init__(self, name: str):
        self.name = name
        self.blocks: list[Block] = []

    def on_block(self, block: Block) -> None:
        self.blocks.append(block)

    @property
    def head(self) -> Block | None:
        return self.blocks[-1] if self.blocks else None


class Ledger:
    """Append-only chain with a mempool and round-robin sealers."""

    def __init__(self, sealers: Iterable[Identity]):
        self.sealers = list(sealers)
        if not self.sealers:
            raise ValueError("need at least one sealer")
        self._blocks: list[Block] = [self._genesis()]
        self._mempool: list[Transaction] = []
        self._seen: set[str] = set()
        self._listeners: list[Callable[[Block], None]] = []
        self.tick = 0

    @staticmethod
    def _genesis() -> Block:
        h = Block.compute_hash(0, GENESIS_PREV_HASH, (), "genesis", 0)
        return Block(0, GENESIS_PREV_HASH, (), "genesis", 0, h)

    @property
    def blocks(self) -> tuple[Block, ...]:
        return tuple(self._blocks)

    @property
    def head(self) -> Block:
        return self._blocks[-1]

    @property
    def pending(self) -> tuple[Transaction, ...]:
        return tuple(self._mempool)

    def register(self, listener: Participant | Callable[[Block], None]) -> None:
        cb = listener.on_block if isinstance(listener, Participant) else listener
        self._listeners.append(cb)
        if isinstance(listener, Participant):
            for b in self._blocks[len(listener.blocks) :]:
                listener.on_block(b)

    def submit(self, tx: Transaction) -> str:
        if not tx.verify():
            raise BadSignature("signature does not verify against sender key")
        if tx.method not in KNOWN_METHODS:
            raise UnknownMethod(f"unknown method {tx.method!r}")
        tx_id = tx.tx_id
        if tx_id in self._seen:
            raise DuplicateTransaction(f"transaction {tx_id[:12]} already submitted")
        self._seen.add(tx_id)
        self._mempool.append(tx)
        return tx_id

    def seal_block(self) -> Block:
        """Seal pending transactions in submission order and broadcast the block."""
        self.tick += 1
        height = len(self._blocks)
        sealer = self.sealers[(height - 1) % len(self.sealers)]
        txs = tuple(self._mempool)
        prev = self.head.hash
        h = Block.compute_hash(height, prev, (t.tx_id for t in txs), sealer.public_key, self.tick)
        block = Block(height, prev, txs, sealer.public_key, self.tick, h)
        self._blocks.append(block)
        self._mempool.clear()
        for cb in self._listeners:
            cb(block)
        return block

    def verify_chain(self) -> ChainCheck:
        return verify_blocks(self._blocks)

    def transactions(self) -> Iterator[tuple[int, Transaction]]:
        for b in self._blocks:
            for tx in b.transactions:
                yield b.height, tx

    def transactions_for(self, address: PatientAddress) -> list[Transaction]:
        key = str(address)
        return [tx for _, tx in self.transactions() if tx.payload.get("patient") == key]

    def find(self, tx_id: str) -> tuple[int, Transaction] | None:
        for height, tx in self.transactions():
            if tx.tx_id == tx_id:
                return height, tx
        return None

    def to_ndjson(self) -> str:
        return "".join(b.to_json_line() + "\n" for b in self._blocks)


def parse_ndjson(text: str | bytes) -> list[Block]:
    """Parse an exported chain, insisting every line is canonically encoded."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            height = text[: exc.start].count(b"\n")
            raise ChainFormatError(height, "invalid utf-8") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    blocks = []
    for i, line in enumerate(lines):
        try:
            blocks.append(_parse_line(line))
        except (ValueError, TypeError, KeyError, MalformedTransaction) as exc:
            raise ChainFormatError(i, str(exc)) from exc
    return blocks


@lru_cache(maxsize=1 << 12)
def _parse_line(line: str) -> Block:
    # keyed on the exact line text, so any changed byte is parsed afresh
    block = Block.from_dict(json.loads(line))
    if block.to_json_line() != line:
        raise ValueError("non-canonical encoding")
    return block


def verify_export(text: str | bytes) -> ChainCheck:
    """Check an exported chain; format errors report the offending line's height."""
    try:
        blocks = parse_ndjson(text)
    except ChainFormatError as exc:
        return ChainCheck(False, exc.height, exc.reason)
    return verify_blocks(blocks)
