"""Content-addressed record storage over virtual nodes, indexed by a DHT.

Objects are keyed by the SHA-256 of their stored bytes and placed on the
node with the highest rendezvous score ``sha256(node_id || digest)``. The
DHT maps a patient address to the hash of that patient's latest record.
Every fetch re-hashes the bytes it reads, so any modification of a stored
object is reported instead of returned.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from medshare.calibration import read_commented_csv
from medshare.crypto import Ciphertext, KeyMaterial, NonceSource, decrypt, encrypt
from medshare.interp import piecewise_linear
from medshare.ledger import PatientAddress, canonical_json

DEFAULT_NODE_COUNT = 4
LATENCY_MODES = ("centralized", "distributed")


class StorageError(Exception):
    pass


class NotFound(StorageError, KeyError):
    pass


class IntegrityError(StorageError):
    """Stored bytes no longer hash to their address."""


class PlaintextRefused(StorageError):
    pass


@dataclass(frozen=True, order=True)
class ContentHash:
    digest: bytes

    @classmethod
    def of(cls, data: bytes) -> ContentHash:
        return cls(hashlib.sha256(data).digest())

    @classmethod
    def parse(cls, text: str) -> ContentHash:
        if len(text) != 64 or text != text.lower():
            raise ValueError(f"not a content hash: {text!r}")
        return cls(bytes.fromhex(text))

    def __str__(self) -> str:
        return self.digest.hex()


@dataclass(frozen=True)
class HealthResult:
    """Analysed output for one patient: a severity score plus opaque bytes."""

    severity_score: float
    data: bytes = b""

    def to_bytes(self) -> bytes:
        return canonical_json({"severity_score": self.severity_score}) + b"\n" + self.data

    @classmethod
    def from_bytes(cls, raw: bytes) -> HealthResult:
        head, _, data = raw.partition(b"\n")
        return cls(float(json.loads(head)["severity_score"]), data)


@dataclass(frozen=True)
class EHRRecord:
    address: PatientAddress
    body: bytes
    encrypted: bool
    created_tick: int = 0

    def to_bytes(self) -> bytes:
        header = canonical_json(
            {"address": str(self.address), "encrypted": self.encrypted, "tick": self.created_tick}
        )
        return header + b"\n" + self.body

    @classmethod
    def from_bytes(cls, raw: bytes) -> EHRRecord:
        head, sep, body = raw.partition(b"\n")
        try:
            meta = json.loads(head)
            return cls(PatientAddress.parse(meta["address"]), body, bool(meta["encrypted"]), int(meta["tick"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise StorageError(f"malformed record: {exc}") from exc


def seal_record(
    address: PatientAddress, result: HealthResult, key: KeyMaterial, nonces: NonceSource | None = None, tick: int = 0
) -> EHRRecord:
    """Encrypt a health result for storage; the address is bound as associated data."""
    ct = encrypt(result.to_bytes(), key, nonces, associated_data=str(address).encode())
    return EHRRecord(address, ct.to_bytes(), True, tick)


def open_record(record: EHRRecord, key: KeyMaterial) -> HealthResult:
    ct = Ciphertext.from_bytes(record.body)
    return HealthResult.from_bytes(decrypt(ct, key, associated_data=str(record.address).encode()))


@dataclass(frozen=True)
class DHTEntry:
    content_hash: ContentHash
    node_id: str


class StorageNode:
    def __init__(self, node_id: str):
        self.node_id = node_id
        self.objects: dict[ContentHash, bytes] = {}


def rendezvous_score(node_id: str, h: ContentHash) -> int:
    return int.from_bytes(hashlib.sha256(node_id.encode() + b"\x00" + h.digest).digest(), "big")


def place(h: ContentHash, node_ids: Iterable[str]) -> str:
    """Node with the highest rendezvous score; ties go to the smaller id."""
    return max(sorted(node_ids), key=lambda nid: rendezvous_score(nid, h))


class ContentStore:
    def __init__(self, node_ids: Iterable[str] | None = None):
        ids = list(node_ids) if node_ids is not None else [f"node-{i}" for i in range(DEFAULT_NODE_COUNT)]
        if not ids or len(set(ids)) != len(ids):
            raise ValueError("need at least one node and unique node ids")
        self.nodes = {nid: StorageNode(nid) for nid in ids}
        self.dht: dict[PatientAddress, DHTEntry] = {}
        self._tombstoned: set[PatientAddress] = set()

    def store(self, record: EHRRecord) -> ContentHash:
        if not record.encrypted:
            raise PlaintextRefused("records must be encrypted before storage")
        raw = record.to_bytes()
        h = ContentHash.of(raw)
        node_id = place(h, self.nodes)
        self.nodes[node_id].objects.setdefault(h, raw)
        self.dht[record.address] = DHTEntry(h, node_id)
        self._tombstoned.discard(record.address)
        return h

    def get(self, h: ContentHash) -> bytes:
        node_id = place(h, self.nodes)
        raw = self.nodes[node_id].objects.get(h)
        if raw is None:
            raise NotFound(str(h))
        if ContentHash.of(raw) != h:
            raise IntegrityError(f"object {h} on {node_id} was modified")
        return raw

    def fetch(self, addr: PatientAddress) -> EHRRecord:
        entry = self.dht.get(addr)
        if entry is None or addr in self._tombstoned:
            raise NotFound(str(addr))
        raw = self.get(entry.content_hash)
        record = EHRRecord.from_bytes(raw)
        if record.address != addr:
            raise IntegrityError(f"object {entry.content_hash} is not a record for {addr}")
        return record

    def delete(self, addr: PatientAddress) -> bool:
        """Tombstone the DHT entry; bytes go at the next :meth:`collect_garbage`."""
        if addr in self.dht and addr not in self._tombstoned:
            self._tombstoned.add(addr)
            return True
        return False

    def collect_garbage(self) -> int:
        for addr in self._tombstoned:
            del self.dht[addr]
        self._tombstoned.clear()
        live = {e.content_hash for e in self.dht.values()}
        removed = 0
        for node in self.nodes.values():
            for h in [h for h in node.objects if h not in live]:
                del node.objects[h]
                removed += 1
        return removed

    def distribution(self) -> dict[str, int]:
        return {nid: len(n.objects) for nid, n in self.nodes.items()}

    def object_count(self) -> int:
        return sum(len(n.objects) for n in self.nodes.values())

    def save(self, directory: str | Path) -> None:
        """Write ``objects/<hash>`` files plus a ``dht.json`` manifest."""
        directory = Path(directory)
        (directory / "objects").mkdir(parents=True, exist_ok=True)
        for node in self.nodes.values():
            for h, raw in sorted(node.objects.items()):
                (directory / "objects" / str(h)).write_bytes(raw)
        manifest = {
            "nodes": sorted(self.nodes),
            "entries": {
                str(addr): {"hash": str(e.content_hash), "node": e.node_id}
                for addr, e in sorted(self.dht.items())
                if addr not in self._tombstoned
            },
        }
        (directory / "dht.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> ContentStore:
        directory = Path(directory)
        manifest = json.loads((directory / "dht.json").read_text())
        store = cls(manifest["nodes"])
        objdir = directory / "objects"
        if objdir.is_dir():
            for path in sorted(objdir.iterdir()):
                h = ContentHash.parse(path.name)
                # bytes are taken as found on disk; fetch re-checks the hash
                store.nodes[place(h, store.nodes)].objects[h] = path.read_bytes()
        for addr, e in manifest["entries"].items():
            store.dht[PatientAddress.parse(addr)] = DHTEntry(ContentHash.parse(e["hash"]), e["node"])
        return store


@dataclass(frozen=True)
class LatencyTable:
    """Measured retrieval time against concurrent users, per storage mode."""

    points: dict[str, tuple[tuple[int, ...], tuple[float, ...]]]

    @classmethod
    def load(cls, path: str | Path | None = None) -> LatencyTable:
        grouped: dict[str, list[tuple[int, float]]] = {}
        for row in read_commented_csv(path, "table1_latency.csv"):
            grouped.setdefault(row["mode"].strip(), []).append((int(row["n_users"]), float(row["seconds"])))
        if set(grouped) != set(LATENCY_MODES):
            raise ValueError(f"latency table needs modes {LATENCY_MODES}, got {sorted(grouped)}")
        return cls({m: tuple(zip(*sorted(pts))) for m, pts in grouped.items()})

    @property
    def user_counts(self) -> tuple[int, ...]:
        return self.points["distributed"][0]

    def latency(self, n_concurrent_users: float, mode: str) -> float:
        if mode not in LATENCY_MODES:
            raise ValueError(f"mode must be one of {LATENCY_MODES}")
        if n_concurrent_users < 1:
            raise ValueError("need at least one user")
        xs, ys = self.points[mode]
        return piecewise_linear(xs, ys, n_concurrent_users)


_default_table: LatencyTable | None = None


def retrieval_latency(n_concurrent_users: float, mode: str, table: LatencyTable | None = None) -> float:
    """Seconds to retrieve a record with ``n`` users fetching at once.

    Exact at the measured user counts, linear between them, and extended
    with the slope of the nearest end segment outside that range.
    """
    global _default_table
    if table is None:
        if _default_table is None:
            _default_table = LatencyTable.load()
        table = _default_table
    return table.latency(n_concurrent_users, mode)
