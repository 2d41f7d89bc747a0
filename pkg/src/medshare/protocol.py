"""End-to-end EHR access: request intake, verification, retrieval, ledger append.

:class:`HealthNetwork` wires one admin, one EHRs manager, the sealing
miners, the contract and the record store together. A record request goes:

1. the manager takes the signed request and recovers the sender key,
2. the contract checks the key, patient binding and device binding,
3. on grant the manager fetches the record from storage, on deny the admin
   issues a penalty (a warning message),
4. exactly one outcome transaction is appended and the block broadcast.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from medshare.contract import GasSchedule, HealthContract, PolicyEntry, Role
from medshare.crypto import KeyMaterial, NonceSource
from medshare.ledger import (
    Identity,
    Ledger,
    Participant,
    PatientAddress,
    Transaction,
    decode_method,
    get_sender_public_key,
)
from medshare.storage import ContentHash, ContentStore, EHRRecord, HealthResult, open_record, seal_record

WARNING_MESSAGE = "Warning: unauthorized access to EHRs detected; request discarded"


class AccessVerdict(str, enum.Enum):
    GRANTED = "granted"
    PENALIZED = "penalized"


@dataclass(frozen=True)
class AccessRequest:
    tx: Transaction

    @classmethod
    def make(cls, requester: Identity, address: PatientAddress, device_id: str, tick: int = 0, nonce: int = 0):
        if not device_id:
            raise ValueError("device_id is required")
        payload = {"patient": str(address), "device": device_id}
        return cls(Transaction.create(requester, "AccessRequest", payload, tick, nonce))

    @property
    def requester(self) -> str:
        return self.tx.sender

    @property
    def address(self) -> PatientAddress:
        return PatientAddress.parse(self.tx.payload["patient"])

    @property
    def device_id(self) -> str:
        return self.tx.payload["device"]

    @property
    def tick(self) -> int:
        return self.tx.tick


@dataclass(frozen=True)
class AccessOutcome:
    verdict: AccessVerdict
    tx_id: str
    message: str
    record_hash: ContentHash | None = None
    record: EHRRecord | None = field(default=None, compare=False, repr=False)

    @property
    def granted(self) -> bool:
        return self.verdict is AccessVerdict.GRANTED

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "tx_id": self.tx_id,
            "message": self.message,
            "record_hash": str(self.record_hash) if self.record_hash else None,
        }


class HealthNetwork:
    def __init__(
        self,
        seed: int = 0,
        miners: Sequence[str] = ("miner-1", "miner-2"),
        storage_nodes: Iterable[str] | None = None,
        schedule: GasSchedule | None = None,
    ):
        self.seed = seed
        self.admin = Identity.derive("admin", seed)
        self.manager = Identity.derive("ehrs-manager", seed)
        self.miners = [Identity.derive(m, seed) for m in miners]
        self.ledger = Ledger(self.miners)
        self.contract = HealthContract(self.admin.public_key, self.manager.public_key, schedule)
        self.store = ContentStore(storage_nodes)
        self.storage_key = KeyMaterial.derive("storage", str(seed))
        self.nonces = NonceSource(seed)
        self.participants: dict[str, Participant] = {}
        self._tx_nonce = 0
        self.contract.on_delete.append(self._drop_records)
        # tombstoned record bytes go when the next block seals
        self.ledger.register(lambda block: self.store.collect_garbage())
        for name in ("admin", "ehrs-manager", *miners):
            self.join(name)

    def _drop_records(self, entry: PolicyEntry) -> None:
        if entry.role is Role.PATIENT:
            for addr in entry.bound_patients:
                self.store.delete(addr)

    def _next_nonce(self) -> int:
        self._tx_nonce += 1
        return self._tx_nonce

    def join(self, name: str) -> Participant:
        p = self.participants.get(name)
        if p is None:
            p = self.participants[name] = Participant(name)
            self.ledger.register(p)
        return p

    def identity(self, name: str) -> Identity:
        return Identity.derive(name, self.seed)

    def _append(self, signer: Identity, method: str, payload: dict, seal: bool) -> str:
        tx = Transaction.create(signer, method, payload, self.ledger.tick, self._next_nonce())
        tx_id = self.ledger.submit(tx)
        if seal:
            self.ledger.seal_block()
        return tx_id

    def register_user(
        self,
        admin: Identity,
        pk: str,
        role: Role | str,
        patients: Iterable[PatientAddress] = (),
        devices: Iterable[str] = (),
        seal: bool = True,
    ) -> str:
        """Add a user with policy bindings; returns the registration tx id."""
        patients, devices = sorted(set(patients)), sorted(set(devices))
        self.contract.add_user(admin.public_key, pk, role, patients, devices)
        payload = {
            "user": pk,
            "role": Role(role).value,
            "patients": [str(a) for a in patients],
            "devices": devices,
        }
        return self._append(admin, "AddUser", payload, seal)

    def delete_user(self, admin: Identity, pk: str, seal: bool = True) -> str:
        self.contract.delete_user(admin.public_key, pk)
        return self._append(admin, "DeleteUser", {"user": pk}, seal)

    def upload_result(self, address: PatientAddress, result: HealthResult) -> ContentHash:
        """Encrypt and store an analysed result; the DHT now points at it."""
        record = seal_record(address, result, self.storage_key, self.nonces, self.ledger.tick)
        return self.store.store(record)

    def read_result(self, record: EHRRecord) -> HealthResult:
        return open_record(record, self.storage_key)

    def process_request(self, req: AccessRequest, seal: bool = True) -> AccessOutcome:
        pk = get_sender_public_key(req.tx)
        call = decode_method(req.tx)
        if call.method != "AccessRequest" or call.address is None:
            raise ValueError("not a record access request")
        addr, device = call.address, str(call.args.get("device", ""))

        decision = self.contract.retrieve_ehrs(self.manager.public_key, pk, addr, device)
        base = {"requester": pk, "patient": str(addr), "device": device, "request": req.tx.tx_id}
        if decision.granted:
            record = self.store.fetch(addr)
            h = ContentHash.of(record.to_bytes())
            tx_id = self._append(self.manager, "RetrieveEHRs", {**base, "record": str(h)}, seal)
            return AccessOutcome(AccessVerdict.GRANTED, tx_id, "access granted", h, record)

        self.contract.penalty(self.admin.public_key, pk, "RetrieveEHRs")
        payload = {**base, "action": "RetrieveEHRs", "reason": decision.reason, "message": WARNING_MESSAGE}
        tx_id = self._append(self.admin, "Penalty", payload, seal)
        return AccessOutcome(AccessVerdict.PENALIZED, tx_id, WARNING_MESSAGE)

    def process_batch(self, requests: Sequence[AccessRequest], shuffle_seed: int | None = None) -> list[AccessOutcome]:
        """Handle requests arriving in the same tick, then seal one block.

        Arrival order among concurrent requests is a seeded shuffle.
        Outcomes are returned in the order the requests were given.
        """
        order = list(range(len(requests)))
        random.Random(self.seed if shuffle_seed is None else shuffle_seed).shuffle(order)
        outcomes: dict[int, AccessOutcome] = {}
        for i in order:
            outcomes[i] = self.process_request(requests[i], seal=False)
        self.ledger.seal_block()
        return [outcomes[i] for i in range(len(requests))]

    def patient_view(self, address: PatientAddress) -> list[Transaction]:
        """Sealed transactions that touch this patient's records."""
        return self.ledger.transactions_for(address)
