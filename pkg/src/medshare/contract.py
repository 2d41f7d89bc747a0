"""Access-control contract: user registry, policy bindings and gas accounting.

The contract is a plain state machine. Gas is not computed from execution;
each function has a fixed charge from the schedule, converted to ether and
USD with exact decimal arithmetic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, Decimal
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

from medshare.ledger import PatientAddress

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ContractError(Exception):
    pass


class Unauthorized(ContractError):
    pass


class DuplicateUser(ContractError):
    pass


class UnknownUser(ContractError):
    pass


class Role(str, enum.Enum):
    PATIENT = "patient"
    DOCTOR = "doctor"
    CAREGIVER = "caregiver"
    ADMIN = "admin"
    EHRS_MANAGER = "ehrs_manager"


def decimal_str(d: Decimal) -> str:
    """Plain decimal rendering without trailing zeros or exponent."""
    return format(d.normalize(), "f")


@dataclass(frozen=True)
class FunctionCost:
    name: str
    gas: int
    ether_places: int
    label: str


@dataclass(frozen=True)
class GasReceipt:
    function: str
    gas_used: int
    ether: Decimal
    usd: Decimal
    ether_exact: Decimal

    def row(self, label: str | None = None) -> tuple[str, str, str, str]:
        return (label or self.function, str(self.gas_used), decimal_str(self.ether), decimal_str(self.usd))


@dataclass(frozen=True)
class GasSchedule:
    functions: dict[str, FunctionCost]
    gas_price_ether: Decimal
    ether_usd: Decimal

    @classmethod
    def from_mapping(cls, data: dict) -> GasSchedule:
        fns = {}
        for name, spec in data["functions"].items():
            gas = spec["gas"]
            if not isinstance(gas, int) or gas < 0:
                raise ValueError(f"{name}: gas must be a non-negative integer")
            fns[name] = FunctionCost(name, gas, int(spec["ether_places"]), spec.get("label", name))
        return cls(
            fns,
            Decimal(str(data["gas_price_ether"])),
            Decimal(str(data["ether_usd"])),
        )

    @classmethod
    def load(cls, path: str | Path | None = None) -> GasSchedule:
        if path is None:
            text = resources.files("medshare").joinpath("data", "gas_schedule.toml").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_mapping(tomllib.loads(text))

    def _price(self, function: str, gas: int, places: int) -> GasReceipt:
        exact = gas * self.gas_price_ether
        shown = exact.quantize(Decimal(1).scaleb(-places), rounding=ROUND_DOWN)
        return GasReceipt(function, gas, shown, shown * self.ether_usd, exact)

    def receipt(self, function: str) -> GasReceipt:
        try:
            fc = self.functions[function]
        except KeyError:
            raise ContractError(f"no gas entry for {function!r}") from None
        return self._price(function, fc.gas, fc.ether_places)

    def total(self, receipts: Iterable[GasReceipt]) -> GasReceipt:
        """Session total: sums of the per-row gas, shown ether and USD."""
        receipts = list(receipts)
        gas = sum(r.gas_used for r in receipts)
        ether = sum((r.ether for r in receipts), Decimal(0))
        usd = sum((r.usd for r in receipts), Decimal(0))
        return GasReceipt("Total", gas, ether, usd, gas * self.gas_price_ether)

    def label(self, function: str) -> str:
        fc = self.functions.get(function)
        return fc.label if fc else function


@dataclass
class PolicyEntry:
    public_key: str
    role: Role
    bound_patients: set[PatientAddress] = field(default_factory=set)
    bound_devices: set[str] = field(default_factory=set)


class Verdict(str, enum.Enum):
    GRANT = "grant"
    DENY = "deny"


@dataclass(frozen=True)
class AccessDecision:
    verdict: Verdict
    reason: str
    receipt: GasReceipt | None = None

    @property
    def granted(self) -> bool:
        return self.verdict is Verdict.GRANT


@dataclass(frozen=True)
class PenaltyNotice:
    public_key: str
    action: str
    message: str


class HealthContract:
    """The sharing contract deployed by the admin.

    ``on_delete`` callbacks receive the removed :class:`PolicyEntry`, so
    storage can drop the user's records.
    """

    def __init__(self, admin_pk: str, manager_pk: str, schedule: GasSchedule | None = None):
        self.admin_pk = admin_pk
        self.manager_pk = manager_pk
        self.schedule = schedule or GasSchedule.load()
        self._policies: dict[str, PolicyEntry] = {}
        self.receipts: list[GasReceipt] = []
        self.warnings: list[PenaltyNotice] = []
        self.on_delete: list[Callable[[PolicyEntry], None]] = []

    def _charge(self, function: str) -> GasReceipt:
        r = self.schedule.receipt(function)
        self.receipts.append(r)
        return r

    def _require(self, caller: str, *allowed: str) -> None:
        if caller not in allowed:
            raise Unauthorized("caller lacks the role for this function")

    def entry(self, pk: str) -> PolicyEntry | None:
        return self._policies.get(pk)

    def users(self) -> list[PolicyEntry]:
        return list(self._policies.values())

    def add_user(
        self,
        caller: str,
        pk: str,
        role: Role | str,
        patients: Iterable[PatientAddress] = (),
        devices: Iterable[str] = (),
    ) -> GasReceipt:
        self._require(caller, self.admin_pk)
        if pk in self._policies:
            raise DuplicateUser("public key already registered")
        role = Role(role)
        self._policies[pk] = PolicyEntry(pk, role, set(patients), set(devices))
        return self._charge("AddUser")

    def authorize(self, caller: str, pk: str, patient: PatientAddress, devices: Iterable[str] = ()) -> None:
        """Record that ``patient`` consented to access by ``pk``.

        Bookkeeping on the registry only; no gas entry exists for it.
        """
        self._require(caller, self.admin_pk)
        entry = self._policies.get(pk)
        if entry is None:
            raise UnknownUser("public key not registered")
        entry.bound_patients.add(patient)
        entry.bound_devices.update(devices)

    def delete_user(self, caller: str, pk: str) -> GasReceipt:
        self._require(caller, self.admin_pk)
        entry = self._policies.pop(pk, None)
        if entry is None:
            raise UnknownUser("public key not registered")
        for cb in self.on_delete:
            cb(entry)
        return self._charge("DeleteUser")

    def policy_list(self, caller: str, pk: str) -> tuple[bool, GasReceipt]:
        self._require(caller, self.admin_pk, self.manager_pk)
        return pk in self._policies, self._charge("PolicyList")

    def check_access(self, pk: str, addr: PatientAddress, device_id: str) -> tuple[bool, str]:
        """The verification branch without side effects."""
        entry = self._policies.get(pk)
        if entry is None:
            return False, "requester not in policy list"
        if addr not in entry.bound_patients:
            return False, "no policy binds requester to this patient"
        if device_id not in entry.bound_devices:
            return False, "device not bound to requester"
        return True, "authorized"

    def retrieve_ehrs(self, caller: str, pk: str, addr: PatientAddress, device_id: str) -> AccessDecision:
        """Grant or deny a record request. Only the grant path is charged."""
        self._require(caller, self.manager_pk)
        ok, reason = self.check_access(pk, addr, device_id)
        if not ok:
            return AccessDecision(Verdict.DENY, reason)
        return AccessDecision(Verdict.GRANT, reason, self._charge("RetrieveEHRs"))

    def penalty(self, caller: str, pk: str, action: str) -> GasReceipt:
        self._require(caller, self.admin_pk)
        self.warnings.append(PenaltyNotice(pk, action, f"WARNING: unauthorized {action} rejected"))
        return self._charge("Penalty")

    def session_total(self) -> GasReceipt:
        return self.schedule.total(self.receipts)
