"""Who gets a record and who gets a warning."""
# %%
from __future__ import annotations

import itertools

from medshare.contract import Role
from medshare.ledger import PatientAddress
from medshare.protocol import AccessRequest, HealthNetwork
from medshare.storage import HealthResult

target, elsewhere = PatientAddress("A01", "P001"), PatientAddress("A02", "P002")

print("registered patient device -> verdict (tx)")
for registered, patient_ok, device_ok in itertools.product((False, True), repeat=3):
    net = HealthNetwork(seed=2)
    net.upload_result(target, HealthResult(7.0))
    who = net.identity("requester")
    if registered:
        net.register_user(
            net.admin, who.public_key, Role.CAREGIVER,
            [target if patient_ok else elsewhere],
            ["phone" if device_ok else "laptop"],
        )
    out = net.process_request(AccessRequest.make(who, target, "phone", net.ledger.tick, 1))
    method = net.ledger.find(out.tx_id)[1].method
    print(f"{registered!s:>10} {patient_ok!s:>7} {device_ok!s:>6} -> {out.verdict.value} ({method})")

# %% the warning the intruder receives
net = HealthNetwork(seed=2)
net.upload_result(target, HealthResult(7.0))
print(net.process_request(AccessRequest.make(net.identity("mallory"), target, "x")).message)
