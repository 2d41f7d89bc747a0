"""A signed, hash-linked log of every access decision."""
# %%
from __future__ import annotations

from medshare.contract import Role
from medshare.ledger import PatientAddress, verify_export
from medshare.protocol import AccessRequest, HealthNetwork
from medshare.storage import HealthResult

net = HealthNetwork(seed=11)
addr = PatientAddress("A01", "P001")
net.upload_result(addr, HealthResult(5.5, b"ecg"))
doctor = net.identity("dr-carol")
net.register_user(net.admin, doctor.public_key, Role.DOCTOR, [addr], ["tablet"])
for i in range(4):
    who = doctor if i % 2 == 0 else net.identity(f"stranger-{i}")
    net.process_request(AccessRequest.make(who, addr, "tablet", net.ledger.tick, i))

for block in net.ledger.blocks:
    methods = [t.method for t in block.transactions]
    print(block.height, block.hash[:12], block.sealer[:8], methods)

# %% the patient can see who asked for their record
for tx in net.patient_view(addr):
    print(tx.method, tx.payload.get("requester", "")[:12])

# %% edit one block in an export and verification points at it
export = net.ledger.to_ndjson()
print("clean export ok:", verify_export(export).ok)
lines = export.splitlines()
lines[3] = lines[3].replace('"tick":', '"tick":1', 1)
check = verify_export("\n".join(lines) + "\n")
print("edited export:", check.ok, "height", check.height, "-", check.reason)
