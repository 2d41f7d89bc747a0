"""Gas, ether and dollar cost of each contract call."""
# %%
from __future__ import annotations

from medshare.contract import GasSchedule
from medshare.scenario import gas_session

schedule = GasSchedule.load()
receipts, total = gas_session(schedule)
print(f"{'function':<14}{'gas':>9}{'ether':>10}{'usd':>12}")
for r in [*receipts, total]:
    label, gas, ether, usd = r.row(schedule.label(r.function) if r.function != "Total" else None)
    print(f"{label:<14}{gas:>9}{ether:>10}{usd:>12}")

# %% a denied request costs only the penalty call; a grant costs the retrieval
deny = schedule.receipt("Penalty")
grant = schedule.receipt("RetrieveEHRs")
print("deny", deny.usd, "USD   grant", grant.usd, "USD")
