"""Encrypted records in a content-addressed store spread over four nodes."""
# %%
from __future__ import annotations

import numpy as np

from medshare.crypto import KeyMaterial, NonceSource
from medshare.ledger import PatientAddress
from medshare.storage import ContentStore, HealthResult, IntegrityError, open_record, retrieval_latency, seal_record

key = KeyMaterial.derive("storage", "demo")
nonces = NonceSource(1)
store = ContentStore()
addrs = [PatientAddress(f"A{i % 3:02d}", f"P{i:03d}") for i in range(40)]
for i, a in enumerate(addrs):
    store.store(seal_record(a, HealthResult(float(i % 10)), key, nonces, tick=i))
print("objects per node:", store.distribution())

# %%
rec = store.fetch(addrs[7])
print(addrs[7], "->", store.dht[addrs[7]].content_hash, open_record(rec, key))

# %% bytes on a node no longer hash to their address after tampering
entry = store.dht[addrs[7]]
node = store.nodes[entry.node_id]
good = node.objects[entry.content_hash]
node.objects[entry.content_hash] = good[:-1] + bytes([good[-1] ^ 1])
try:
    store.fetch(addrs[7])
except IntegrityError as exc:
    print("integrity:", exc)
node.objects[entry.content_hash] = good

# %% retrieval latency as concurrent users grow
for n in np.arange(2, 17, 2):
    c, d = retrieval_latency(n, "centralized"), retrieval_latency(n, "distributed")
    print(f"{n:>3} users  centralized {c:5.2f}s  distributed {d:5.2f}s")
