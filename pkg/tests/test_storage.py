import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medshare.crypto import KeyMaterial, NonceSource
from medshare.ledger import PatientAddress
from medshare.storage import (
    ContentHash,
    ContentStore,
    EHRRecord,
    HealthResult,
    IntegrityError,
    LatencyTable,
    NotFound,
    PlaintextRefused,
    StorageError,
    open_record,
    place,
    retrieval_latency,
    seal_record,
)

KEY = KeyMaterial.derive("storage", "t")
ADDR = PatientAddress("A01", "P001")


def sealed(addr=ADDR, score=3.5, data=b"motion", seed=0):
    return seal_record(addr, HealthResult(score, data), KEY, NonceSource(seed))


def test_round_trip_by_hash_and_address():
    store = ContentStore()
    rec = sealed()
    h = store.store(rec)
    assert h == ContentHash.of(rec.to_bytes())
    assert store.get(h) == rec.to_bytes()
    assert store.fetch(ADDR) == rec
    assert open_record(store.fetch(ADDR), KEY) == HealthResult(3.5, b"motion")


def test_content_hash_text_form():
    h = ContentHash.of(b"x")
    assert str(h) == hashlib.sha256(b"x").hexdigest()
    assert ContentHash.parse(str(h)) == h
    for bad in ("ab", str(h).upper()):
        with pytest.raises(ValueError):
            ContentHash.parse(bad)


def test_store_is_idempotent():
    store = ContentStore()
    rec = sealed()
    assert store.store(rec) == store.store(rec)
    assert store.object_count() == 1


def test_newer_record_replaces_dht_entry():
    store = ContentStore()
    store.store(sealed(score=1.0))
    h2 = store.store(sealed(score=2.0, seed=1))
    assert store.dht[ADDR].content_hash == h2
    assert open_record(store.fetch(ADDR), KEY).severity_score == 2.0
    assert len(store.dht) == 1


def oracle_place(digest: bytes, nodes):
    best = None
    for nid in sorted(nodes):
        score = int(hashlib.sha256(nid.encode() + b"\x00" + digest).hexdigest(), 16)
        if best is None or score > best[0]:
            best = (score, nid)
    return best[1]


def test_twelve_records_on_four_nodes():
    store = ContentStore()
    expected = {nid: 0 for nid in store.nodes}
    for i in range(12):
        addr = PatientAddress(f"A{i % 3}", f"P{i:03d}")
        h = store.store(sealed(addr, float(i), seed=i))
        node = oracle_place(h.digest, store.nodes)
        expected[node] += 1
        assert store.dht[addr].node_id == node == place(h, store.nodes)
        assert h in store.nodes[node].objects
    assert store.distribution() == expected
    assert sum(expected.values()) == 12
    for i in range(12):
        addr = PatientAddress(f"A{i % 3}", f"P{i:03d}")
        assert open_record(store.fetch(addr), KEY).severity_score == float(i)


def test_tampered_bytes_raise_integrity_error():
    store = ContentStore()
    h = store.store(sealed())
    node = store.nodes[store.dht[ADDR].node_id]
    raw = bytearray(node.objects[h])
    raw[-1] ^= 0x01
    node.objects[h] = bytes(raw)
    with pytest.raises(IntegrityError):
        store.fetch(ADDR)
    with pytest.raises(IntegrityError):
        store.get(h)


def test_every_single_byte_corruption_detected():
    store = ContentStore()
    h = store.store(sealed(data=b"abc"))
    node = store.nodes[store.dht[ADDR].node_id]
    original = node.objects[h]
    for i in range(len(original)):
        raw = bytearray(original)
        raw[i] = (raw[i] + 1) % 256
        node.objects[h] = bytes(raw)
        with pytest.raises(IntegrityError):
            store.fetch(ADDR)
    node.objects[h] = original
    assert store.fetch(ADDR)


def test_swapped_object_for_other_patient_detected():
    store = ContentStore()
    other = PatientAddress("A09", "P999")
    h_other = store.store(sealed(other))
    store.store(sealed())
    # point the DHT at the other patient's (valid) object
    store.dht[ADDR] = store.dht[other]
    with pytest.raises(IntegrityError, match="not a record"):
        store.fetch(ADDR)
    assert store.get(h_other)


def test_not_found_and_plaintext():
    store = ContentStore()
    with pytest.raises(NotFound):
        store.fetch(ADDR)
    with pytest.raises(NotFound):
        store.get(ContentHash.of(b"nothing"))
    with pytest.raises(PlaintextRefused):
        store.store(EHRRecord(ADDR, b"plain", encrypted=False))


def test_record_address_bound_by_encryption():
    rec = sealed()
    moved = EHRRecord(PatientAddress("A01", "P002"), rec.body, True)
    from medshare.crypto import AuthenticationError

    with pytest.raises(AuthenticationError):
        open_record(moved, KEY)


def test_malformed_record_bytes():
    with pytest.raises(StorageError):
        EHRRecord.from_bytes(b"not json\nbody")


def test_delete_tombstones_then_collects():
    store = ContentStore()
    store.store(sealed())
    keep = PatientAddress("A02", "P002")
    store.store(sealed(keep, seed=5))
    assert store.delete(ADDR) and not store.delete(ADDR)
    with pytest.raises(NotFound):
        store.fetch(ADDR)
    assert store.object_count() == 2
    assert store.collect_garbage() == 1
    assert store.object_count() == 1 and ADDR not in store.dht
    assert store.fetch(keep)
    # a fresh store after deletion revives the address
    store.store(sealed(seed=9))
    assert store.fetch(ADDR)


def test_persistence_round_trip(tmp_path):
    store = ContentStore(["n1", "n2", "n3"])
    for i in range(5):
        store.store(sealed(PatientAddress("A1", f"P{i}"), float(i), seed=i))
    store.delete(PatientAddress("A1", "P4"))
    store.save(tmp_path)
    manifest = json.loads((tmp_path / "dht.json").read_text())
    assert manifest["nodes"] == ["n1", "n2", "n3"] and len(manifest["entries"]) == 4
    loaded = ContentStore.load(tmp_path)
    for i in range(4):
        addr = PatientAddress("A1", f"P{i}")
        assert loaded.fetch(addr) == store.fetch(addr)
    with pytest.raises(NotFound):
        loaded.fetch(PatientAddress("A1", "P4"))
    victim = tmp_path / "objects" / manifest["entries"]["A1:P0"]["hash"]
    victim.write_bytes(victim.read_bytes()[:-1] + b"!")
    with pytest.raises(IntegrityError):
        ContentStore.load(tmp_path).fetch(PatientAddress("A1", "P0"))


def test_node_id_validation():
    with pytest.raises(ValueError):
        ContentStore([])
    with pytest.raises(ValueError):
        ContentStore(["a", "a"])


@settings(max_examples=40)
@given(st.binary(max_size=2048), st.floats(-1e6, 1e6, allow_nan=False))
def test_cas_identity_on_random_corpus(data, score):
    store = ContentStore()
    rec = sealed(score=score, data=data)
    store.store(rec)
    assert open_record(store.fetch(ADDR), KEY) == HealthResult(score, data)


TABLE_I = {
    2: (1.6, 0.6), 4: (2.4, 1.6), 6: (3.9, 2.6), 8: (4.8, 3.5), 10: (5.5, 4.4), 12: (7.8, 5.3),
}


@pytest.mark.parametrize("n", sorted(TABLE_I))
def test_latency_cells_exact(n):
    cent, dist = TABLE_I[n]
    assert retrieval_latency(n, "centralized") == cent
    assert retrieval_latency(n, "distributed") == dist


def test_latency_between_and_beyond():
    assert retrieval_latency(3, "distributed") == pytest.approx(1.1)
    assert retrieval_latency(14, "centralized") == pytest.approx(7.8 + 2.3)
    assert retrieval_latency(1, "distributed") == pytest.approx(0.1)


def test_latency_monotone_and_distributed_faster():
    ns = np.linspace(1, 16, 301)
    for mode in ("centralized", "distributed"):
        vals = [retrieval_latency(n, mode) for n in ns]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
    for n in ns:
        assert retrieval_latency(n, "distributed") <= retrieval_latency(n, "centralized")


def test_latency_argument_checks():
    with pytest.raises(ValueError):
        retrieval_latency(0, "distributed")
    with pytest.raises(ValueError):
        retrieval_latency(2, "ipfs")
    assert LatencyTable.load().user_counts == (2, 4, 6, 8, 10, 12)


def test_latency_table_requires_both_modes(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("mode,n_users,seconds\ncentralized,2,1.0\n")
    with pytest.raises(ValueError):
        LatencyTable.load(path)
