import itertools

import pytest

from medshare.contract import DuplicateUser, Role, Unauthorized
from medshare.ledger import BadSignature, PatientAddress, Transaction
from medshare.protocol import WARNING_MESSAGE, AccessRequest, AccessVerdict, HealthNetwork
from medshare.storage import HealthResult, IntegrityError, NotFound

P1, P2 = PatientAddress("A01", "P001"), PatientAddress("A02", "P002")


@pytest.fixture
def net():
    n = HealthNetwork(seed=3)
    n.upload_result(P1, HealthResult(4.2, b"gait"))
    n.upload_result(P2, HealthResult(1.0))
    return n


def ledger_size(n):
    return sum(1 for _ in n.ledger.transactions())


def test_authorized_doctor_gets_record(net):
    patient, doctor = net.identity("alice"), net.identity("dr-carol")
    net.register_user(net.admin, patient.public_key, Role.PATIENT, [P1], ["phone-alice"])
    net.register_user(net.admin, doctor.public_key, Role.DOCTOR, [P1], ["phone-carol"])
    before = ledger_size(net)
    out = net.process_request(AccessRequest.make(doctor, P1, "phone-carol", net.ledger.tick, 1))
    assert out.verdict is AccessVerdict.GRANTED and out.granted
    assert net.read_result(out.record) == HealthResult(4.2, b"gait")
    assert ledger_size(net) == before + 1
    height, tx = net.ledger.find(out.tx_id)
    assert height == net.ledger.head.height
    assert tx.method == "RetrieveEHRs" and tx.sender == net.manager.public_key
    assert tx.payload["record"] == str(out.record_hash)
    # no record bytes leak onto the chain
    assert b"gait" not in net.ledger.to_ndjson().encode()


def test_unregistered_requester_is_penalized(net):
    mallory = net.identity("mallory")
    out = net.process_request(AccessRequest.make(mallory, P1, "laptop", 0, 1))
    assert out.verdict is AccessVerdict.PENALIZED and out.message == WARNING_MESSAGE
    assert out.record is None and out.record_hash is None
    _, tx = net.ledger.find(out.tx_id)
    assert tx.method == "Penalty" and tx.sender == net.admin.public_key
    assert tx.payload["requester"] == mallory.public_key
    assert net.contract.warnings[-1].public_key == mallory.public_key


def test_wrong_device_is_penalized(net):
    doctor = net.identity("dr-carol")
    net.register_user(net.admin, doctor.public_key, Role.DOCTOR, [P1], ["phone-carol"])
    out = net.process_request(AccessRequest.make(doctor, P1, "stolen-tablet", 0, 1))
    assert out.verdict is AccessVerdict.PENALIZED
    assert "device" in net.ledger.find(out.tx_id)[1].payload["reason"]


def test_registration_without_bindings(net):
    doctor = net.identity("dr-erin")
    net.register_user(net.admin, doctor.public_key, Role.DOCTOR, [], ["phone-erin"])
    for addr in (P1, P2):
        assert not net.process_request(AccessRequest.make(doctor, addr, "phone-erin", 0, 1)).granted


def test_duplicate_and_unauthorized_registration(net):
    pk = net.identity("dan").public_key
    net.register_user(net.admin, pk, Role.CAREGIVER, [P2], ["tablet"])
    n = ledger_size(net)
    with pytest.raises(DuplicateUser):
        net.register_user(net.admin, pk, Role.CAREGIVER)
    with pytest.raises(Unauthorized):
        net.register_user(net.identity("dan"), net.identity("eve").public_key, Role.DOCTOR)
    assert ledger_size(net) == n


def test_registration_tx_is_on_chain(net):
    pk = net.identity("alice").public_key
    tx_id = net.register_user(net.admin, pk, "patient", [P1], ["phone"])
    _, tx = net.ledger.find(tx_id)
    assert tx.method == "AddUser" and tx.payload == {"user": pk, "role": "patient", "patients": ["A01:P001"], "devices": ["phone"]}


def test_decision_table_all_eight_combinations():
    for registered, patient_bound, device_bound in itertools.product((False, True), repeat=3):
        net = HealthNetwork(seed=1)
        net.upload_result(P1, HealthResult(2.0))
        who = net.identity("requester")
        if registered:
            net.register_user(
                net.admin, who.public_key, Role.DOCTOR,
                [P1] if patient_bound else [P2],
                ["dev"] if device_bound else ["other"],
            )
        before = ledger_size(net)
        out = net.process_request(AccessRequest.make(who, P1, "dev", 0, 1))
        expected = registered and patient_bound and device_bound
        assert out.granted == expected
        assert ledger_size(net) == before + 1
        assert net.ledger.find(out.tx_id)[1].method == ("RetrieveEHRs" if expected else "Penalty")


def test_deny_charges_only_penalty_gas(net):
    n = len(net.contract.receipts)
    net.process_request(AccessRequest.make(net.identity("x"), P1, "d", 0, 1))
    assert [r.function for r in net.contract.receipts[n:]] == ["Penalty"]


def test_forged_request_is_an_error_not_a_verdict(net):
    doctor, mallory = net.identity("dr-carol"), net.identity("mallory")
    net.register_user(net.admin, doctor.public_key, Role.DOCTOR, [P1], ["d"])
    real = AccessRequest.make(doctor, P1, "d", 0, 1).tx
    forged = Transaction(real.sender, real.method, real.payload, real.tick, real.nonce, mallory.sign(real.body()))
    n = ledger_size(net)
    with pytest.raises(BadSignature):
        net.process_request(AccessRequest(forged))
    assert ledger_size(net) == n


def test_non_access_transaction_rejected(net):
    tx = Transaction.create(net.admin, "PolicyList", {"patient": "A01:P001"})
    with pytest.raises(ValueError):
        net.process_request(AccessRequest(tx))
    with pytest.raises(ValueError):
        AccessRequest.make(net.admin, P1, "")


def test_grant_with_missing_record_is_infrastructure_error():
    net = HealthNetwork(seed=2)
    doctor = net.identity("doc")
    net.register_user(net.admin, doctor.public_key, Role.DOCTOR, [P1], ["d"])
    with pytest.raises(NotFound):
        net.process_request(AccessRequest.make(doctor, P1, "d", 0, 1))


def test_grant_with_tampered_record_reports_integrity(net):
    doctor = net.identity("doc")
    net.register_user(net.admin, doctor.public_key, Role.DOCTOR, [P1], ["d"])
    entry = net.store.dht[P1]
    node = net.store.nodes[entry.node_id]
    raw = bytearray(node.objects[entry.content_hash])
    raw[-1] ^= 0x80
    node.objects[entry.content_hash] = bytes(raw)
    with pytest.raises(IntegrityError):
        net.process_request(AccessRequest.make(doctor, P1, "d", 0, 1))


def test_patient_can_audit_accesses(net):
    patient, doctor = net.identity("alice"), net.identity("dr-carol")
    net.register_user(net.admin, patient.public_key, Role.PATIENT, [P1], ["phone"])
    net.register_user(net.admin, doctor.public_key, Role.DOCTOR, [P1], ["d"])
    out = net.process_request(AccessRequest.make(doctor, P1, "d", 0, 1))
    net.process_request(AccessRequest.make(net.identity("mallory"), P1, "x", 0, 1))
    view = net.patient_view(P1)
    assert out.tx_id in {t.tx_id for t in view}
    assert {t.method for t in view} == {"RetrieveEHRs", "Penalty"}
    assert all(t.payload["patient"] == "A01:P001" for t in view)


def test_patient_can_fetch_own_record(net):
    patient = net.identity("alice")
    net.register_user(net.admin, patient.public_key, Role.PATIENT, [P1], ["phone"])
    assert net.process_request(AccessRequest.make(patient, P1, "phone", 0, 1)).granted
    assert not net.process_request(AccessRequest.make(patient, P2, "phone", 0, 2)).granted


def test_delete_user_removes_records_and_access(net):
    patient, doctor = net.identity("alice"), net.identity("dr-carol")
    net.register_user(net.admin, patient.public_key, Role.PATIENT, [P1], ["phone"])
    net.register_user(net.admin, doctor.public_key, Role.DOCTOR, [P1], ["d"])
    objects = net.store.object_count()
    net.delete_user(net.admin, patient.public_key)
    # the sealed delete block collects the tombstoned bytes
    assert net.store.object_count() == objects - 1
    with pytest.raises(NotFound):
        net.store.fetch(P1)
    assert not net.process_request(AccessRequest.make(patient, P1, "phone", 0, 1)).granted


def test_batch_is_one_block_and_seeded(net):
    doctor = net.identity("dr-carol")
    net.register_user(net.admin, doctor.public_key, Role.DOCTOR, [P1], ["d"])
    reqs = [AccessRequest.make(net.identity(f"u{i}"), P1, "d", 0, i) for i in range(5)]
    reqs.append(AccessRequest.make(doctor, P1, "d", 0, 99))
    height = net.ledger.head.height
    outs = net.process_batch(reqs, shuffle_seed=4)
    assert net.ledger.head.height == height + 1
    assert [o.granted for o in outs] == [False] * 5 + [True]
    sealed = [t.payload["request"] for t in net.ledger.head.transactions]
    assert sorted(sealed) == sorted(r.tx.tx_id for r in reqs)

    other = HealthNetwork(seed=3)
    other.upload_result(P1, HealthResult(4.2, b"gait"))
    other.upload_result(P2, HealthResult(1.0))
    other.register_user(other.admin, doctor.public_key, Role.DOCTOR, [P1], ["d"])
    other.process_batch(reqs, shuffle_seed=4)
    assert other.ledger.to_ndjson() == net.ledger.to_ndjson()


def test_every_participant_sees_outcome(net):
    out = net.process_request(AccessRequest.make(net.identity("m"), P1, "x", 0, 1))
    for p in net.participants.values():
        assert out.tx_id in {t.tx_id for t in p.head.transactions}
    assert net.ledger.verify_chain().ok
