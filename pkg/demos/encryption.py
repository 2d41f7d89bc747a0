"""Sealing a health record before it leaves the device."""
# %%
from __future__ import annotations

from medshare.calibration import calibrated_profile
from medshare.crypto import AuthenticationError, Ciphertext, KeyMaterial, NonceSource, decrypt, encrypt, seal_task_payload

key = KeyMaterial.derive("patient-A01", "demo seed")
nonces = NonceSource(42)  # seeded, so the run is reproducible; NonceSource() uses os.urandom
print(key)  # the key bytes are never printed

# %%
reading = b'{"hr": 71, "spo2": 0.97, "steps": 4410}'
box = encrypt(reading, key, nonces, associated_data=b"A01:P001")
wire = box.to_bytes()
print(len(reading), "plaintext bytes ->", len(wire), "container bytes")
print(decrypt(Ciphertext.from_bytes(wire), key, b"A01:P001"))

# %% one flipped bit anywhere is caught by the tag
bad = bytearray(wire)
bad[-3] ^= 0x10
try:
    decrypt(Ciphertext.from_bytes(bytes(bad)), key, b"A01:P001")
except AuthenticationError as exc:
    print("rejected:", exc)

# %% the cost model charges a modeled encryption time, separate from wall-clock
profile = calibrated_profile(600.0, "edge")
_, t_enc = seal_task_payload(bytes(600 * 1024), key, profile, nonces)
print(f"modeled encryption time for 600 KB: {t_enc:.3f}s")
