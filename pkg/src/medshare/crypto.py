"""AES-GCM encryption of task payloads and stored health records.

Serialized container layout (all integers big-endian)::

    u16 len(key_id) | key_id (utf-8)
    u8  len(nonce)  | nonce
    u8  len(tag)    | tag
    u32 len(body)   | body (ciphertext without tag)
"""

from __future__ import annotations

import hashlib
import os
import struct
import threading
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from medshare.costs import TaskProfile, encryption_time

NONCE_SIZE = 12
TAG_SIZE = 16
VALID_KEY_BITS = (128, 256)


class AuthenticationError(Exception):
    """Ciphertext failed authentication: wrong key or tampered bytes."""


class ContainerFormatError(ValueError):
    pass


@dataclass(frozen=True)
class KeyMaterial:
    key_id: str
    key: bytes = field(repr=False)
    created_tick: int = 0

    def __post_init__(self) -> None:
        if len(self.key) * 8 not in VALID_KEY_BITS:
            raise ValueError(f"key must be 128 or 256 bits, got {len(self.key) * 8}")
        if not self.key_id:
            raise ValueError("key_id must be non-empty")

    @classmethod
    def generate(cls, key_id: str, bits: int = 128, created_tick: int = 0) -> KeyMaterial:
        return cls(key_id, os.urandom(bits // 8), created_tick)

    @classmethod
    def derive(cls, key_id: str, seed: bytes | str, bits: int = 128, created_tick: int = 0) -> KeyMaterial:
        """Deterministic key for reproducible scenarios; not for real deployments."""
        if isinstance(seed, str):
            seed = seed.encode()
        digest = hashlib.sha256(b"medshare-key\x00" + seed + b"\x00" + key_id.encode()).digest()
        return cls(key_id, digest[: bits // 8], created_tick)


@dataclass(frozen=True)
class Ciphertext:
    key_id: str
    nonce: bytes
    body: bytes
    tag: bytes

    def to_bytes(self) -> bytes:
        kid = self.key_id.encode()
        return b"".join(
            (
                struct.pack(">H", len(kid)),
                kid,
                struct.pack(">B", len(self.nonce)),
                self.nonce,
                struct.pack(">B", len(self.tag)),
                self.tag,
                struct.pack(">I", len(self.body)),
                self.body,
            )
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> Ciphertext:
        try:
            pos = 0
            (n,) = struct.unpack_from(">H", data, pos)
            pos += 2
            key_id = data[pos : pos + n].decode()
            pos += n
            (n,) = struct.unpack_from(">B", data, pos)
            nonce = data[pos + 1 : pos + 1 + n]
            pos += 1 + n
            (n,) = struct.unpack_from(">B", data, pos)
            tag = data[pos + 1 : pos + 1 + n]
            pos += 1 + n
            (n,) = struct.unpack_from(">I", data, pos)
            body = data[pos + 4 : pos + 4 + n]
            pos += 4 + n
        except (struct.error, UnicodeDecodeError) as exc:
            raise ContainerFormatError(str(exc)) from exc
        if pos != len(data) or len(nonce) != NONCE_SIZE or len(tag) != TAG_SIZE or len(body) != n:
            raise ContainerFormatError("truncated or oversized ciphertext container")
        return cls(key_id, nonce, body, tag)


class NonceSource:
    """Fresh 96-bit nonces: OS entropy, or a seeded counter stream for tests."""

    def __init__(self, seed: int | None = None):
        self._seed = seed
        self._counter = 0
        self._lock = threading.Lock()

    def __call__(self) -> bytes:
        if self._seed is None:
            return os.urandom(NONCE_SIZE)
        with self._lock:
            n = self._counter
            self._counter += 1
        material = struct.pack(">QQ", self._seed & (2**64 - 1), n)
        return hashlib.sha256(b"medshare-nonce\x00" + material).digest()[:NONCE_SIZE]


_default_nonces = NonceSource()


def encrypt(
    payload: bytes, key: KeyMaterial, nonces: NonceSource | None = None, associated_data: bytes | None = None
) -> Ciphertext:
    nonce = (nonces or _default_nonces)()
    sealed = AESGCM(key.key).encrypt(nonce, bytes(payload), associated_data)
    return Ciphertext(key.key_id, nonce, sealed[:-TAG_SIZE], sealed[-TAG_SIZE:])


def decrypt(c: Ciphertext, key: KeyMaterial, associated_data: bytes | None = None) -> bytes:
    if c.key_id != key.key_id:
        raise AuthenticationError(f"ciphertext sealed under key {c.key_id!r}, not {key.key_id!r}")
    if len(c.nonce) != NONCE_SIZE or len(c.tag) != TAG_SIZE:
        raise AuthenticationError("malformed nonce or tag")
    try:
        return AESGCM(key.key).decrypt(c.nonce, c.body + c.tag, associated_data)
    except InvalidTag as exc:
        raise AuthenticationError("authentication failed") from exc


def seal_task_payload(
    payload: bytes, key: KeyMaterial, profile: TaskProfile, nonces: NonceSource | None = None
) -> tuple[Ciphertext, float]:
    """Encrypt a task before it leaves the device.

    Returns the ciphertext and the encryption time the cost model charges
    for this task (its modeled duration, not the wall-clock time here).
    """
    return encrypt(payload, key, nonces), encryption_time(profile)
