"""Principal identities: Ed25519 key pairs, SHA-256 digests, and
signature-backed attestations over canonically encoded atoms.

A signature by K over the canonical bytes of an atom is the evidence for
the claim "K attests this atom"; the formula itself travels in clear.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import KeyError_
from .syntax import Atom, Attest, Const, Formula

SIG_SCHEME = "ed25519"
DIGEST_SCHEME = "sha256"


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class PrincipalId:
    name: str
    fingerprint: bytes  # sha256 of the public key bytes

    def __repr__(self):
        return f"{self.name}#{self.fingerprint.hex()[:8]}"


@dataclass(frozen=True)
class KeyPair:
    public: bytes
    private: bytes
    scheme: str = SIG_SCHEME


def keygen(name: str, rng=None) -> tuple[KeyPair, PrincipalId]:
    """Create a fresh key pair.  `rng` may supply 32 seed bytes via
    randbytes() for reproducible identities; default is OS entropy."""
    if not name:
        raise KeyError_("principal name must be nonempty")
    seed = rng.randbytes(32) if rng is not None else os.urandom(32)
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    pub = sk.public_key().public_bytes_raw()
    kp = KeyPair(public=pub, private=seed)
    return kp, PrincipalId(name=name, fingerprint=sha256(pub))


def sign(kp: KeyPair, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(kp.private).sign(message)


def verify(public: bytes, signature: bytes, message: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


# ---------------------------------------------------------------------------
# Signed attestations


@dataclass(frozen=True)
class SignedAttestation:
    principal: PrincipalId
    payload: bytes  # canonical bytes of the attested atom
    signature: bytes
    issued_at: int | None = None  # Time value
    session_nonce: bytes | None = None

    def atom(self) -> Atom:
        from . import codec

        f = codec.decode_formula(self.payload)
        if not isinstance(f, Atom):
            raise KeyError_("attestation payload is not an atom")
        return f


def _signing_input(payload: bytes, issued_at, session_nonce) -> bytes:
    at = b"" if issued_at is None else str(issued_at).encode()
    nonce = session_nonce or b""
    return b"%d:%s%d:%s%d:%s" % (len(payload), payload, len(at), at, len(nonce), nonce)


def sign_attestation(
    kp: KeyPair,
    who: PrincipalId,
    atom: Atom,
    issued_at: int | None = None,
    session_nonce: bytes | None = None,
) -> SignedAttestation:
    """Sign an atom as `who`.  The key pair must match the identity."""
    from . import codec

    if sha256(kp.public) != who.fingerprint:
        raise KeyError_(f"key pair does not belong to {who!r}")
    payload = codec.encode_formula(atom)
    sig = sign(kp, _signing_input(payload, issued_at, session_nonce))
    return SignedAttestation(who, payload, sig, issued_at, session_nonce)


def verify_attestation(public: bytes, sa: SignedAttestation) -> Formula | None:
    """Return the attested formula Attest(K, atom) on success, None on any
    forged, tampered, or mismatched certificate."""
    if sha256(public) != sa.principal.fingerprint:
        return None
    if not verify(public, sa.signature, _signing_input(sa.payload, sa.issued_at, sa.session_nonce)):
        return None
    try:
        atom = sa.atom()
    except Exception:
        return None
    return Attest(Const(sa.principal.name, "Principal"), atom)


# ---------------------------------------------------------------------------
# Key and directory files

KEYFILE_MODE = 0o600


def save_keypair(path: str, kp: KeyPair):
    """Key file: one line, 64 bytes hex = raw private || public."""
    data = (kp.private + kp.public).hex() + "\n"
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, KEYFILE_MODE)
    with os.fdopen(fd, "w") as fh:
        fh.write(data)


def load_keypair(path: str) -> KeyPair:
    with open(path) as fh:
        raw = bytes.fromhex(fh.readline().strip())
    if len(raw) != 64:
        raise KeyError_(f"malformed key file {path}")
    return KeyPair(public=raw[32:], private=raw[:32])


class Directory:
    """Deployment directory: principal name -> public key and fingerprint.
    Iteration order is file/registration order and drives broadcast order."""

    def __init__(self):
        self._entries = {}  # name -> (public bytes, fingerprint)

    def add(self, name: str, public: bytes):
        self._entries[name] = (public, sha256(public))

    def names(self):
        return list(self._entries)

    def public_key(self, name: str) -> bytes | None:
        e = self._entries.get(name)
        return e[0] if e else None

    def principal_id(self, name: str) -> PrincipalId | None:
        e = self._entries.get(name)
        return PrincipalId(name, e[1]) if e else None

    def __contains__(self, name):
        return name in self._entries

    def save(self, path: str):
        with open(path, "w") as fh:
            for name, (pub, fp) in self._entries.items():
                fh.write(f"{name} {pub.hex()} {fp.hex()}\n")

    @classmethod
    def load(cls, path: str) -> "Directory":
        d = cls()
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                name, pub_hex, fp_hex = line.split()
                pub = bytes.fromhex(pub_hex)
                if sha256(pub).hex() != fp_hex:
                    raise KeyError_(f"fingerprint mismatch for {name!r} in {path}")
                d.add(name, pub)
        return d
