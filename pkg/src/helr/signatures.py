"""Schnorr signatures over the protocol group.

Used by the enrollment server to bind template components to a user
identity.  Signed payloads are canonical length-prefixed concatenations so
the byte framing is unambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .group import CHALLENGE_LEN, GroupElement, GroupParams, hash_challenge, random_scalar

SIG_TAG = b"helr/sig"


@dataclass(frozen=True)
class SigKeyPair:
    signing_key: int
    verification_key: GroupElement


@dataclass(frozen=True)
class Signature:
    challenge: int
    response: int


def sig_keygen(params: GroupParams, rng) -> SigKeyPair:
    sk = random_scalar(params, rng)
    while sk == 0:
        sk = random_scalar(params, rng)
    return SigKeyPair(signing_key=sk, verification_key=params.g.mul(sk).precompute())


def frame_fields(*fields: bytes) -> bytes:
    """Canonical message framing: each field length-prefixed."""
    return b"".join(len(f).to_bytes(4, "big") + f for f in fields)


def sign(params: GroupParams, kp: SigKeyPair, message: bytes, rng) -> Signature:
    r = random_scalar(params, rng)
    R = params.g.mul(r)
    e = hash_challenge(SIG_TAG, [params.encode(kp.verification_key), message, params.encode(R)])
    z = (r + e * kp.signing_key) % params.q
    return Signature(challenge=e, response=z)


def verify(params: GroupParams, vk: GroupElement, message: bytes, sig: Signature) -> bool:
    if not (0 <= sig.response < params.q and 0 <= sig.challenge < 1 << (8 * CHALLENGE_LEN)):
        return False
    R = params.g.mul(sig.response) + vk.mul((-sig.challenge) % params.q)
    e = hash_challenge(SIG_TAG, [params.encode(vk), message, params.encode(R)])
    return e == sig.challenge


def sig_to_bytes(params: GroupParams, sig: Signature) -> bytes:
    """challenge || response, fixed length."""
    return sig.challenge.to_bytes(CHALLENGE_LEN, "big") + params.encode_scalar(sig.response)


def sig_from_bytes(params: GroupParams, data: bytes) -> Signature:
    want = CHALLENGE_LEN + params.scalar_len
    if len(data) != want:
        raise ConfigError(f"signature must be {want} bytes, got {len(data)}")
    return Signature(
        challenge=int.from_bytes(data[:CHALLENGE_LEN], "big"),
        response=params.decode_scalar(data[CHALLENGE_LEN:]),
    )
