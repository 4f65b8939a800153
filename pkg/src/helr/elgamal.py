"""Additive (exponent-encoded) ElGamal and its (2,2)-threshold variant.

Messages live in the exponent: enc(m) = (g^r, g^m * pk^r), so ciphertext
addition adds plaintexts and raising to a scalar multiplies them.  Every
encryption takes caller-supplied randomness; convenience wrappers that draw
from an rng sit next to the deterministic core so protocol steps that must
reproduce byte-identical ciphertexts can do so.

Plaintext recovery needs a bounded discrete log, so full decryption exists
only for small, known windows (scores, thresholds).  Blinded nonzero values
are uniform scalars and must never be decrypted; use ``is_zero``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import KeyTagMismatchError, ConfigError
from .group import GroupElement, GroupParams, bounded_dlog, random_nonzero_scalar, random_scalar


class KeyTag(enum.Enum):
    """Which key decrypts the ciphertext. Protocol bookkeeping only; never
    serialized (the wire context implies it)."""

    CLIENT = "client"
    SERVER = "server"
    JOINT = "joint"
    PARTIAL_BY_SERVER = "partial_by_server"  # server share removed; client key left
    PARTIAL_BY_CLIENT = "partial_by_client"


@dataclass(frozen=True)
class KeyPair:
    sk: int
    pk: GroupElement


@dataclass(frozen=True)
class JointPublicKey:
    pk_joint: GroupElement
    pk_1: GroupElement
    pk_2: GroupElement


@dataclass(frozen=True)
class Ciphertext:
    u: GroupElement
    v: GroupElement
    key_tag: KeyTag


def keygen(params: GroupParams, rng, precompute: bool = True) -> KeyPair:
    """Fresh keypair with nonzero secret. Public keys get comb tables by
    default since they are exponentiated constantly."""
    sk = random_nonzero_scalar(params, rng)
    pk = params.g.mul(sk)
    if precompute:
        pk.precompute()
    return KeyPair(sk=sk, pk=pk)


def joint_keygen(kp1: KeyPair, kp2: KeyPair, params: GroupParams) -> JointPublicKey:
    """Joint public key pk_1 * pk_2 for (2,2)-threshold encryption."""
    if kp1.pk.is_identity or kp2.pk.is_identity:
        raise ConfigError("degenerate key share (identity public key)")
    pk_joint = (kp1.pk + kp2.pk).precompute()
    return JointPublicKey(pk_joint=pk_joint, pk_1=kp1.pk, pk_2=kp2.pk)


def encrypt(params: GroupParams, pk: GroupElement, m: int, r: int,
            tag: KeyTag = KeyTag.JOINT) -> Ciphertext:
    """enc(m) = (g^r, g^m * pk^r). Deterministic in (pk, m, r)."""
    if abs(m) > 1 << 32:
        raise ConfigError("plaintext outside the supported dlog window")
    u = params.g.mul(r)
    v = params.g.mul(m) + pk.mul(r)
    return Ciphertext(u=u, v=v, key_tag=tag)


def encrypt_rng(params: GroupParams, pk: GroupElement, m: int, rng,
                tag: KeyTag = KeyTag.JOINT) -> Ciphertext:
    return encrypt(params, pk, m, random_scalar(params, rng), tag)


def _strip(params: GroupParams, sk: int, c: Ciphertext) -> GroupElement:
    return c.v + c.u.mul(-sk % params.q)


def decrypt(params: GroupParams, sk: int, c: Ciphertext, lo: int, hi: int) -> int:
    """Recover m in [lo, hi] from v * u^{-sk}; NotInRangeError otherwise."""
    return bounded_dlog(params, params.g, _strip(params, sk, c), lo, hi)


def is_zero(params: GroupParams, sk: int, c: Ciphertext) -> bool:
    """True iff the plaintext is 0.  Never computes a discrete log, so it is
    safe on blinded values (nonzero blinded plaintexts are uniform)."""
    return _strip(params, sk, c).is_identity


def _check_tags(c1: Ciphertext, c2: Ciphertext):
    if c1.key_tag is not c2.key_tag:
        raise KeyTagMismatchError(f"{c1.key_tag.value} vs {c2.key_tag.value}")


def add(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    """Componentwise product: plaintexts add, randomness adds."""
    _check_tags(c1, c2)
    return Ciphertext(u=c1.u + c2.u, v=c1.v + c2.v, key_tag=c1.key_tag)


def sub(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    _check_tags(c1, c2)
    return Ciphertext(u=c1.u - c2.u, v=c1.v - c2.v, key_tag=c1.key_tag)


def blind(c: Ciphertext, r_d: int) -> Ciphertext:
    """Raise both components to r_d; the plaintext becomes r_d * m.
    Preserves zero, randomizes everything else."""
    if r_d == 0:
        raise ConfigError("blinding value must be nonzero")
    return Ciphertext(u=c.u.mul(r_d), v=c.v.mul(r_d), key_tag=c.key_tag)


def rerandomize(params: GroupParams, pk: GroupElement, c: Ciphertext, r0: int) -> Ciphertext:
    """Same plaintext under fresh randomness (adds an encryption of 0)."""
    return Ciphertext(u=c.u + params.g.mul(r0), v=c.v + pk.mul(r0), key_tag=c.key_tag)


def partial_decrypt(params: GroupParams, sk_i: int, c: Ciphertext,
                    result_tag: KeyTag) -> Ciphertext:
    """Remove one key share: (u, v * u^{-sk_i}).  The result is an ordinary
    ciphertext under the other party's key."""
    if c.key_tag is not KeyTag.JOINT:
        raise KeyTagMismatchError(f"partial decryption needs a joint ciphertext, got {c.key_tag.value}")
    return Ciphertext(u=c.u, v=c.v + c.u.mul(-sk_i % params.q), key_tag=result_tag)


def ct_to_bytes(params: GroupParams, c: Ciphertext) -> bytes:
    """Wire encoding: encode(u) || encode(v), fixed length."""
    return params.encode(c.u) + params.encode(c.v)


def ct_from_bytes(params: GroupParams, data: bytes, tag: KeyTag) -> Ciphertext:
    n = params.encoding_len
    if len(data) != 2 * n:
        raise ConfigError(f"ciphertext encoding must be {2*n} bytes")
    return Ciphertext(u=params.decode(data[:n]), v=params.decode(data[n:]), key_tag=tag)
