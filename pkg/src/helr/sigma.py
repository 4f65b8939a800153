"""Three-move proofs for the four relations the verification protocol needs,
with honest-verifier simulators, special-soundness extractors, Fiat-Shamir
compilation and AND-composition under one shared challenge.

Relations (statement element order is fixed and part of the wire format):

  PLAIN     (k, u, v)        knows (m, r) with u = g^r, v = g^m * k^r
  DEC_ZERO  (k, u, v)        knows s with k = g^s and v = u^s
                             (i.e. (u, v) decrypts to zero under s)
  BLIND     (u, v, a, b)     knows r with a = u^r, b = v^r
  PARTIAL   (pk, u, v, c)    knows sk with pk = g^sk and c = v * u^{-sk}

The interactive commit/respond/check triple is exposed directly (used by the
extractor tests); the NIZK wraps it with a hash challenge.  A single NIZK is
defined as an AND-composition of one statement, so the batch-of-one case is
identical to the single-proof case by construction.

Challenges are 128-bit; the hash input is domain-separated and covers the
full statement as well as the commitments.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import gmpy2

from .errors import ConfigError
from .group import CHALLENGE_LEN, GroupElement, GroupParams, hash_challenge, random_scalar


class SigmaRelation(enum.Enum):
    PLAIN = "plain"
    DEC_ZERO = "deczero"
    BLIND = "blind"
    PARTIAL = "partial"


DOMAIN_TAGS = {
    SigmaRelation.PLAIN: b"helr/plain",
    SigmaRelation.DEC_ZERO: b"helr/deczero",
    SigmaRelation.BLIND: b"helr/blind",
    SigmaRelation.PARTIAL: b"helr/partial",
}
AND_TAG = b"helr/and"

# statement arity, commitment arity, response arity
_ARITY = {
    SigmaRelation.PLAIN: (3, 2, 2),
    SigmaRelation.DEC_ZERO: (3, 2, 1),
    SigmaRelation.BLIND: (4, 2, 1),
    SigmaRelation.PARTIAL: (4, 2, 1),
}


@dataclass(frozen=True)
class SigmaStatement:
    relation: SigmaRelation
    elements: tuple[GroupElement, ...]

    def __post_init__(self):
        want = _ARITY[self.relation][0]
        if len(self.elements) != want:
            raise ConfigError(
                f"{self.relation.value} statement needs {want} elements, got {len(self.elements)}")


@dataclass(frozen=True)
class NizkProof:
    commitments: tuple[GroupElement, ...]
    challenge: int
    responses: tuple[int, ...]


@dataclass(frozen=True)
class AndProof:
    commitments: tuple[tuple[GroupElement, ...], ...]
    challenge: int
    responses: tuple[tuple[int, ...], ...]


def plain_statement(pk: GroupElement, ct) -> SigmaStatement:
    return SigmaStatement(SigmaRelation.PLAIN, (pk, ct.u, ct.v))


def dec_zero_statement(pk: GroupElement, ct) -> SigmaStatement:
    return SigmaStatement(SigmaRelation.DEC_ZERO, (pk, ct.u, ct.v))


def blind_statement(ct, blinded_ct) -> SigmaStatement:
    return SigmaStatement(SigmaRelation.BLIND, (ct.u, ct.v, blinded_ct.u, blinded_ct.v))


def partial_statement(pk_i: GroupElement, ct, partial_ct) -> SigmaStatement:
    return SigmaStatement(SigmaRelation.PARTIAL, (pk_i, ct.u, ct.v, partial_ct.v))


# -- interactive three-move core ---------------------------------------------

def commit(params: GroupParams, stmt: SigmaStatement, rng):
    """First move: commitments plus prover state (the nonces)."""
    g = params.g
    rel = stmt.relation
    if rel is SigmaRelation.PLAIN:
        k, u, v = stmt.elements
        rp, mp = random_scalar(params, rng), random_scalar(params, rng)
        return (g.mul(rp), g.mul(mp) + k.mul(rp)), (rp, mp)
    rp = random_scalar(params, rng)
    if rel is SigmaRelation.DEC_ZERO:
        k, u, v = stmt.elements
        return (g.mul(rp), u.mul(rp)), (rp,)
    if rel is SigmaRelation.BLIND:
        u, v, a, b = stmt.elements
        return (u.mul(rp), v.mul(rp)), (rp,)
    pk, u, v, c = stmt.elements
    return (g.mul(rp), u.mul(rp)), (rp,)


def respond(params: GroupParams, stmt: SigmaStatement, state, witness, challenge: int):
    """Third move: z = nonce + e * secret for each secret."""
    q = params.q
    if stmt.relation is SigmaRelation.PLAIN:
        rp, mp = state
        m, r = witness
        return ((rp + challenge * r) % q, (mp + challenge * m) % q)
    (rp,) = state
    (s,) = witness
    return ((rp + challenge * s) % q,)


def check_transcript(params: GroupParams, stmt: SigmaStatement,
                     commitments, challenge: int, responses) -> bool:
    """Verification equations for one transcript."""
    g = params.g
    q = params.q
    rel = stmt.relation
    if len(commitments) != _ARITY[rel][1] or len(responses) != _ARITY[rel][2]:
        return False
    neg_e = (-challenge) % q
    if rel is SigmaRelation.PLAIN:
        k, u, v = stmt.elements
        U, V = commitments
        z_r, z_m = responses
        if g.mul(z_r) + u.mul(neg_e) != U:
            return False
        return g.mul(z_m) + k.mul(z_r) + v.mul(neg_e) == V
    (z,) = responses
    if rel is SigmaRelation.DEC_ZERO:
        k, u, v = stmt.elements
        X, U = commitments
        if g.mul(z) + k.mul(neg_e) != X:
            return False
        return params.dual_mul(u, z, v, neg_e) == U
    if rel is SigmaRelation.BLIND:
        u, v, a, b = stmt.elements
        U, V = commitments
        if params.dual_mul(u, z, a, neg_e) != U:
            return False
        return params.dual_mul(v, z, b, neg_e) == V
    pk, u, v, c = stmt.elements
    X, U = commitments
    if g.mul(z) + pk.mul(neg_e) != X:
        return False
    return params.dual_mul(u, z, v - c, neg_e) == U


def simulate(params: GroupParams, stmt: SigmaStatement, challenge: int, rng):
    """Accepting transcript for a forced challenge: draw the responses, then
    solve the verification equations for the commitments."""
    g = params.g
    neg_e = (-challenge) % params.q
    rel = stmt.relation
    if rel is SigmaRelation.PLAIN:
        k, u, v = stmt.elements
        z_r, z_m = random_scalar(params, rng), random_scalar(params, rng)
        U = g.mul(z_r) + u.mul(neg_e)
        V = g.mul(z_m) + k.mul(z_r) + v.mul(neg_e)
        return (U, V), (z_r, z_m)
    z = random_scalar(params, rng)
    if rel is SigmaRelation.DEC_ZERO:
        k, u, v = stmt.elements
        return (g.mul(z) + k.mul(neg_e), params.dual_mul(u, z, v, neg_e)), (z,)
    if rel is SigmaRelation.BLIND:
        u, v, a, b = stmt.elements
        return (params.dual_mul(u, z, a, neg_e), params.dual_mul(v, z, b, neg_e)), (z,)
    pk, u, v, c = stmt.elements
    return (g.mul(z) + pk.mul(neg_e), params.dual_mul(u, z, v - c, neg_e)), (z,)


def extract(params: GroupParams, stmt: SigmaStatement, transcript1, transcript2):
    """Special-soundness extractor: two accepting transcripts with the same
    commitments and distinct challenges yield the witness (z1-z2)/(e1-e2)."""
    comm1, e1, resp1 = transcript1
    comm2, e2, resp2 = transcript2
    if comm1 != comm2:
        raise ConfigError("transcripts must share commitments")
    if e1 == e2:
        raise ConfigError("challenges must differ")
    q = params.q
    de_inv = int(gmpy2.invert((e1 - e2) % q, q))
    if stmt.relation is SigmaRelation.PLAIN:
        z_r1, z_m1 = resp1
        z_r2, z_m2 = resp2
        r = (z_r1 - z_r2) * de_inv % q
        m = (z_m1 - z_m2) * de_inv % q
        return (m, r)
    return ((resp1[0] - resp2[0]) * de_inv % q,)


# -- Fiat-Shamir and AND-composition ------------------------------------------

def _challenge_inputs(params: GroupParams, statements, all_commitments):
    parts = [len(statements).to_bytes(4, "big")]
    for stmt, comms in zip(statements, all_commitments):
        parts.append(DOMAIN_TAGS[stmt.relation])
        parts.extend(params.encode(e) for e in stmt.elements)
        parts.extend(params.encode(c) for c in comms)
    return parts


def compute_challenge(params: GroupParams, statements, all_commitments) -> int:
    return hash_challenge(AND_TAG, _challenge_inputs(params, statements, all_commitments))


def prove(params: GroupParams, stmt: SigmaStatement, witness, rng) -> NizkProof:
    """Non-interactive proof for one statement.

    Proving with a wrong witness succeeds mechanically but yields a proof
    that fails verification.
    """
    comms, state = commit(params, stmt, rng)
    e = compute_challenge(params, [stmt], [comms])
    return NizkProof(commitments=comms, challenge=e,
                     responses=respond(params, stmt, state, witness, e))


def verify(params: GroupParams, stmt: SigmaStatement, proof: NizkProof) -> bool:
    if proof.challenge != compute_challenge(params, [stmt], [proof.commitments]):
        return False
    return check_transcript(params, stmt, proof.commitments, proof.challenge, proof.responses)


def and_compose(params: GroupParams, statements: Sequence[SigmaStatement],
                witnesses: Sequence, rng) -> AndProof:
    """One shared challenge over all statements and all commitments.
    All commitments are produced before the hash (two-phase contract)."""
    if len(statements) != len(witnesses):
        raise ConfigError("statement/witness count mismatch")
    if not statements:
        raise ConfigError("empty AND batch")
    pairs = [commit(params, s, rng) for s in statements]
    all_comms = [p[0] for p in pairs]
    e = compute_challenge(params, statements, all_comms)
    resps = tuple(respond(params, s, st, w, e)
                  for s, (_, st), w in zip(statements, pairs, witnesses))
    return AndProof(commitments=tuple(all_comms), challenge=e, responses=resps)


def verify_and(params: GroupParams, statements: Sequence[SigmaStatement],
               proof: AndProof) -> bool:
    """Any sub-proof failure fails the whole batch."""
    if len(proof.commitments) != len(statements) or len(proof.responses) != len(statements):
        return False
    if proof.challenge != compute_challenge(params, statements, proof.commitments):
        return False
    return all(
        check_transcript(params, s, c, proof.challenge, r)
        for s, c, r in zip(statements, proof.commitments, proof.responses)
    )


# -- per-relation conveniences ---------------------------------------------------

def prove_plain(params, pk, ct, m, r, rng) -> NizkProof:
    """Plaintext knowledge of an ElGamal ciphertext under pk."""
    return prove(params, plain_statement(pk, ct), (m, r), rng)


def verify_plain(params, pk, ct, proof: NizkProof) -> bool:
    return verify(params, plain_statement(pk, ct), proof)


def prove_dec_zero(params, pk, ct, sk, rng) -> NizkProof:
    """The ciphertext decrypts to zero under the prover's key."""
    return prove(params, dec_zero_statement(pk, ct), (sk,), rng)


def verify_dec_zero(params, pk, ct, proof: NizkProof) -> bool:
    return verify(params, dec_zero_statement(pk, ct), proof)


def prove_blind(params, ct, blinded_ct, r, rng) -> NizkProof:
    """The second ciphertext is the first raised to the witness."""
    return prove(params, blind_statement(ct, blinded_ct), (r,), rng)


def verify_blind(params, ct, blinded_ct, proof: NizkProof) -> bool:
    return verify(params, blind_statement(ct, blinded_ct), proof)


def prove_partial(params, pk_i, ct, partial_ct, sk_i, rng) -> NizkProof:
    """The partial ciphertext removes the prover's share sk_i from ct."""
    return prove(params, partial_statement(pk_i, ct, partial_ct), (sk_i,), rng)


def verify_partial(params, pk_i, ct, partial_ct, proof: NizkProof) -> bool:
    return verify(params, partial_statement(pk_i, ct, partial_ct), proof)


# -- wire encodings ------------------------------------------------------------

def proof_to_bytes(params: GroupParams, proof: NizkProof) -> bytes:
    """commitments || challenge || responses, each field fixed-length."""
    out = b"".join(params.encode(c) for c in proof.commitments)
    out += proof.challenge.to_bytes(CHALLENGE_LEN, "big")
    out += b"".join(params.encode_scalar(z) for z in proof.responses)
    return out


def proof_from_bytes(params: GroupParams, relation: SigmaRelation, data: bytes) -> NizkProof:
    _, n_comm, n_resp = _ARITY[relation]
    el, sl = params.encoding_len, params.scalar_len
    want = n_comm * el + CHALLENGE_LEN + n_resp * sl
    if len(data) != want:
        raise ConfigError(f"{relation.value} proof must be {want} bytes, got {len(data)}")
    pos = 0
    comms = []
    for _ in range(n_comm):
        comms.append(params.decode(data[pos:pos + el]))
        pos += el
    e = int.from_bytes(data[pos:pos + CHALLENGE_LEN], "big")
    pos += CHALLENGE_LEN
    resps = []
    for _ in range(n_resp):
        resps.append(params.decode_scalar(data[pos:pos + sl]))
        pos += sl
    return NizkProof(commitments=tuple(comms), challenge=e, responses=tuple(resps))


def and_to_bytes(params: GroupParams, proof: AndProof) -> bytes:
    out = [len(proof.commitments).to_bytes(4, "big")]
    for comms in proof.commitments:
        out.extend(params.encode(c) for c in comms)
    out.append(proof.challenge.to_bytes(CHALLENGE_LEN, "big"))
    for resps in proof.responses:
        out.extend(params.encode_scalar(z) for z in resps)
    return b"".join(out)


def and_from_bytes(params: GroupParams, relation: SigmaRelation, data: bytes) -> AndProof:
    """Homogeneous batch layout; the relation comes from protocol context."""
    _, n_comm, n_resp = _ARITY[relation]
    el, sl = params.encoding_len, params.scalar_len
    if len(data) < 4:
        raise ConfigError("truncated AND proof")
    count = int.from_bytes(data[:4], "big")
    want = 4 + count * n_comm * el + CHALLENGE_LEN + count * n_resp * sl
    if len(data) != want:
        raise ConfigError(f"AND proof must be {want} bytes for {count} statements")
    pos = 4
    all_comms = []
    for _ in range(count):
        comms = []
        for _ in range(n_comm):
            comms.append(params.decode(data[pos:pos + el]))
            pos += el
        all_comms.append(tuple(comms))
    e = int.from_bytes(data[pos:pos + CHALLENGE_LEN], "big")
    pos += CHALLENGE_LEN
    all_resps = []
    for _ in range(count):
        resps = []
        for _ in range(n_resp):
            resps.append(params.decode_scalar(data[pos:pos + sl]))
            pos += sl
        all_resps.append(tuple(resps))
    return AndProof(commitments=tuple(all_comms), challenge=e, responses=tuple(all_resps))
