"""Template and threshold-vector types shared by the protocols, the wire
format and the stores, with their canonical byte layouts.

All counts and lengths are big-endian; ciphertexts and signatures use their
fixed-length encodings, so every layout is self-delimiting.
"""

from __future__ import annotations

from dataclasses import dataclass

from .elgamal import Ciphertext, KeyTag, ct_from_bytes, ct_to_bytes
from .errors import DecodeError
from .group import GroupParams
from .signatures import Signature, sig_from_bytes, sig_to_bytes


@dataclass(frozen=True)
class TemplateSH:
    """Encrypted selected lookup-table rows: row i holds the n joint-key
    encryptions of table i's selected row."""

    uid: bytes
    rows: tuple[tuple[Ciphertext, ...], ...]

    @property
    def k(self) -> int:
        return len(self.rows)

    @property
    def n(self) -> int:
        return len(self.rows[0]) if self.rows else 0


@dataclass(frozen=True)
class MalComponent:
    """One malicious-model template entry: located by index r, carrying the
    client-key encryption of its column position, the joint-key encryption
    of the score, and the two enrollment signatures."""

    r: int
    col_ct: Ciphertext
    score_ct: Ciphertext
    sigma: Signature
    alpha: Signature


@dataclass(frozen=True)
class TemplateMAL:
    uid: bytes
    features: tuple[tuple[MalComponent, ...], ...]  # each sorted by r

    @property
    def k(self) -> int:
        return len(self.features)

    @property
    def n(self) -> int:
        return len(self.features[0]) if self.features else 0


@dataclass(frozen=True)
class ThresholdVector:
    """Joint-key encryptions of the integers theta..s_max in an order only
    the enrollment server ever knew; stored identically by both parties."""

    theta: int
    s_max: int
    cts: tuple[Ciphertext, ...]

    def __post_init__(self):
        if len(self.cts) != self.s_max - self.theta + 1:
            raise DecodeError("threshold vector length must be s_max - theta + 1")


def _take(data: bytes, pos: int, n: int):
    if pos + n > len(data):
        raise DecodeError("truncated structure")
    return data[pos:pos + n], pos + n


def _uid_bytes(uid: bytes) -> bytes:
    if len(uid) > 0xFFFF:
        raise DecodeError("uid too long")
    return len(uid).to_bytes(2, "big") + uid


def _read_uid(data: bytes, pos: int):
    raw, pos = _take(data, pos, 2)
    return _take(data, pos, int.from_bytes(raw, "big"))


def sh_template_to_bytes(params: GroupParams, t: TemplateSH) -> bytes:
    out = [_uid_bytes(t.uid), t.k.to_bytes(4, "big"), t.n.to_bytes(4, "big")]
    for row in t.rows:
        out.extend(ct_to_bytes(params, c) for c in row)
    return b"".join(out)


def sh_template_from_bytes(params: GroupParams, data: bytes, pos: int = 0):
    uid, pos = _read_uid(data, pos)
    raw, pos = _take(data, pos, 8)
    k = int.from_bytes(raw[:4], "big")
    n = int.from_bytes(raw[4:], "big")
    cl = 2 * params.encoding_len
    rows = []
    for _ in range(k):
        row = []
        for _ in range(n):
            raw, pos = _take(data, pos, cl)
            row.append(ct_from_bytes(params, raw, KeyTag.JOINT))
        rows.append(tuple(row))
    return TemplateSH(uid=uid, rows=tuple(rows)), pos


def mal_template_to_bytes(params: GroupParams, t: TemplateMAL) -> bytes:
    out = [_uid_bytes(t.uid), t.k.to_bytes(4, "big"), t.n.to_bytes(4, "big")]
    for comps in t.features:
        for c in comps:
            out.append(c.r.to_bytes(4, "big"))
            out.append(ct_to_bytes(params, c.col_ct))
            out.append(ct_to_bytes(params, c.score_ct))
            out.append(sig_to_bytes(params, c.sigma))
            out.append(sig_to_bytes(params, c.alpha))
    return b"".join(out)


def mal_template_from_bytes(params: GroupParams, data: bytes, pos: int = 0):
    uid, pos = _read_uid(data, pos)
    raw, pos = _take(data, pos, 8)
    k = int.from_bytes(raw[:4], "big")
    n = int.from_bytes(raw[4:], "big")
    cl = 2 * params.encoding_len
    sl = 16 + params.scalar_len
    feats = []
    for _ in range(k):
        comps = []
        for _ in range(n):
            raw, pos = _take(data, pos, 4)
            r = int.from_bytes(raw, "big")
            raw, pos = _take(data, pos, cl)
            col_ct = ct_from_bytes(params, raw, KeyTag.CLIENT)
            raw, pos = _take(data, pos, cl)
            score_ct = ct_from_bytes(params, raw, KeyTag.JOINT)
            raw, pos = _take(data, pos, sl)
            sigma = sig_from_bytes(params, raw)
            raw, pos = _take(data, pos, sl)
            alpha = sig_from_bytes(params, raw)
            comps.append(MalComponent(r=r, col_ct=col_ct, score_ct=score_ct,
                                      sigma=sigma, alpha=alpha))
        feats.append(tuple(comps))
    return TemplateMAL(uid=uid, features=tuple(feats)), pos


def theta_vector_to_bytes(params: GroupParams, tv: ThresholdVector) -> bytes:
    out = [tv.theta.to_bytes(8, "big", signed=True),
           tv.s_max.to_bytes(8, "big", signed=True),
           len(tv.cts).to_bytes(4, "big")]
    out.extend(ct_to_bytes(params, c) for c in tv.cts)
    return b"".join(out)


def theta_vector_from_bytes(params: GroupParams, data: bytes, pos: int = 0):
    raw, pos = _take(data, pos, 20)
    theta = int.from_bytes(raw[:8], "big", signed=True)
    s_max = int.from_bytes(raw[8:16], "big", signed=True)
    count = int.from_bytes(raw[16:], "big")
    cl = 2 * params.encoding_len
    cts = []
    for _ in range(count):
        raw, pos = _take(data, pos, cl)
        cts.append(ct_from_bytes(params, raw, KeyTag.JOINT))
    return ThresholdVector(theta=theta, s_max=s_max, cts=tuple(cts)), pos
