"""Prime-order group layer: NIST prime curves, canonical point encoding,
challenge hashing and a bounded discrete log.

Everything curve-specific stays in this module.  Scalars are plain Python
ints reduced modulo the group order; points are immutable ``GroupElement``
values.  Field arithmetic runs on gmpy2 integers, with Jacobian coordinates
for scalar multiplication and optional per-point window tables
(``GroupElement.precompute``) for bases that are reused many times (the
generator, long-lived public keys).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable

import gmpy2
from gmpy2 import mpz

from .errors import ConfigError, DecodeError, NotInRangeError

# Challenge bit length for every proof and signature in the package.
CHALLENGE_BITS = 128
CHALLENGE_LEN = CHALLENGE_BITS // 8

_WINDOW = 4  # nibble windows for scalar multiplication

# (p, b, q, gx, gy); a = p - 3 for all three curves
_CURVES = {
    96: (
        "P-192",
        0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFFFFFFFFFFFF,
        0x64210519E59C80E70FA7E9AB72243049FEB8DEECC146B9B1,
        0xFFFFFFFFFFFFFFFFFFFFFFFF99DEF836146BC9B1B4D22831,
        0x188DA80EB03090F67CBF20EB43A18800F4FF0AFD82FF1012,
        0x07192B95FFC8DA78631011ED6B24CDD573F977A11E794811,
    ),
    112: (
        "P-224",
        0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFF000000000000000000000001,
        0xB4050A850C04B3ABF54132565044B0B7D7BFD8BA270B39432355FFB4,
        0xFFFFFFFFFFFFFFFFFFFFFFFFFFFF16A2E0B8F03E13DD29455C5C2A3D,
        0xB70E0CBD6BB4BF7F321390B94A03C1D356C21122343280D6115C1D21,
        0xBD376388B5F723FB4C22DFE6CD4375A05A07476444D5819985007E34,
    ),
    128: (
        "P-256",
        0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF,
        0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B,
        0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551,
        0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296,
        0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5,
    ),
}


class _Curve:
    """Curve constants plus low-level Jacobian arithmetic."""

    __slots__ = ("name", "p", "a", "b", "q", "gx", "gy", "field_len", "scalar_len")

    def __init__(self, name, p, b, q, gx, gy):
        self.name = name
        self.p = mpz(p)
        self.a = mpz(p - 3)
        self.b = mpz(b)
        self.q = int(q)
        self.gx = mpz(gx)
        self.gy = mpz(gy)
        self.field_len = (p.bit_length() + 7) // 8
        self.scalar_len = (q.bit_length() + 7) // 8

    # Jacobian points are (X, Y, Z) mpz triples; None is the identity.

    def jac_double(self, P):
        if P is None:
            return None
        p = self.p
        X1, Y1, Z1 = P
        if Y1 == 0:
            return None
        delta = Z1 * Z1 % p
        gamma = Y1 * Y1 % p
        beta = X1 * gamma % p
        alpha = 3 * (X1 - delta) * (X1 + delta) % p
        X3 = (alpha * alpha - 8 * beta) % p
        Z3 = ((Y1 + Z1) ** 2 - gamma - delta) % p
        Y3 = (alpha * (4 * beta - X3) - 8 * gamma * gamma) % p
        return (X3, Y3, Z3)

    def jac_add(self, P, Q):
        if P is None:
            return Q
        if Q is None:
            return P
        p = self.p
        X1, Y1, Z1 = P
        X2, Y2, Z2 = Q
        Z1Z1 = Z1 * Z1 % p
        Z2Z2 = Z2 * Z2 % p
        U1 = X1 * Z2Z2 % p
        U2 = X2 * Z1Z1 % p
        S1 = Y1 * Z2 * Z2Z2 % p
        S2 = Y2 * Z1 * Z1Z1 % p
        if U1 == U2:
            if S1 != S2:
                return None
            return self.jac_double(P)
        H = (U2 - U1) % p
        I = 4 * H * H % p
        J = H * I % p
        r = 2 * (S2 - S1) % p
        V = U1 * I % p
        X3 = (r * r - J - 2 * V) % p
        Y3 = (r * (V - X3) - 2 * S1 * J) % p
        Z3 = ((Z1 + Z2) ** 2 - Z1Z1 - Z2Z2) % p * H % p
        return (X3, Y3, Z3)

    def jac_add_affine(self, P, ax, ay):
        """Mixed addition: Jacobian P plus affine (ax, ay)."""
        if P is None:
            return (ax, ay, mpz(1))
        p = self.p
        X1, Y1, Z1 = P
        Z1Z1 = Z1 * Z1 % p
        U2 = ax * Z1Z1 % p
        S2 = ay * Z1 * Z1Z1 % p
        if U2 == X1:
            if S2 != Y1:
                return None
            return self.jac_double(P)
        H = (U2 - X1) % p
        HH = H * H % p
        I = 4 * HH % p
        J = H * I % p
        r = 2 * (S2 - Y1) % p
        V = X1 * I % p
        X3 = (r * r - J - 2 * V) % p
        Y3 = (r * (V - X3) - 2 * Y1 * J) % p
        Z3 = ((Z1 + H) ** 2 - Z1Z1 - HH) % p
        return (X3, Y3, Z3)

    def to_affine(self, P):
        if P is None:
            return None
        p = self.p
        X, Y, Z = P
        zi = gmpy2.invert(Z, p)
        zi2 = zi * zi % p
        return (X * zi2 % p, Y * zi2 * zi % p)

    def batch_to_affine(self, points):
        """Normalize several Jacobian points with a single field inversion."""
        p = self.p
        idx = [i for i, P in enumerate(points) if P is not None]
        if not idx:
            return [None] * len(points)
        acc = mpz(1)
        partials = []
        for i in idx:
            partials.append(acc)
            acc = acc * points[i][2] % p
        inv = gmpy2.invert(acc, p)
        out = [None] * len(points)
        for j in range(len(idx) - 1, -1, -1):
            i = idx[j]
            X, Y, Z = points[i]
            zi = inv * partials[j] % p
            inv = inv * Z % p
            zi2 = zi * zi % p
            out[i] = (X * zi2 % p, Y * zi2 * zi % p)
        return out

    def _window_table(self, ax, ay):
        """Affine table [1..15]*P for one window."""
        jac = [None] * 16
        jac[1] = (ax, ay, mpz(1))
        for i in range(2, 16):
            jac[i] = self.jac_add_affine(jac[i - 1], ax, ay)
        aff = self.batch_to_affine(jac[1:])
        return [None] + aff

    def mul_window(self, tbl, k):
        """k * P by 4-bit windows over P's table, Jacobian accumulator."""
        if k == 0:
            return None
        nibbles = []
        while k:
            nibbles.append(k & 15)
            k >>= 4
        acc = None
        jd = self.jac_double
        for nib in reversed(nibbles):
            if acc is not None:
                acc = jd(jd(jd(jd(acc))))
            if nib:
                pt = tbl[nib]
                if pt is not None:
                    acc = self.jac_add_affine(acc, pt[0], pt[1])
        return self.to_affine(acc)

    def dual_mul(self, tp, kp, tq, kq):
        """kp*P + kq*Q with shared doublings, given both window tables."""
        if tp is None or kp == 0:
            return self.mul_window(tq, kq) if tq is not None else None
        if tq is None or kq == 0:
            return self.mul_window(tp, kp)
        bits = max(kp.bit_length(), kq.bit_length())
        steps = (bits + 3) // 4
        acc = None
        jd = self.jac_double
        for s in range(steps - 1, -1, -1):
            if acc is not None:
                acc = jd(jd(jd(jd(acc))))
            np_ = (kp >> (4 * s)) & 15
            nq = (kq >> (4 * s)) & 15
            if np_:
                pt = tp[np_]
                if pt is not None:
                    acc = self.jac_add_affine(acc, pt[0], pt[1])
            if nq:
                pt = tq[nq]
                if pt is not None:
                    acc = self.jac_add_affine(acc, pt[0], pt[1])
        return self.to_affine(acc)

    def comb_tables(self, ax, ay):
        """Window tables for 16^d * P, one per nibble position of a scalar.

        Turns later multiplications by this base into ~|q|/4 mixed additions
        with no doublings.
        """
        rows = []
        cur = (ax, ay)
        steps = (self.q.bit_length() + 3) // 4
        for _ in range(steps):
            rows.append(self._window_table(cur[0], cur[1]))
            j = (cur[0], cur[1], mpz(1))
            for _ in range(4):
                j = self.jac_double(j)
            cur = self.to_affine(j)
            if cur is None:  # order reached; remaining rows never used
                break
        return rows

    def mul_comb(self, rows, k):
        acc = None
        i = 0
        while k:
            nib = k & 15
            if nib:
                pt = rows[i][nib]
                if pt is not None:
                    acc = self.jac_add_affine(acc, pt[0], pt[1])
            k >>= 4
            i += 1
        return self.to_affine(acc)

    def sqrt_mod_p(self, v):
        """Square root modulo p, or None if v is a non-residue."""
        p = self.p
        if v == 0:
            return mpz(0)
        if gmpy2.legendre(v, p) != 1:
            return None
        if p % 4 == 3:
            return gmpy2.powmod(v, (p + 1) // 4, p)
        # Tonelli-Shanks (P-224 has p = 1 mod 4)
        s, d = 0, p - 1
        while d % 2 == 0:
            d //= 2
            s += 1
        z = mpz(2)
        while gmpy2.legendre(z, p) != -1:
            z += 1
        m, c = s, gmpy2.powmod(z, d, p)
        t = gmpy2.powmod(v, d, p)
        r = gmpy2.powmod(v, (d + 1) // 2, p)
        while t != 1:
            t2 = t
            i = 0
            while t2 != 1:
                t2 = t2 * t2 % p
                i += 1
            bexp = gmpy2.powmod(c, 1 << (m - i - 1), p)
            m, c = i, bexp * bexp % p
            t = t * c % p
            r = r * bexp % p
        return r

    def on_curve(self, x, y):
        return (y * y - (x * x * x + self.a * x + self.b)) % self.p == 0


class GroupElement:
    """Immutable point in the prime-order group.

    ``x is None`` encodes the identity.  ``precompute()`` attaches window
    tables that speed up every later scalar multiplication by this element;
    use it for generators and long-lived public keys.
    """

    __slots__ = ("curve", "x", "y", "_comb", "_tbl")

    def __init__(self, curve: _Curve, x, y):
        self.curve = curve
        self.x = x
        self.y = y
        self._comb = None
        self._tbl = None

    @property
    def is_identity(self) -> bool:
        return self.x is None

    def precompute(self) -> "GroupElement":
        if self._comb is None and self.x is not None:
            self._comb = self.curve.comb_tables(self.x, self.y)
        return self

    def _window(self):
        # lazy per-element window table; reused by mul and dual_mul
        if self._tbl is None and self.x is not None:
            self._tbl = self.curve._window_table(self.x, self.y)
        return self._tbl

    def __add__(self, other: "GroupElement") -> "GroupElement":
        c = self.curve
        if self.x is None:
            return other
        if other.x is None:
            return self
        p = c.p
        if self.x == other.x:
            if (self.y + other.y) % p == 0:
                return GroupElement(c, None, None)
            # doubling via affine formulas
            lam = (3 * self.x * self.x + c.a) * gmpy2.invert(2 * self.y, p) % p
        else:
            lam = (other.y - self.y) * gmpy2.invert(other.x - self.x, p) % p
        x3 = (lam * lam - self.x - other.x) % p
        y3 = (lam * (self.x - x3) - self.y) % p
        return GroupElement(c, x3, y3)

    def __neg__(self) -> "GroupElement":
        if self.x is None:
            return self
        return GroupElement(self.curve, self.x, (-self.y) % self.curve.p)

    def __sub__(self, other: "GroupElement") -> "GroupElement":
        return self + (-other)

    def mul(self, k: int) -> "GroupElement":
        """Scalar multiplication; k is reduced modulo the group order."""
        c = self.curve
        k = k % c.q
        if k == 0 or self.x is None:
            return GroupElement(c, None, None)
        if self._comb is not None:
            aff = c.mul_comb(self._comb, k)
        else:
            aff = c.mul_window(self._window(), k)
        if aff is None:
            return GroupElement(c, None, None)
        return GroupElement(c, aff[0], aff[1])

    def __mul__(self, k: int) -> "GroupElement":
        return self.mul(k)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self.x == other.x and self.y == other.y and self.curve is other.curve

    def __hash__(self):
        return hash((self.x, self.y))

    def __repr__(self):
        if self.x is None:
            return f"<{self.curve.name} identity>"
        return f"<{self.curve.name} point x={int(self.x):#x}>"


@dataclass(frozen=True)
class GroupParams:
    """Fixed parameter set for one security level."""

    security_level: int
    group_order_q: int
    generator_g: GroupElement
    encoding_len: int
    curve: _Curve = field(repr=False)

    @property
    def q(self) -> int:
        return self.group_order_q

    @property
    def g(self) -> GroupElement:
        return self.generator_g

    @property
    def scalar_len(self) -> int:
        return self.curve.scalar_len

    def identity(self) -> GroupElement:
        return GroupElement(self.curve, None, None)

    def dual_mul(self, P: GroupElement, kp: int, Q: GroupElement, kq: int) -> GroupElement:
        """kp*P + kq*Q in one pass; cheaper than two separate mults."""
        kp %= self.q
        kq %= self.q
        # precomputed bases are faster through their own comb tables
        if P._comb is not None or Q._comb is not None:
            return P.mul(kp) + Q.mul(kq)
        aff = self.curve.dual_mul(P._window(), kp, Q._window(), kq)
        if aff is None:
            return self.identity()
        return GroupElement(self.curve, aff[0], aff[1])

    # -- canonical encodings ------------------------------------------------

    def encode(self, e: GroupElement) -> bytes:
        """Compressed fixed-length encoding; identity is all zero bytes."""
        if e.x is None:
            return b"\x00" * self.encoding_len
        tag = 0x02 | (int(e.y) & 1)
        return bytes([tag]) + int(e.x).to_bytes(self.curve.field_len, "big")

    def decode(self, data: bytes) -> GroupElement:
        if len(data) != self.encoding_len:
            raise DecodeError(f"expected {self.encoding_len} bytes, got {len(data)}")
        tag = data[0]
        if tag == 0x00:
            if any(data[1:]):
                raise DecodeError("non-canonical identity encoding")
            return self.identity()
        if tag not in (0x02, 0x03):
            raise DecodeError(f"bad point tag {tag:#x}")
        x = int.from_bytes(data[1:], "big")
        if x >= self.curve.p:
            raise DecodeError("x coordinate out of field range")
        xm = mpz(x)
        rhs = (xm * xm * xm + self.curve.a * xm + self.curve.b) % self.curve.p
        y = self.curve.sqrt_mod_p(rhs)
        if y is None:
            raise DecodeError("x coordinate not on curve")
        if (int(y) & 1) != (tag & 1):
            y = (-y) % self.curve.p
        return GroupElement(self.curve, xm, y)

    def encode_scalar(self, s: int) -> bytes:
        return (s % self.q).to_bytes(self.scalar_len, "big")

    def decode_scalar(self, data: bytes) -> int:
        if len(data) != self.scalar_len:
            raise DecodeError(f"expected {self.scalar_len} bytes, got {len(data)}")
        v = int.from_bytes(data, "big")
        if v >= self.q:
            raise DecodeError("scalar out of range")
        return v


_PARAMS_CACHE: dict[int, GroupParams] = {}


def params_for_level(level: int) -> GroupParams:
    """Fixed curve for a security level in {96, 112, 128} bits."""
    if level not in _CURVES:
        raise ConfigError(f"unsupported security level {level}; choose 96, 112 or 128")
    if level not in _PARAMS_CACHE:
        curve = _Curve(*_CURVES[level])
        g = GroupElement(curve, curve.gx, curve.gy).precompute()
        _PARAMS_CACHE[level] = GroupParams(
            security_level=level,
            group_order_q=curve.q,
            generator_g=g,
            encoding_len=curve.field_len + 1,
            curve=curve,
        )
    return _PARAMS_CACHE[level]


def random_scalar(params: GroupParams, rng) -> int:
    """Uniform scalar in [0, q)."""
    return rng.randrange(params.q)


def random_nonzero_scalar(params: GroupParams, rng) -> int:
    """Uniform scalar in [1, q); use for blinding values."""
    return rng.randrange(1, params.q)


def hash_challenge(domain_tag: bytes, inputs: Iterable[bytes]) -> int:
    """Deterministic 128-bit challenge over length-prefixed inputs.

    The domain tag separates the proof relations and the signature scheme;
    length prefixes make the input framing unambiguous.
    """
    h = hashlib.sha256()
    h.update(len(domain_tag).to_bytes(4, "big"))
    h.update(domain_tag)
    for part in inputs:
        h.update(len(part).to_bytes(4, "big"))
        h.update(part)
    return int.from_bytes(h.digest()[:CHALLENGE_LEN], "big")


def bounded_dlog(params: GroupParams, base: GroupElement, target: GroupElement,
                 lo: int, hi: int) -> int:
    """Find m in [lo, hi] with base^m = target, or raise NotInRangeError.

    Baby-step/giant-step over the window; plain scan below 1024 values.
    This is a range search, not a general discrete log.
    """
    if lo > hi:
        raise ConfigError("empty dlog window")
    span = hi - lo + 1
    if span > 1 << 32:
        raise ConfigError("dlog window exceeds 2^32")
    if base.is_identity:
        if target.is_identity and lo <= 0 <= hi:
            return 0
        raise NotInRangeError("identity base matches only exponent 0")

    if span < 1024:
        cur = base.mul(lo)
        for m in range(lo, hi + 1):
            if cur == target:
                return m
            cur = cur + base
        raise NotInRangeError(f"no exponent in [{lo}, {hi}]")

    m = gmpy2.isqrt(span) + 1
    baby = {}
    cur = params.identity()
    for j in range(m):
        baby.setdefault((cur.x, cur.y), j)
        cur = cur + base
    giant_step = base.mul(-m % params.q)
    gamma = target + base.mul(-lo % params.q)
    i = 0
    while i * m < span:
        j = baby.get((gamma.x, gamma.y))
        if j is not None:
            val = lo + i * m + j
            if val <= hi:
                return val
        gamma = gamma + giant_step
        i += 1
    raise NotInRangeError(f"no exponent in [{lo}, {hi}]")
