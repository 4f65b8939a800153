"""Semi-honest enrollment and verification as explicit client/server state
machines.

Enrollment encrypts the selected lookup-table rows under the joint key and
parks them at the server.  Verification: the client multiplies its selected
encrypted scores into one final-score ciphertext and re-randomizes it; the
server answers with the blinded, permuted, partially decrypted comparison
vector over [theta, s_max]; the client final-decrypts and looks for a zero.

Honest parties only: the attacks module demonstrates exactly how this
breaks against a misbehaving peer, and the malicious-model protocol fixes
it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import elgamal as eg
from .classifier import LookupTableSet, bin_borders, quantize_vector
from .elgamal import Ciphertext, JointPublicKey, KeyTag
from .errors import ConfigError
from .group import GroupParams, random_nonzero_scalar
from .templates import TemplateSH
from .transport import (
    Abort,
    ComparisonVector,
    EnrollSH,
    FinalScore,
    Outcome,
    TemplateReply,
    VerifyRequest,
)


@dataclass(frozen=True)
class ShConfig:
    params: GroupParams
    tables: LookupTableSet
    joint: JointPublicKey


def quantize_features(tables: LookupTableSet, features) -> np.ndarray:
    f = np.asarray(features, dtype=float)
    if f.shape != (tables.k,):
        raise ConfigError(f"feature vector must have length {tables.k}")
    return quantize_vector(f, bin_borders(tables.n))


def enroll_sh(cfg: ShConfig, uid: bytes, features, rng) -> TemplateSH:
    """Quantize, select one table row per feature, encrypt every cell of the
    selected rows under the joint key."""
    f_hat = quantize_features(cfg.tables, features)
    pk = cfg.joint.pk_joint
    rows = []
    for i, fh in enumerate(f_hat):
        cells = cfg.tables.tables[i, fh]
        rows.append(tuple(
            eg.encrypt_rng(cfg.params, pk, int(c), rng, KeyTag.JOINT) for c in cells))
    return TemplateSH(uid=uid, rows=tuple(rows))


def select_product(template: TemplateSH, probe_hat) -> Ciphertext:
    """Product of the ciphertexts at column b_i of row i: the encrypted
    final score, before re-randomization."""
    acc = template.rows[0][int(probe_hat[0])]
    for i in range(1, template.k):
        acc = eg.add(acc, template.rows[i][int(probe_hat[i])])
    return acc


def client_score_sh(cfg: ShConfig, template: TemplateSH, probe_hat, rng) -> Ciphertext:
    """Encrypted final score, re-randomized so the server cannot match it
    against products of template entries."""
    raw = select_product(template, probe_hat)
    r0 = random_nonzero_scalar(cfg.params, rng)
    return eg.rerandomize(cfg.params, cfg.joint.pk_joint, raw, r0)


def server_compare_sh(cfg: ShConfig, sk_ser: int, score_ct: Ciphertext, rng):
    """Blinded comparison vector: for each t in [theta, s_max], blind
    (score - t) with a fresh nonzero value, shuffle, partially decrypt."""
    params = cfg.params
    pk = cfg.joint.pk_joint
    entries = []
    for t in range(cfg.tables.theta, cfg.tables.s_max + 1):
        enc_t = eg.encrypt_rng(params, pk, t, rng, KeyTag.JOINT)
        a_t = random_nonzero_scalar(params, rng)
        entries.append(eg.blind(eg.sub(score_ct, enc_t), a_t))
    rng.shuffle(entries)  # permutation is never persisted
    return tuple(
        eg.partial_decrypt(params, sk_ser, c, KeyTag.PARTIAL_BY_SERVER) for c in entries)


def client_decide_sh(cfg: ShConfig, sk_clt: int, cts, early_exit: bool = False):
    """Final decryption: match iff some entry is zero.

    Scans the whole vector by default so the runtime does not depend on the
    outcome; ``early_exit`` restores the stop-at-first-zero behaviour for
    timing comparisons.
    """
    zeros = 0
    for c in cts:
        if eg.is_zero(cfg.params, sk_clt, c):
            zeros += 1
            if early_exit:
                break
    return (Outcome.MATCH if zeros else Outcome.NO_MATCH), zeros


class Party:
    """Minimal state-machine shell shared by both protocols."""

    role = "party"

    def __init__(self):
        self.done = False
        self.outcome: Outcome | None = None
        self.abort_reason: str | None = None
        self.phase = "init"

    def _abort(self, reason: str):
        self.outcome = Outcome.ABORT
        self.abort_reason = reason
        self.done = True
        return [Abort()]

    def _peer_abort(self):
        self.outcome = Outcome.ABORT
        self.abort_reason = "peer-abort"
        self.done = True
        return []

    def handle(self, msg):
        if self.done:
            return []
        if isinstance(msg, Abort):
            return self._peer_abort()
        return self._dispatch(msg)

    def _dispatch(self, msg):
        raise NotImplementedError


class ShClient(Party):
    role = "client"

    def __init__(self, cfg: ShConfig, sk_clt: int, uid: bytes, probe_features,
                 rng, early_exit: bool = False):
        super().__init__()
        self.cfg = cfg
        self.sk = sk_clt
        self.uid = uid
        self.probe_hat = quantize_features(cfg.tables, probe_features)
        self.rng = rng
        self.early_exit = early_exit
        self.raw_score_ct: Ciphertext | None = None  # pre-rerandomization product
        self.zero_count = 0

    def start(self):
        self.phase = "await_template"
        return [VerifyRequest(uid=self.uid)]

    def _dispatch(self, msg):
        if self.phase == "await_template" and isinstance(msg, TemplateReply):
            t = msg.template
            if t.k != self.cfg.tables.k or t.n != self.cfg.tables.n:
                return self._abort("template-shape")
            self.raw_score_ct = select_product(t, self.probe_hat)
            r0 = random_nonzero_scalar(self.cfg.params, self.rng)
            ct = eg.rerandomize(self.cfg.params, self.cfg.joint.pk_joint, self.raw_score_ct, r0)
            self.phase = "await_vector"
            return [FinalScore(ct=ct)]
        if self.phase == "await_vector" and isinstance(msg, ComparisonVector):
            if len(msg.cts) != self.cfg.tables.window_len:
                return self._abort("vector-length")
            self.outcome, self.zero_count = client_decide_sh(
                self.cfg, self.sk, msg.cts, self.early_exit)
            self.done = True
            return []
        return self._abort(f"unexpected-{type(msg).__name__}-in-{self.phase}")


class ShServer(Party):
    role = "server"

    def __init__(self, cfg: ShConfig, sk_ser: int, store, rng):
        super().__init__()
        self.cfg = cfg
        self.sk = sk_ser
        self.store = store
        self.rng = rng
        self.phase = "idle"

    def _dispatch(self, msg):
        if isinstance(msg, EnrollSH):
            t = msg.template
            if t.k != self.cfg.tables.k or t.n != self.cfg.tables.n:
                return self._abort("template-shape")
            self.store.put_sh(msg.uid, t)
            return []
        if self.phase == "idle" and isinstance(msg, VerifyRequest):
            try:
                template = self.store.get_sh(msg.uid)
            except Exception:
                return self._abort("unknown-uid")
            self.phase = "await_score"
            return [TemplateReply(template=template)]
        if self.phase == "await_score" and isinstance(msg, FinalScore):
            cts = server_compare_sh(self.cfg, self.sk, msg.ct, self.rng)
            self.outcome = Outcome.COMPLETED
            self.done = True
            return [ComparisonVector(cts=cts)]
        return self._abort(f"unexpected-{type(msg).__name__}-in-{self.phase}")
