"""Malicious-model enrollment and the four-step verification protocol.

Enrollment (run by the trusted enrollment server together with the client)
reshapes the template: every cell becomes (index, column-position encrypted
under the client's own key, score encrypted under the joint key) plus two
signatures binding those pieces to the user id.  A permuted encrypted
threshold vector is handed to both parties; nobody online knows its order.

Verification forces both sides to prove their work: the client proves
plaintext knowledge of its encrypted probe and that the components it asked
for match that probe (decrypt-to-zero proofs); the server proves that the
comparison vector it returns is a blinding of the jointly-computed one and
that its partial decryption is genuine.  Any failed check aborts, and
an abort is deliberately distinguishable from a no-match.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from . import elgamal as eg
from . import sigma
from . import signatures as sg
from .classifier import LookupTableSet
from .elgamal import Ciphertext, JointPublicKey, KeyPair, KeyTag, ct_to_bytes
from .errors import ConfigError
from .group import GroupElement, GroupParams, random_nonzero_scalar, random_scalar
from .proto_sh import Party, quantize_features
from .templates import MalComponent, TemplateMAL, ThresholdVector
from .transport import Outcome, Step1, Step2, Step3a, Step3b, Step4a, Step4b


@dataclass(frozen=True)
class MalConfig:
    params: GroupParams
    tables: LookupTableSet
    joint: JointPublicKey  # pk_1 = client share, pk_2 = server share
    client_plain_pk: GroupElement  # the client's own (non-threshold) key
    enr_vk: GroupElement  # enrollment server's verification key


@dataclass(frozen=True)
class ClientSecretsMAL:
    sk: int  # threshold share
    plain: KeyPair  # encrypts probe and column positions
    prp_master: bytes  # derives the per-user per-feature index permutations


def prp_permutation(master: bytes, uid: bytes, feature: int, n: int) -> list[int]:
    """Keyed small-domain permutation over [0, n): component j gets index
    perm[j].  Derived per (uid, feature) from the client's master secret."""
    seed_material = sg.frame_fields(b"helr/prp", master, uid,
                                    feature.to_bytes(4, "big"), n.to_bytes(4, "big"))
    seed = int.from_bytes(hashlib.sha256(seed_material).digest(), "big")
    perm = list(range(n))
    random.Random(seed).shuffle(perm)
    return perm


def _sigma_payload(params: GroupParams, r: int, col_ct: Ciphertext, uid: bytes) -> bytes:
    return sg.frame_fields(r.to_bytes(4, "big"), ct_to_bytes(params, col_ct), uid)


def _alpha_payload(params: GroupParams, col_ct: Ciphertext, score_ct: Ciphertext,
                   uid: bytes) -> bytes:
    return sg.frame_fields(ct_to_bytes(params, col_ct), ct_to_bytes(params, score_ct), uid)


def enroll_mal(cfg: MalConfig, uid: bytes, features, client: ClientSecretsMAL,
               sig_kp: sg.SigKeyPair, rng) -> tuple[TemplateMAL, ThresholdVector]:
    """Build the signed, index-permuted template and the permuted encrypted
    threshold vector.  Runs in one trusted process; the signing key never
    leaves it."""
    params = cfg.params
    tables = cfg.tables
    f_hat = quantize_features(tables, features)
    pk_joint = cfg.joint.pk_joint
    feats = []
    for i in range(tables.k):
        perm = prp_permutation(client.prp_master, uid, i, tables.n)
        comps = []
        for j in range(tables.n):
            col_ct = eg.encrypt_rng(params, client.plain.pk, j, rng, KeyTag.CLIENT)
            score = int(tables.tables[i, f_hat[i], j])
            score_ct = eg.encrypt_rng(params, pk_joint, score, rng, KeyTag.JOINT)
            sigma_sig = sg.sign(params, sig_kp, _sigma_payload(params, perm[j], col_ct, uid), rng)
            alpha_sig = sg.sign(params, sig_kp, _alpha_payload(params, col_ct, score_ct, uid), rng)
            comps.append(MalComponent(r=perm[j], col_ct=col_ct, score_ct=score_ct,
                                      sigma=sigma_sig, alpha=alpha_sig))
        comps.sort(key=lambda c: c.r)  # ordering by index hides column positions
        feats.append(tuple(comps))
    vals = list(range(tables.theta, tables.s_max + 1))
    rng.shuffle(vals)  # the order is discarded with this rng state
    theta_cts = tuple(eg.encrypt_rng(params, pk_joint, v, rng, KeyTag.JOINT) for v in vals)
    tv = ThresholdVector(theta=tables.theta, s_max=tables.s_max, cts=theta_cts)
    return TemplateMAL(uid=uid, features=tuple(feats)), tv


def accumulate_score(score_cts) -> Ciphertext:
    """Deterministic product in ascending feature order; both parties must
    derive byte-identical ciphertexts, so no re-randomization anywhere."""
    acc = score_cts[0]
    for ct in score_cts[1:]:
        acc = eg.add(acc, ct)
    return acc


def comparison_vector(score_ct: Ciphertext, tv: ThresholdVector):
    """C_t = score - Theta_t, in the stored threshold-vector order."""
    return tuple(eg.sub(score_ct, t) for t in tv.cts)


class MalClient(Party):
    role = "client"

    def __init__(self, cfg: MalConfig, secrets: ClientSecretsMAL, uid: bytes,
                 probe_features, theta_vec: ThresholdVector, rng,
                 early_exit: bool = False):
        super().__init__()
        if theta_vec.theta != cfg.tables.theta or theta_vec.s_max != cfg.tables.s_max:
            raise ConfigError("threshold vector does not match the table parameters")
        self.cfg = cfg
        self.secrets = secrets
        self.uid = uid
        self.probe_hat = quantize_features(cfg.tables, probe_features)
        self.theta_vec = theta_vec
        self.rng = rng
        self.early_exit = early_exit
        self.zero_count = 0
        self._probe_cts: tuple[Ciphertext, ...] = ()
        self._indexes: tuple[int, ...] = ()
        self._col_cts: list[Ciphertext] = []
        self._col_bytes: list[bytes] = []
        self.s_ct: Ciphertext | None = None
        self.c_cts: tuple[Ciphertext, ...] = ()

    def start(self):
        params = self.cfg.params
        pk = self.secrets.plain.pk
        cts, stmts, wits, idx = [], [], [], []
        for i, fh in enumerate(self.probe_hat):
            r = random_scalar(params, self.rng)
            ct = eg.encrypt(params, pk, int(fh), r, KeyTag.CLIENT)
            cts.append(ct)
            stmts.append(sigma.plain_statement(pk, ct))
            wits.append((int(fh), r))
            perm = prp_permutation(self.secrets.prp_master, self.uid, i, self.cfg.tables.n)
            idx.append(perm[int(fh)])
        proof = sigma.and_compose(params, stmts, wits, self.rng)
        self._probe_cts = tuple(cts)
        self._indexes = tuple(idx)
        self.phase = "await_step3a"
        return [Step1(uid=self.uid), Step2(probe_cts=self._probe_cts,
                                           indexes=self._indexes, proof=proof)]

    def _dispatch(self, msg):
        if self.phase == "await_step3a" and isinstance(msg, Step3a):
            return self._on_step3a(msg)
        if self.phase == "await_step4a" and isinstance(msg, Step4a):
            return self._on_step4a(msg)
        if self.phase == "await_step4b" and isinstance(msg, Step4b):
            return self._on_step4b(msg)
        return self._abort(f"unexpected-{type(msg).__name__}-in-{self.phase}")

    def _on_step3a(self, msg: Step3a):
        params = self.cfg.params
        if len(msg.halves) != self.cfg.tables.k:
            return self._abort("step3a-count")
        # authenticity first, then prove the components match the probe
        for i, (r, col_ct, sigma_sig) in enumerate(msg.halves):
            if r != self._indexes[i]:
                return self._abort("index-mismatch")
            if not sg.verify(params, self.cfg.enr_vk,
                             _sigma_payload(params, r, col_ct, self.uid), sigma_sig):
                return self._abort("sigma-verify")
        self._col_cts = [h[1] for h in msg.halves]
        self._col_bytes = [ct_to_bytes(params, c) for c in self._col_cts]
        stmts, wits = [], []
        for p_ct, col_ct in zip(self._probe_cts, self._col_cts):
            stmts.append(sigma.dec_zero_statement(self.secrets.plain.pk, eg.sub(p_ct, col_ct)))
            wits.append((self.secrets.plain.sk,))
        proof = sigma.and_compose(params, stmts, wits, self.rng)
        self.phase = "await_step4a"
        return [Step3b(proof=proof)]

    def _on_step4a(self, msg: Step4a):
        params = self.cfg.params
        if len(msg.halves) != self.cfg.tables.k:
            return self._abort("step4a-count")
        for i, (col_ct, score_ct, alpha_sig) in enumerate(msg.halves):
            if ct_to_bytes(params, col_ct) != self._col_bytes[i]:
                return self._abort("column-mismatch")
            if not sg.verify(params, self.cfg.enr_vk,
                             _alpha_payload(params, col_ct, score_ct, self.uid), alpha_sig):
                return self._abort("alpha-verify")
        self.s_ct = accumulate_score([h[1] for h in msg.halves])
        self.c_cts = comparison_vector(self.s_ct, self.theta_vec)
        self.phase = "await_step4b"
        return []

    def _on_step4b(self, msg: Step4b):
        params = self.cfg.params
        win = self.cfg.tables.window_len
        if len(msg.blinded) != win or len(msg.partials) != win:
            return self._abort("step4b-count")
        blind_stmts, partial_stmts = [], []
        pk_ser = self.cfg.joint.pk_2
        for c_ct, a_ct, p_ct in zip(self.c_cts, msg.blinded, msg.partials):
            if p_ct.u != a_ct.u:
                return self._abort("partial-u-mismatch")
            blind_stmts.append(sigma.blind_statement(c_ct, a_ct))
            partial_stmts.append(sigma.partial_statement(pk_ser, a_ct, p_ct))
        if not sigma.verify_and(params, blind_stmts, msg.blind_proof):
            return self._abort("blind-verify")
        if not sigma.verify_and(params, partial_stmts, msg.partial_proof):
            return self._abort("partial-verify")
        zeros = 0
        for p_ct in msg.partials:
            if eg.is_zero(params, self.secrets.sk, p_ct):
                zeros += 1
                if self.early_exit:
                    break
        self.zero_count = zeros
        self.outcome = Outcome.MATCH if zeros else Outcome.NO_MATCH
        self.done = True
        return []


class MalServer(Party):
    role = "server"

    def __init__(self, cfg: MalConfig, sk_ser: int, store, rng):
        super().__init__()
        self.cfg = cfg
        self.sk = sk_ser
        self.store = store
        self.rng = rng
        self.phase = "await_step1"
        self._template: TemplateMAL | None = None
        self._theta_vec: ThresholdVector | None = None
        self._by_index: list[dict[int, MalComponent]] = []
        self._located: list[MalComponent] = []
        self._probe_cts: tuple[Ciphertext, ...] = ()
        self.s_ct: Ciphertext | None = None
        self.c_cts: tuple[Ciphertext, ...] = ()

    def _dispatch(self, msg):
        if self.phase == "await_step1" and isinstance(msg, Step1):
            return self._on_step1(msg)
        if self.phase == "await_step2" and isinstance(msg, Step2):
            return self._on_step2(msg)
        if self.phase == "await_step3b" and isinstance(msg, Step3b):
            return self._on_step3b(msg)
        return self._abort(f"unexpected-{type(msg).__name__}-in-{self.phase}")

    def _on_step1(self, msg: Step1):
        try:
            template, tv = self.store.get_mal(msg.uid)
        except Exception:
            return self._abort("unknown-uid")
        tables = self.cfg.tables
        if (template.k != tables.k or template.n != tables.n
                or tv.theta != tables.theta or tv.s_max != tables.s_max):
            return self._abort("template-shape")
        self._template = template
        self._theta_vec = tv
        self._uid = msg.uid
        self._by_index = [{c.r: c for c in comps} for comps in template.features]
        self.phase = "await_step2"
        return []

    def _on_step2(self, msg: Step2):
        params = self.cfg.params
        k = self.cfg.tables.k
        if len(msg.probe_cts) != k or len(msg.indexes) != k:
            return self._abort("step2-count")
        stmts = [sigma.plain_statement(self.cfg.client_plain_pk, ct) for ct in msg.probe_cts]
        if not sigma.verify_and(params, stmts, msg.proof):
            return self._abort("plain-verify")
        located = []
        for i, r in enumerate(msg.indexes):
            comp = self._by_index[i].get(r)
            if comp is None:
                return self._abort("unknown-index")
            located.append(comp)
        self._located = located
        self._probe_cts = msg.probe_cts
        self.phase = "await_step3b"
        return [Step3a(halves=tuple((c.r, c.col_ct, c.sigma) for c in located))]

    def _on_step3b(self, msg: Step3b):
        params = self.cfg.params
        stmts = [
            sigma.dec_zero_statement(self.cfg.client_plain_pk, eg.sub(p_ct, comp.col_ct))
            for p_ct, comp in zip(self._probe_cts, self._located)
        ]
        if not sigma.verify_and(params, stmts, msg.proof):
            return self._abort("deczero-verify")
        step4a = Step4a(halves=tuple((c.col_ct, c.score_ct, c.alpha) for c in self._located))

        self.s_ct = accumulate_score([c.score_ct for c in self._located])
        self.c_cts = comparison_vector(self.s_ct, self._theta_vec)
        blinded, partials = [], []
        blind_stmts, blind_wits = [], []
        partial_stmts, partial_wits = [], []
        pk_ser = self.cfg.joint.pk_2
        for c_ct in self.c_cts:
            a_t = random_nonzero_scalar(params, self.rng)
            a_ct = eg.blind(c_ct, a_t)
            p_ct = eg.partial_decrypt(params, self.sk, a_ct, KeyTag.PARTIAL_BY_SERVER)
            blinded.append(a_ct)
            partials.append(p_ct)
            blind_stmts.append(sigma.blind_statement(c_ct, a_ct))
            blind_wits.append((a_t,))
            partial_stmts.append(sigma.partial_statement(pk_ser, a_ct, p_ct))
            partial_wits.append((self.sk,))
        blind_proof = sigma.and_compose(params, blind_stmts, blind_wits, self.rng)
        partial_proof = sigma.and_compose(params, partial_stmts, partial_wits, self.rng)
        self.outcome = Outcome.COMPLETED
        self.done = True
        return [step4a, Step4b(blinded=tuple(blinded), partials=tuple(partials),
                               blind_proof=blind_proof, partial_proof=partial_proof)]
