"""Scripted malicious strategies, run against both protocols.

Each script wraps honest state machines with a message hook; the honest
protocol code is never forked.  Against the semi-honest protocol the three
classic strategies succeed (forced match, probe recovery, forced no-match);
against the malicious-model protocol they abort or have no injection point.

The probe-recovery script needs the modeled oracle response: the score sum
before the client's re-randomization (the honest client records it).  The
re-randomized wire message itself is not decryptable by the attacker; the
defense shown by the hardened protocol does not depend on that modeling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import elgamal as eg
from . import sigma
from . import signatures as sg
from .classifier import build_tables, synthetic_model
from .elgamal import KeyTag
from .errors import ConfigError
from .group import random_nonzero_scalar, random_scalar
from .harness import (
    Deployment,
    derive_rng,
    enroll_user,
    make_client,
    make_deployment,
    make_server,
    plaintext_score,
)
from .transport import (
    ComparisonVector,
    FinalScore,
    Outcome,
    Step2,
    Step3a,
    Step3b,
    Step4b,
    TemplateReply,
    run_session,
)
from .templates import TemplateSH

ATTACK_K = 4
ATTACK_N = 8

# expected outcome per (script, protocol): the executable attack matrix
ATTACK_MATRIX = {
    ("encrypt-theta", "sh"): "success",
    ("encrypt-theta", "mal"): "inapplicable",
    ("crafted-template", "sh"): "success",
    ("crafted-template", "mal"): "abort",
    ("fake-comparison", "sh"): "success",
    ("fake-comparison", "mal"): "abort",
    ("probe-substitution", "sh"): "inapplicable",
    ("probe-substitution", "mal"): "abort",
}


@dataclass
class AttackReport:
    script: str
    protocol: str
    seed: int
    outcome: str  # success | abort | inapplicable | failed
    detail: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"script": self.script, "protocol": self.protocol,
                           "seed": self.seed, "outcome": self.outcome,
                           "detail": self.detail}, sort_keys=True)


@dataclass
class AttackFixture:
    dep: Deployment
    uid: bytes
    genuine_probe: np.ndarray
    impostor_probe: np.ndarray
    features: np.ndarray


@lru_cache(maxsize=4)
def _attack_tables(k: int, n: int):
    return build_tables(synthetic_model([0.8] * k), n, 0.5, theta=0)


@lru_cache(maxsize=64)
def make_attack_fixture(level: int, seed: int, k: int = ATTACK_K, n: int = ATTACK_N) -> AttackFixture:
    """Deterministic deployment with one enrolled user, a genuine probe and
    an impostor probe separated by the decision threshold.  Cached: attack
    runs only read from it."""
    base = _attack_tables(k, n)
    nrng = np.random.default_rng(seed)
    for _ in range(32):
        features = nrng.standard_normal(k)
        genuine = features  # same capture: lands on the diagonal cells
        impostor = -features
        dep0 = make_deployment(level, base, seed=seed)
        enroll_user(dep0, b"probe-target", features, "sh", seed=seed)
        s_gen = plaintext_score(dep0, b"probe-target", genuine)
        s_imp = plaintext_score(dep0, b"probe-target", impostor)
        if s_gen - s_imp >= 4:
            break
    else:
        raise ConfigError("could not separate genuine/impostor scores")
    theta = s_imp + (s_gen - s_imp + 1) // 2
    tables = base.with_theta(theta)
    dep = make_deployment(level, tables, seed=seed)
    uid = b"user-attack"
    enroll_user(dep, uid, features, "both", seed=seed)
    return AttackFixture(dep=dep, uid=uid, genuine_probe=genuine,
                         impostor_probe=impostor, features=features)


class _Script:
    name: str
    role: str
    applicable: tuple[str, ...]

    def probe(self, fx: AttackFixture) -> np.ndarray:
        raise NotImplementedError

    def build_hook(self, fx, protocol, client, server, rng, captured):
        raise NotImplementedError

    def evaluate(self, fx, protocol, client, server, result, captured) -> tuple[str, dict]:
        raise NotImplementedError


class EncryptTheta(_Script):
    """Malicious client replaces the final-score ciphertext with a fresh
    encryption of the public threshold, forcing a match."""

    name = "encrypt-theta"
    role = "client"
    applicable = ("sh",)
    inapplicable_reason = "both parties compute the score ciphertext; no client-sent score message exists"

    def probe(self, fx):
        return fx.impostor_probe  # honest run would be a no-match

    def build_hook(self, fx, protocol, client, server, rng, captured):
        params, joint, theta = fx.dep.params, fx.dep.joint, fx.dep.tables.theta

        def hook(sender, msg):
            if sender == "client" and isinstance(msg, FinalScore):
                forged = eg.encrypt(params, joint.pk_joint, theta,
                                    random_scalar(params, rng), KeyTag.JOINT)
                return FinalScore(ct=forged)
            return None

        return hook

    def evaluate(self, fx, protocol, client, server, result, captured):
        forced = result.client_outcome is Outcome.MATCH
        return ("success" if forced else "failed",
                {"forced_outcome": result.client_outcome.value})


class CraftedTemplate(_Script):
    """Malicious server serves a template whose target-feature row encodes
    the column index (1..n) under the server's own key and zeroes elsewhere,
    then decrypts the returned score sum to read the probe feature."""

    name = "crafted-template"
    role = "server"
    applicable = ("sh", "mal")
    target_feature = 0

    def probe(self, fx):
        return fx.genuine_probe

    def build_hook(self, fx, protocol, client, server, rng, captured):
        dep = fx.dep
        params = dep.params

        if protocol == "sh":
            def hook(sender, msg):
                if sender == "server" and isinstance(msg, TemplateReply):
                    rows = []
                    for i in range(dep.tables.k):
                        vals = (range(1, dep.tables.n + 1) if i == self.target_feature
                                else [0] * dep.tables.n)
                        rows.append(tuple(
                            eg.encrypt(params, dep.server_kp.pk, v,
                                       random_scalar(params, rng), KeyTag.JOINT)
                            for v in vals))
                    crafted = TemplateSH(uid=msg.template.uid, rows=tuple(rows))
                    return TemplateReply(template=crafted)
                return None

            return hook

        # malicious model: the crafted components carry signatures the
        # attacker forged with its own key, not the enrollment server's
        rogue = sg.sig_keygen(params, rng)

        def hook(sender, msg):
            if sender == "client" and isinstance(msg, Step2):
                captured["indexes"] = msg.indexes
            if sender == "server" and isinstance(msg, Step3a):
                from .proto_mal import _sigma_payload
                halves = []
                for i, r in enumerate(captured["indexes"]):
                    col_ct = eg.encrypt(params, dep.server_kp.pk, i,
                                        random_scalar(params, rng), KeyTag.CLIENT)
                    forged = sg.sign(params, rogue, _sigma_payload(params, r, col_ct, fx.uid), rng)
                    halves.append((r, col_ct, forged))
                return Step3a(halves=tuple(halves))
            return None

        return hook

    def evaluate(self, fx, protocol, client, server, result, captured):
        if protocol == "mal":
            ok = (result.client_outcome is Outcome.ABORT
                  and client.abort_reason == "sigma-verify")
            return ("abort" if ok else "failed",
                    {"abort_reason": client.abort_reason, "step": "3"})
        # modeled oracle: the pre-rerandomization sum is the client's response
        raw = client.raw_score_ct
        dep = fx.dep
        val = eg.decrypt(dep.params, dep.server_kp.sk, raw, 1, dep.tables.n)
        recovered = val - 1
        from .proto_sh import quantize_features
        true_val = int(quantize_features(dep.tables, self.probe(fx))[self.target_feature])
        ok = recovered == true_val
        return ("success" if ok else "failed",
                {"recovered_feature": recovered, "true_feature": true_val})


class FakeComparison(_Script):
    """Malicious server answers with encryptions of nonzero junk under the
    client's key instead of the genuine comparison vector, forcing a
    no-match on a genuine user."""

    name = "fake-comparison"
    role = "server"
    applicable = ("sh", "mal")

    def probe(self, fx):
        return fx.genuine_probe  # honest run is a match

    def build_hook(self, fx, protocol, client, server, rng, captured):
        dep = fx.dep
        params = dep.params
        win = dep.tables.window_len

        def junk(count, pk, tag):
            out = []
            for _ in range(count):
                m = random_nonzero_scalar(params, rng) % (1 << 30) + 1
                out.append(eg.encrypt(params, pk, m, random_scalar(params, rng), tag))
            return tuple(out)

        if protocol == "sh":
            def hook(sender, msg):
                if sender == "server" and isinstance(msg, ComparisonVector):
                    return ComparisonVector(cts=junk(win, dep.client_kp.pk,
                                                     KeyTag.PARTIAL_BY_SERVER))
                return None

            return hook

        def hook(sender, msg):
            if sender == "server" and isinstance(msg, Step4b):
                blinded = junk(win, dep.joint.pk_joint, KeyTag.JOINT)
                # structurally well-formed partials (sharing u) so the abort
                # demonstrably comes from the proof check, not a shape check
                partials = tuple(
                    eg.Ciphertext(u=a.u, v=j.v, key_tag=KeyTag.PARTIAL_BY_SERVER)
                    for a, j in zip(blinded, junk(win, dep.client_kp.pk,
                                                  KeyTag.PARTIAL_BY_SERVER)))
                blind_stmts = [sigma.blind_statement(c, a)
                               for c, a in zip(server.c_cts, blinded)]
                partial_stmts = [sigma.partial_statement(dep.joint.pk_2, a, p)
                                 for a, p in zip(blinded, partials)]
                # no valid witnesses exist for these statements; random ones
                # produce well-formed proof bytes that cannot verify
                blind_proof = sigma.and_compose(
                    params, blind_stmts,
                    [(random_scalar(params, rng),)] * win, rng)
                partial_proof = sigma.and_compose(
                    params, partial_stmts,
                    [(random_scalar(params, rng),)] * win, rng)
                return Step4b(blinded=blinded, partials=partials,
                              blind_proof=blind_proof, partial_proof=partial_proof)
            return None

        return hook

    def evaluate(self, fx, protocol, client, server, result, captured):
        if protocol == "sh":
            forced = result.client_outcome is Outcome.NO_MATCH
            return ("success" if forced else "failed",
                    {"forced_outcome": result.client_outcome.value})
        ok = (result.client_outcome is Outcome.ABORT
              and client.abort_reason in ("blind-verify", "partial-verify"))
        return ("abort" if ok else "failed",
                {"abort_reason": client.abort_reason,
                 "distinguished_from_no_match": result.client_outcome is not Outcome.NO_MATCH})


class ProbeSubstitution(_Script):
    """Malicious client proves its decrypt-to-zero statements against a
    different probe than the one it committed to in step 2 (one feature
    substituted); the server's verification catches it."""

    name = "probe-substitution"
    role = "client"
    applicable = ("mal",)
    inapplicable_reason = "the semi-honest protocol has no proof step to cheat on"

    def probe(self, fx):
        return fx.genuine_probe

    def build_hook(self, fx, protocol, client, server, rng, captured):
        dep = fx.dep
        params = dep.params

        def hook(sender, msg):
            if sender == "client" and isinstance(msg, Step3b):
                plain = dep.client_secrets.plain
                stmts = []
                for i, col_ct in enumerate(client._col_cts):
                    if i == 0:
                        sub_val = (int(client.probe_hat[0]) + 1) % dep.tables.n
                        p_ct = eg.encrypt(params, plain.pk, sub_val,
                                          random_scalar(params, rng), KeyTag.CLIENT)
                    else:
                        p_ct = client._probe_cts[i]
                    stmts.append(sigma.dec_zero_statement(plain.pk, eg.sub(p_ct, col_ct)))
                proof = sigma.and_compose(params, stmts,
                                          [(plain.sk,)] * len(stmts), rng)
                return Step3b(proof=proof)
            return None

        return hook

    def evaluate(self, fx, protocol, client, server, result, captured):
        ok = (result.server_outcome is Outcome.ABORT
              and server.abort_reason == "deczero-verify")
        return ("abort" if ok else "failed",
                {"abort_reason": server.abort_reason, "step": "3"})


SCRIPTS = {s.name: s for s in (EncryptTheta(), CraftedTemplate(),
                               FakeComparison(), ProbeSubstitution())}


def run_attack(script_name: str, protocol: str, seed: int, level: int = 96) -> AttackReport:
    """Run one scripted attack; deterministic given the seed."""
    if script_name not in SCRIPTS:
        raise ConfigError(f"unknown attack script {script_name!r}; "
                          f"choose from {sorted(SCRIPTS)}")
    if protocol not in ("sh", "mal"):
        raise ConfigError("protocol must be sh or mal")
    script = SCRIPTS[script_name]
    fx = make_attack_fixture(level, seed)

    if protocol not in script.applicable:
        honest = run_session(
            fx.dep.params,
            make_client(fx.dep, protocol, fx.uid, script.probe(fx), seed),
            make_server(fx.dep, protocol, seed))
        return AttackReport(script=script_name, protocol=protocol, seed=seed,
                            outcome="inapplicable",
                            detail={"reason": script.inapplicable_reason,
                                    "honest_outcome": honest.client_outcome.value})

    rng = derive_rng(b"attack", script_name, protocol, seed)
    captured: dict = {}
    client = make_client(fx.dep, protocol, fx.uid, script.probe(fx), seed)
    server = make_server(fx.dep, protocol, seed)
    hook = script.build_hook(fx, protocol, client, server, rng, captured)
    result = run_session(fx.dep.params, client, server, hook=hook)
    outcome, detail = script.evaluate(fx, protocol, client, server, result, captured)
    return AttackReport(script=script_name, protocol=protocol, seed=seed,
                        outcome=outcome, detail=detail)


def run_control(script_name: str, protocol: str, seed: int, level: int = 96) -> Outcome:
    """Honest session with the same fixture and probe as the attack run."""
    script = SCRIPTS[script_name]
    fx = make_attack_fixture(level, seed)
    result = run_session(
        fx.dep.params,
        make_client(fx.dep, protocol, fx.uid, script.probe(fx), seed),
        make_server(fx.dep, protocol, seed))
    return result.client_outcome
