"""Deployment fixtures: key material for all parties, enrollment into
stores, honest verification runs and the plaintext decision oracle.

Everything is deterministic under a seed.  One deployment serves any number
of enrollments and sessions; per-session randomness comes from derived
seeds so concurrent or replayed sessions reproduce exactly.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

import numpy as np

from . import elgamal as eg
from . import signatures as sg
from .classifier import LookupTableSet, score
from .elgamal import JointPublicKey, KeyPair
from .errors import ConfigError
from .group import GroupParams, params_for_level
from .proto_mal import ClientSecretsMAL, MalClient, MalConfig, MalServer, enroll_mal
from .proto_sh import ShClient, ShConfig, ShServer, enroll_sh, quantize_features
from .store import InMemoryStore
from .transport import Outcome, SessionResult, run_session


def derive_rng(*parts) -> random.Random:
    """Seed derivation that is stable across processes (unlike hash())."""
    material = b"|".join(str(p).encode() if not isinstance(p, bytes) else p for p in parts)
    return random.Random(int.from_bytes(hashlib.sha256(material).digest(), "big"))


@dataclass
class Deployment:
    params: GroupParams
    tables: LookupTableSet
    client_kp: KeyPair          # client threshold share
    server_kp: KeyPair          # server threshold share
    joint: JointPublicKey
    client_secrets: ClientSecretsMAL
    enr_keys: sg.SigKeyPair     # enrollment server; used only at enrollment
    sh_cfg: ShConfig
    mal_cfg: MalConfig
    server_store: InMemoryStore = field(default_factory=InMemoryStore)
    client_store: InMemoryStore = field(default_factory=InMemoryStore)
    enrolled: dict = field(default_factory=dict)  # uid -> raw feature vector


def make_deployment(level: int, tables: LookupTableSet, seed: int = 0,
                    server_store=None, client_store=None) -> Deployment:
    params = params_for_level(level)
    rng = random.Random(seed)
    client_kp = eg.keygen(params, rng)
    server_kp = eg.keygen(params, rng)
    joint = eg.joint_keygen(client_kp, server_kp, params)
    plain_kp = eg.keygen(params, rng)
    prp_master = rng.randbytes(32)
    enr_keys = sg.sig_keygen(params, rng)
    client_secrets = ClientSecretsMAL(sk=client_kp.sk, plain=plain_kp, prp_master=prp_master)
    sh_cfg = ShConfig(params=params, tables=tables, joint=joint)
    mal_cfg = MalConfig(params=params, tables=tables, joint=joint,
                        client_plain_pk=plain_kp.pk, enr_vk=enr_keys.verification_key)
    dep = Deployment(params=params, tables=tables, client_kp=client_kp,
                     server_kp=server_kp, joint=joint, client_secrets=client_secrets,
                     enr_keys=enr_keys, sh_cfg=sh_cfg, mal_cfg=mal_cfg)
    if server_store is not None:
        dep.server_store = server_store
    if client_store is not None:
        dep.client_store = client_store
    return dep


def enroll_user(dep: Deployment, uid: bytes, features, protocol: str, seed: int = 0):
    """Enroll under one protocol; 'both' runs the two enrollments off the
    same feature vector."""
    rng = derive_rng(b"enroll", seed, uid)
    if protocol in ("sh", "both"):
        template = enroll_sh(dep.sh_cfg, uid, features, rng)
        dep.server_store.put_sh(uid, template)
    if protocol in ("mal", "both"):
        template, tv = enroll_mal(dep.mal_cfg, uid, features, dep.client_secrets,
                                  dep.enr_keys, rng)
        dep.server_store.put_mal(uid, template, tv)
        dep.client_store.put_theta(uid, tv)
    if protocol not in ("sh", "mal", "both"):
        raise ConfigError(f"unknown protocol {protocol!r}")
    dep.enrolled[uid] = np.asarray(features, dtype=float)


def make_client(dep: Deployment, protocol: str, uid: bytes, probe, seed: int,
                early_exit: bool = False):
    rng = derive_rng(b"client", seed, uid)
    if protocol == "sh":
        return ShClient(dep.sh_cfg, dep.client_kp.sk, uid, probe, rng, early_exit)
    if protocol == "mal":
        tv = dep.client_store.get_theta(uid)
        return MalClient(dep.mal_cfg, dep.client_secrets, uid, probe, tv, rng, early_exit)
    raise ConfigError(f"unknown protocol {protocol!r}")


def make_server(dep: Deployment, protocol: str, seed: int):
    rng = derive_rng(b"server", seed)
    if protocol == "sh":
        return ShServer(dep.sh_cfg, dep.server_kp.sk, dep.server_store, rng)
    if protocol == "mal":
        return MalServer(dep.mal_cfg, dep.server_kp.sk, dep.server_store, rng)
    raise ConfigError(f"unknown protocol {protocol!r}")


def run_verification(dep: Deployment, uid: bytes, probe, protocol: str, seed: int = 0,
                     channel=None, hook=None, early_exit: bool = False) -> SessionResult:
    client = make_client(dep, protocol, uid, probe, seed, early_exit)
    server = make_server(dep, protocol, seed)
    return run_session(dep.params, client, server, channel=channel, hook=hook)


def plaintext_decision(dep: Deployment, uid: bytes, probe) -> bool:
    """The rule both protocols must reproduce: quantized table score >= theta."""
    return plaintext_score(dep, uid, probe) >= dep.tables.theta


def plaintext_score(dep: Deployment, uid: bytes, probe) -> int:
    features = dep.enrolled[uid]
    f_hat = quantize_features(dep.tables, features)
    b_hat = quantize_features(dep.tables, probe)
    return score(dep.tables, f_hat, b_hat)


def expected_outcome(dep: Deployment, uid: bytes, probe) -> Outcome:
    return Outcome.MATCH if plaintext_decision(dep, uid, probe) else Outcome.NO_MATCH


def pick_balanced_theta(tables, model, seed: int = 0, pairs: int = 2000) -> int:
    """Threshold at the genuine-score median, so sessions exercise both
    decision paths.  FMR-calibrated thresholds come from theta_at_fmr."""
    from .classifier import score_pairs, synth_pairs

    rng = np.random.default_rng(seed)
    a, b = synth_pairs(model, pairs, True, rng)
    theta = int(np.median(score_pairs(tables, a, b)))
    return max(min(theta, tables.s_max), tables.s_min + 1)
