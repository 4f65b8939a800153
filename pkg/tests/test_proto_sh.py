import hashlib
import itertools
import random

import numpy as np
import pytest

from helr import elgamal as eg
from helr import proto_sh as sh
from helr.classifier import LookupTableSet, bin_borders, score
from helr.elgamal import KeyTag
from helr.harness import (
    enroll_user,
    expected_outcome,
    make_client,
    make_server,
    run_verification,
)
from helr.transport import (
    ComparisonVector,
    EnrollSH,
    FinalScore,
    Outcome,
    VerifyRequest,
    replay_transcript,
    run_session,
    serialize,
    tcp_pair,
)


def _borders_value(tables, hat):
    # a raw feature value quantizing to the wanted bin
    bb = bin_borders(tables.n)
    edges = [-3.0] + list(bb.borders) + [3.0]
    return (edges[hat] + edges[hat + 1]) / 2


class TestEnrollment:
    def test_template_shape_k1_n3(self, params96, keys96):
        _, _, joint = keys96
        ts = LookupTableSet(tables=np.arange(9, dtype=np.int32).reshape(1, 3, 3) % 5,
                            delta=1.0, theta=0, s_max=4)
        cfg = sh.ShConfig(params=params96, tables=ts, joint=joint)
        t = sh.enroll_sh(cfg, b"u", [0.0], random.Random(1))
        assert t.k == 1 and t.n == 3
        assert len(t.rows[0]) == 3

    def test_template_rows_decrypt_to_selected_rows(self, tiny_dep):
        dep = tiny_dep
        template = dep.server_store.get_sh(b"tiny-user")
        f_hat = sh.quantize_features(dep.tables, dep.enrolled[b"tiny-user"])
        for i in range(dep.tables.k):
            for j in range(dep.tables.n):
                c = template.rows[i][j]
                p = eg.partial_decrypt(dep.params, dep.server_kp.sk, c,
                                       KeyTag.PARTIAL_BY_SERVER)
                val = eg.decrypt(dep.params, dep.client_kp.sk, p, -500, 500)
                assert val == dep.tables.tables[i, f_hat[i], j]

    def test_reenrollment_is_ciphertext_distinct(self, tiny_dep):
        dep = tiny_dep
        feats = dep.enrolled[b"tiny-user"]
        t1 = sh.enroll_sh(dep.sh_cfg, b"x", feats, random.Random(1))
        t2 = sh.enroll_sh(dep.sh_cfg, b"x", feats, random.Random(2))
        assert t1.rows[0][0] != t2.rows[0][0]

    def test_feature_length_mismatch(self, tiny_dep):
        with pytest.raises(Exception):
            sh.enroll_sh(tiny_dep.sh_cfg, b"u", [0.0, 0.0, 0.0], random.Random(1))


class TestScoring:
    def test_zero_tables_score_zero(self, params96, keys96):
        _, _, joint = keys96
        ts = LookupTableSet(tables=np.zeros((2, 3, 3), np.int32), delta=1.0,
                            theta=0, s_max=0)
        cfg = sh.ShConfig(params=params96, tables=ts, joint=joint)
        rng = random.Random(3)
        t = sh.enroll_sh(cfg, b"u", [0.0, 0.0], rng)
        s_ct = sh.client_score_sh(cfg, t, [1, 2], rng)
        p = eg.partial_decrypt(params96, keys96[1].sk, s_ct, KeyTag.PARTIAL_BY_SERVER)
        assert eg.decrypt(params96, keys96[0].sk, p, -10, 10) == 0

    def test_score_ciphertext_matches_plaintext(self, tiny_dep):
        dep = tiny_dep
        template = dep.server_store.get_sh(b"tiny-user")
        rng = random.Random(7)
        f_hat = sh.quantize_features(dep.tables, dep.enrolled[b"tiny-user"])
        for b_hat in itertools.product(range(3), repeat=2):
            s_ct = sh.client_score_sh(dep.sh_cfg, template, list(b_hat), rng)
            p = eg.partial_decrypt(dep.params, dep.server_kp.sk, s_ct,
                                   KeyTag.PARTIAL_BY_SERVER)
            got = eg.decrypt(dep.params, dep.client_kp.sk, p, -500, 500)
            assert got == score(dep.tables, f_hat, np.array(b_hat))

    def test_rerandomization_applied(self, tiny_dep):
        dep = tiny_dep
        template = dep.server_store.get_sh(b"tiny-user")
        raw = sh.select_product(template, [0, 0])
        out = sh.client_score_sh(dep.sh_cfg, template, [0, 0], random.Random(9))
        assert out.u != raw.u and out.v != raw.v


class TestComparison:
    def _vector_for_score(self, dep, s, seed=5):
        rng = random.Random(seed)
        s_ct = eg.encrypt_rng(dep.params, dep.joint.pk_joint, s, rng, KeyTag.JOINT)
        return sh.server_compare_sh(dep.sh_cfg, dep.server_kp.sk, s_ct, rng)

    def test_boundary_at_theta(self, tiny_dep):
        dep = tiny_dep
        vec = self._vector_for_score(dep, dep.tables.theta)
        decision, zeros = sh.client_decide_sh(dep.sh_cfg, dep.client_kp.sk, vec)
        assert decision is Outcome.MATCH and zeros == 1

    def test_boundary_below_theta(self, tiny_dep):
        dep = tiny_dep
        vec = self._vector_for_score(dep, dep.tables.theta - 1)
        decision, zeros = sh.client_decide_sh(dep.sh_cfg, dep.client_kp.sk, vec)
        assert decision is Outcome.NO_MATCH and zeros == 0

    def test_boundary_at_s_max(self, tiny_dep):
        dep = tiny_dep
        vec = self._vector_for_score(dep, dep.tables.s_max)
        assert len(vec) == dep.tables.window_len
        decision, zeros = sh.client_decide_sh(dep.sh_cfg, dep.client_kp.sk, vec)
        assert decision is Outcome.MATCH and zeros == 1

    def test_window_length_86_for_declared_bounds(self, params96, keys96):
        # theta=14, s_max=99 declared: the window has exactly 86 entries
        _, _, joint = keys96
        rng = np.random.default_rng(0)
        cells = rng.integers(0, 50, size=(2, 4, 4)).astype(np.int32)
        ts = LookupTableSet(tables=cells, delta=0.5, theta=14, s_max=99)
        assert ts.window_len == 86
        dep_cfg = sh.ShConfig(params=params96, tables=ts, joint=joint)
        srng = random.Random(1)
        s_ct = eg.encrypt_rng(params96, joint.pk_joint, 40, srng, KeyTag.JOINT)
        vec = sh.server_compare_sh(dep_cfg, keys96[1].sk, s_ct, srng)
        assert len(vec) == 86
        _, zeros = sh.client_decide_sh(dep_cfg, keys96[0].sk, vec)
        assert zeros == 1

    def test_early_exit_stops_at_first_zero(self, tiny_dep):
        dep = tiny_dep
        vec = self._vector_for_score(dep, dep.tables.s_max)
        decision, zeros = sh.client_decide_sh(dep.sh_cfg, dep.client_kp.sk, vec,
                                              early_exit=True)
        assert decision is Outcome.MATCH and zeros == 1


class TestSessions:
    def test_exhaustive_tiny_correctness(self, tiny_dep):
        # every quantized template/probe combination at k=2, n=3
        dep = tiny_dep
        for f_hat in itertools.product(range(3), repeat=2):
            uid = f"sh-{f_hat}".encode()
            feats = [_borders_value(dep.tables, h) for h in f_hat]
            enroll_user(dep, uid, feats, "sh", seed=1)
            for b_hat in itertools.product(range(3), repeat=2):
                probe = [_borders_value(dep.tables, h) for h in b_hat]
                res = run_verification(dep, uid, probe, "sh",
                                       seed=b_hat[0] * 3 + b_hat[1])
                assert res.client_outcome == expected_outcome(dep, uid, probe)
                assert res.server_outcome is Outcome.COMPLETED

    def test_zero_multiplicity_over_sessions(self, small_dep):
        dep = small_dep
        for i in range(8):
            probe = dep.genuine_probes[i]
            client = make_client(dep, "sh", b"small-user", probe, seed=i)
            server = make_server(dep, "sh", seed=i)
            run_session(dep.params, client, server)
            if client.outcome is Outcome.MATCH:
                assert client.zero_count == 1
            else:
                assert client.zero_count == 0

    def test_unknown_uid_aborts(self, small_dep):
        res = run_verification(small_dep, b"ghost", small_dep.genuine_probes[0], "sh", seed=0)
        assert res.client_outcome is Outcome.ABORT
        assert res.server_outcome is Outcome.ABORT

    def test_template_shape_mismatch_aborts_client(self, small_dep, tiny_dep):
        # a reply shaped for different tables is rejected before scoring
        dep = small_dep
        client = make_client(dep, "sh", b"small-user", dep.genuine_probes[0], seed=0)
        client.start()
        wrong = tiny_dep.server_store.get_sh(b"tiny-user")
        from helr.transport import TemplateReply
        out = client.handle(TemplateReply(template=wrong))
        assert client.outcome is Outcome.ABORT and client.abort_reason == "template-shape"
        assert out and out[0].MSG_TYPE == 0x7F

    def test_vector_length_mismatch_aborts_client(self, small_dep):
        dep = small_dep
        client = make_client(dep, "sh", b"small-user", dep.genuine_probes[0], seed=0)
        client.start()
        template = dep.server_store.get_sh(b"small-user")
        from helr.transport import TemplateReply
        client.handle(TemplateReply(template=template))
        short = ComparisonVector(cts=tuple())
        client.handle(short)
        assert client.outcome is Outcome.ABORT and client.abort_reason == "vector-length"

    def test_enrollment_message_path(self, small_dep, params96):
        dep = small_dep
        from helr.store import InMemoryStore

        store = InMemoryStore()
        server = sh.ShServer(dep.sh_cfg, dep.server_kp.sk, store, random.Random(4))
        template = sh.enroll_sh(dep.sh_cfg, b"wire-user",
                                dep.enrolled[b"small-user"], random.Random(5))
        assert server.handle(EnrollSH(uid=b"wire-user", template=template)) == []
        reply = server.handle(VerifyRequest(uid=b"wire-user"))
        assert len(reply) == 1 and isinstance(reply[0], type(reply[0]))
        assert store.get_sh(b"wire-user") == template

    def test_session_message_sequence(self, small_dep):
        # template reply, final score, comparison vector: three rounds
        dep = small_dep
        res = run_verification(dep, b"small-user", dep.genuine_probes[0], "sh", seed=2)
        types = [frame[1] for _, frame in res.transcript]
        assert types == [0x02, 0x03, 0x04, 0x05]
        senders = [sender for sender, _ in res.transcript]
        assert senders == ["client", "server", "client", "server"]

    def test_tcp_channel_session(self, small_dep):
        dep = small_dep
        res = run_verification(dep, b"small-user", dep.genuine_probes[0], "sh",
                               seed=3, channel=tcp_pair(timeout=10.0))
        assert res.client_outcome == expected_outcome(dep, b"small-user",
                                                      dep.genuine_probes[0])

    def test_transcript_replay_reproduces_decision(self, small_dep):
        dep = small_dep
        probe = dep.genuine_probes[1]
        res = run_verification(dep, b"small-user", probe, "sh", seed=14)
        fresh = make_client(dep, "sh", b"small-user", probe, seed=14)
        outcome = replay_transcript(dep.params, res.transcript, fresh, "client")
        assert outcome == res.client_outcome
        fresh_srv = make_server(dep, "sh", seed=14)
        assert replay_transcript(dep.params, res.transcript, fresh_srv,
                                 "server") == res.server_outcome


class TestServerObliviousness:
    def test_final_score_message_reveals_nothing(self, tiny_dep):
        # the server's informative view is the re-randomized score ciphertext;
        # a keyless hash-parity distinguisher stays at chance level
        dep = tiny_dep
        template = dep.server_store.get_sh(b"tiny-user")
        rng = random.Random(2222)
        f_hat = sh.quantize_features(dep.tables, dep.enrolled[b"tiny-user"])
        hi = [int(x) for x in f_hat]          # matching probe (score >= theta)
        lo = next(list(combo) for combo in itertools.product(range(3), repeat=2)
                  if score(dep.tables, f_hat, np.array(combo)) < dep.tables.theta)
        assert score(dep.tables, f_hat, np.array(hi)) >= dep.tables.theta
        hits = 0
        trials = 1000
        for _ in range(trials):
            ct_hi = sh.client_score_sh(dep.sh_cfg, template, hi, rng)
            ct_lo = sh.client_score_sh(dep.sh_cfg, template, lo, rng)
            frames = [(serialize(dep.params, FinalScore(ct=ct_hi)), True),
                      (serialize(dep.params, FinalScore(ct=ct_lo)), False)]
            assert len(frames[0][0]) == len(frames[1][0])  # shape identical
            rng.shuffle(frames)
            guess_is_match = hashlib.sha256(frames[0][0]).digest()[0] & 1 == 0
            hits += frames[0][1] == guess_is_match
        assert 0.42 <= hits / trials <= 0.58
