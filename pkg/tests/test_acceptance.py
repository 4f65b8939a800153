"""Acceptance suite.

Every criterion runs at its stated tolerance and prints one pass/fail line
(run with ``pytest tests/test_acceptance.py -v -s``).  The heavyweight
session loops split across a small process pool; sessions are independent
and every seed is fixed, so results are identical in any pool layout.
"""

import itertools
import math
import multiprocessing
import os
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

from helr import classifier as cl
from helr import elgamal as eg
from helr import sigma
from helr.attacks import ATTACK_MATRIX, run_attack
from helr.elgamal import KeyTag
from helr.group import params_for_level, random_nonzero_scalar, random_scalar
from helr.harness import (
    enroll_user,
    expected_outcome,
    make_client,
    make_deployment,
    make_server,
    pick_balanced_theta,
    plaintext_score,
    run_verification,
)
from helr.templates import mal_template_to_bytes, sh_template_to_bytes
from helr.transport import Outcome, run_session, serialize, deserialize

POOL_SIZE = max(1, min(4, os.cpu_count() or 1))


@contextmanager
def criterion(num, label):
    try:
        yield
    except BaseException:
        print(f"\n[acceptance] criterion {num} ({label}): FAIL", flush=True)
        raise
    print(f"\n[acceptance] criterion {num} ({label}): PASS", flush=True)


def _pool_map(fn, items):
    if POOL_SIZE == 1:
        return [fn(it) for it in items]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(POOL_SIZE) as pool:
        return pool.map(fn, items, chunksize=max(1, len(items) // (POOL_SIZE * 8)))


# -- criterion 1: oracle equivalence -------------------------------------------

_C1 = {}


def _c1_setup():
    if _C1:
        return
    nrng = np.random.default_rng(10)
    model = cl.synthetic_model(nrng.uniform(0.7, 0.9, 36))
    tables = cl.build_tables(model, 16, 0.5)
    theta = pick_balanced_theta(tables, model, seed=0)
    # declared protocol bound: the spec's table-set invariant requires only
    # that every actual comparison sum stays below it (checked per session)
    tables = tables.with_theta(theta, s_max=theta + 42)
    dep = make_deployment(96, tables, seed=100)
    users = []
    for u in range(12):
        uid = f"c1-user-{u}".encode()
        features, probes = cl.synth_user_probes(model, 42, nrng)
        enroll_user(dep, uid, features, "both", seed=u)
        users.append((uid, probes))
    impostors = nrng.standard_normal((500, 36))
    sessions = []
    for s in range(500):
        uid, probes = users[s % 12]
        probe = probes[s // 12] if s % 2 == 0 else impostors[s]
        sessions.append((uid, probe))
    _C1["dep"] = dep
    _C1["sessions"] = sessions


def _c1_run(args):
    sid, protocol = args
    dep = _C1["dep"]
    uid, probe = _C1["sessions"][sid]
    res = run_verification(dep, uid, probe, protocol, seed=sid)
    return sid, protocol, res.client_outcome.value, res.server_outcome.value


def test_criterion_1_oracle_equivalence():
    with criterion(1, "oracle equivalence, 500 sessions + exhaustive small"):
        _c1_setup()
        dep = _C1["dep"]
        sessions = _C1["sessions"]

        # the declared bound invariant holds for every session
        scores = [plaintext_score(dep, uid, probe) for uid, probe in sessions]
        assert max(scores) <= dep.tables.s_max
        expected = [s >= dep.tables.theta for s in scores]
        n_match = sum(expected)
        assert 50 <= n_match <= 450  # both decision paths are exercised

        t0 = time.perf_counter()
        jobs = [(sid, proto) for sid in range(500) for proto in ("sh", "mal")]
        results = _pool_map(_c1_run, jobs)
        elapsed = time.perf_counter() - t0
        discrepancies = 0
        for sid, protocol, outcome, server_outcome in results:
            want = "match" if expected[sid] else "no_match"
            discrepancies += outcome != want
            assert server_outcome == "completed"
        assert discrepancies == 0
        assert elapsed < 300, f"500-session block took {elapsed:.0f}s"
        print(f"\n[acceptance] c1: 500 sessions x2 protocols, {n_match} matches, "
              f"0 discrepancies, {elapsed:.0f}s on {POOL_SIZE} workers", flush=True)

        # exhaustive k=2, n=3: every template/probe bin combination
        small = cl.build_tables(cl.synthetic_model([0.85, 0.8]), 3, 0.5, theta=0)
        small = small.with_theta((small.s_max + small.s_min) // 4)
        sdep = make_deployment(96, small, seed=7)
        bb = cl.bin_borders(3)
        edges = [-3.0] + list(bb.borders) + [3.0]

        def raw(hat):
            return [(edges[h] + edges[h + 1]) / 2 for h in hat]

        seed = 0
        for f_hat in itertools.product(range(3), repeat=2):
            uid = f"c1x-{f_hat}".encode()
            enroll_user(sdep, uid, raw(f_hat), "both", seed=3)
            for b_hat in itertools.product(range(3), repeat=2):
                seed += 1
                probe = raw(b_hat)
                want = expected_outcome(sdep, uid, probe)
                for proto in ("sh", "mal"):
                    res = run_verification(sdep, uid, probe, proto, seed=seed)
                    assert res.client_outcome == want, (f_hat, b_hat, proto)


# -- criterion 2: threshold-window semantics ------------------------------------

_C2 = {}


def _c2_setup():
    if _C2:
        return
    nrng = np.random.default_rng(20)
    # cells centered so random sessions land on both sides of theta=14,
    # with every achievable sum inside the declared [.., 99] bound
    cells = nrng.integers(-18, 33, size=(2, 16, 16)).astype(np.int32)
    tables = cl.LookupTableSet(tables=cells, delta=0.5, theta=14, s_max=99)
    assert tables.window_len == 86
    assert tables.max_achievable <= 99
    dep = make_deployment(96, tables, seed=200)
    uid = b"c2-user"
    enroll_user(dep, uid, nrng.standard_normal(2), "sh", seed=0)
    probes = nrng.standard_normal((1000, 2))
    _C2.update(dep=dep, uid=uid, probes=probes)


def _c2_run(sid):
    dep, uid = _C2["dep"], _C2["uid"]
    probe = _C2["probes"][sid]
    client = make_client(dep, "sh", uid, probe, seed=sid)
    server = make_server(dep, "sh", seed=sid)
    res = run_session(dep.params, client, server)
    vec_len = None
    for sender, frame in res.transcript:
        msg = deserialize(dep.params, frame)
        if msg.MSG_TYPE == 0x05:
            vec_len = len(msg.cts)
    s = plaintext_score(dep, uid, probe)
    return sid, vec_len, client.zero_count, s, res.client_outcome.value


def test_criterion_2_threshold_window():
    with criterion(2, "window length 86, zero multiplicity over 1000 sessions"):
        _c2_setup()
        dep = _C2["dep"]
        results = _pool_map(_c2_run, list(range(1000)))
        matches = 0
        for sid, vec_len, zeros, s, outcome in results:
            assert vec_len == 86, sid
            in_window = dep.tables.theta <= s <= dep.tables.s_max
            assert zeros == (1 if in_window else 0), (sid, s, zeros)
            assert outcome == ("match" if s >= dep.tables.theta else "no_match")
            matches += outcome == "match"
        assert 150 < matches < 850  # both sides of the boundary well represented
        print(f"\n[acceptance] c2: 1000 sessions, {matches} matches, "
              f"window 86, zero multiplicity exact", flush=True)


# -- criterion 3: sigma-protocol suite ------------------------------------------

def _sigma_instance(params, keys, relation, rng):
    kp1, kp2, joint = keys
    if relation is sigma.SigmaRelation.PLAIN:
        m, r = rng.randint(-50, 50), random_scalar(params, rng)
        ct = eg.encrypt(params, kp1.pk, m, r, KeyTag.CLIENT)
        return sigma.plain_statement(kp1.pk, ct), (m, r)
    if relation is sigma.SigmaRelation.DEC_ZERO:
        v = rng.randint(-50, 50)
        d = eg.sub(eg.encrypt_rng(params, kp1.pk, v, rng, KeyTag.CLIENT),
                   eg.encrypt_rng(params, kp1.pk, v, rng, KeyTag.CLIENT))
        return sigma.dec_zero_statement(kp1.pk, d), (kp1.sk,)
    if relation is sigma.SigmaRelation.BLIND:
        ct = eg.encrypt_rng(params, kp1.pk, rng.randint(-50, 50), rng, KeyTag.CLIENT)
        a = random_nonzero_scalar(params, rng)
        return sigma.blind_statement(ct, eg.blind(ct, a)), (a,)
    jct = eg.encrypt_rng(params, joint.pk_joint, rng.randint(-50, 50), rng, KeyTag.JOINT)
    part = eg.partial_decrypt(params, kp2.sk, jct, KeyTag.PARTIAL_BY_SERVER)
    return sigma.partial_statement(kp2.pk, jct, part), (kp2.sk,)


_C3 = {}


def _c3_setup():
    if _C3:
        return
    params = params_for_level(96)
    rng = random.Random(3000)
    kp1, kp2 = eg.keygen(params, rng), eg.keygen(params, rng)
    _C3.update(params=params, keys=(kp1, kp2, eg.joint_keygen(kp1, kp2, params)))


def _c3_completeness(args):
    relation_name, start, count = args
    _c3_setup()
    params, keys = _C3["params"], _C3["keys"]
    relation = sigma.SigmaRelation(relation_name)
    rng = random.Random(9000 + start)
    ok = 0
    for _ in range(count):
        stmt, wit = _sigma_instance(params, keys, relation, rng)
        ok += sigma.verify(params, stmt, sigma.prove(params, stmt, wit, rng))
    return ok


def _c3_mutations(args):
    relation_name, start, count = args
    _c3_setup()
    params, keys = _C3["params"], _C3["keys"]
    relation = sigma.SigmaRelation(relation_name)
    rng = random.Random(5000 + start)
    stmt, wit = _sigma_instance(params, keys, relation, rng)
    proof = sigma.prove(params, stmt, wit, rng)
    blob = sigma.proof_to_bytes(params, proof)
    rejected = 0
    for _ in range(count):
        mutated = bytearray(blob)
        mutated[rng.randrange(len(blob))] ^= 1 << rng.randrange(8)
        try:
            cand = sigma.proof_from_bytes(params, relation, bytes(mutated))
        except Exception:
            rejected += 1
            continue
        rejected += not sigma.verify(params, stmt, cand)
    return rejected


def test_criterion_3_sigma_suite():
    with criterion(3, "sigma completeness/soundness/simulation/mutations"):
        _c3_setup()
        params, keys = _C3["params"], _C3["keys"]
        relations = [r.value for r in sigma.SigmaRelation]

        # completeness: 500 proofs per relation, all verify
        jobs = [(name, i, 125) for name in relations for i in range(4)]
        per_relation = {}
        for (name, _, cnt), ok in zip(jobs, _pool_map(_c3_completeness, jobs)):
            per_relation[name] = per_relation.get(name, 0) + ok
        assert all(v == 500 for v in per_relation.values()), per_relation

        # special soundness: extractor recovers the witness from transcript
        # pairs for all four relations
        rng = random.Random(333)
        for rel in sigma.SigmaRelation:
            stmt, wit = _sigma_instance(params, keys, rel, rng)
            comms, state = sigma.commit(params, stmt, rng)
            e1, e2 = rng.getrandbits(128), rng.getrandbits(128)
            t1 = (comms, e1, sigma.respond(params, stmt, state, wit, e1))
            t2 = (comms, e2, sigma.respond(params, stmt, state, wit, e2))
            assert sigma.check_transcript(params, stmt, comms, e1, t1[2])
            assert sigma.check_transcript(params, stmt, comms, e2, t2[2])
            got = sigma.extract(params, stmt, t1, t2)
            if rel is sigma.SigmaRelation.PLAIN:
                assert got == (wit[0] % params.q, wit[1])
            else:
                assert got == (wit[0] % params.q,)

        # simulators produce accepting transcripts for forced challenges
        for rel in sigma.SigmaRelation:
            for _ in range(25):
                stmt, _ = _sigma_instance(params, keys, rel, rng)
                e = rng.getrandbits(128)
                comms, resps = sigma.simulate(params, stmt, e, rng)
                assert sigma.check_transcript(params, stmt, comms, e, resps)

        # 1000 single-byte mutations per relation, all rejected
        jobs = [(name, i, 250) for name in relations for i in range(4)]
        rej = {}
        for (name, _, cnt), r in zip(jobs, _pool_map(_c3_mutations, jobs)):
            rej[name] = rej.get(name, 0) + r
        assert all(v == 1000 for v in rej.values()), rej
        print("\n[acceptance] c3: 500 proofs/relation verified, extractors and "
              "simulators pass, 1000 mutations/relation rejected", flush=True)


# -- criterion 4: attack matrix --------------------------------------------------

def _c4_run(args):
    script, protocol, seed = args
    report = run_attack(script, protocol, seed)
    return script, protocol, seed, report.outcome


def test_criterion_4_attack_matrix():
    with criterion(4, "attack matrix, 50 seeded runs per cell"):
        jobs = [(script, protocol, seed)
                for seed in range(50)
                for (script, protocol) in sorted(ATTACK_MATRIX)]
        deviations = []
        no_match_on_fake = 0
        for script, protocol, seed, outcome in _pool_map(_c4_run, jobs):
            if outcome != ATTACK_MATRIX[(script, protocol)]:
                deviations.append((script, protocol, seed, outcome))
            if script == "fake-comparison" and protocol == "mal":
                no_match_on_fake += outcome == "no_match"
        assert deviations == []
        assert no_match_on_fake == 0  # abort is always distinguishable
        print(f"\n[acceptance] c4: {len(jobs)} attack runs, 0 deviations", flush=True)


# -- criterion 5: classifier statistics ------------------------------------------

def test_criterion_5_classifier_statistics():
    with criterion(5, "classifier statistics on synthetic data"):
        nrng = np.random.default_rng(50)
        model = cl.synthetic_model(nrng.uniform(0.7, 0.9, 36))
        tables = cl.build_tables(model, 16, 0.5)

        ga, gb = cl.synth_pairs(model, 4000, True, nrng)
        ia, ib = cl.synth_pairs(model, 40_000, False, nrng)
        table_eer = cl.det_metrics(cl.score_pairs(tables, ga, gb),
                                   cl.score_pairs(tables, ia, ib)).eer
        exact_eer = cl.det_metrics(cl.exact_llr_pairs(model, ga, gb),
                                   cl.exact_llr_pairs(model, ia, ib)).eer
        assert abs(table_eer - exact_eer) <= 0.01, (table_eer, exact_eer)

        # bin equiprobability at one million samples, 4 sigma
        for n in (3, 16, 64):
            samples = nrng.standard_normal(10**6)
            counts = np.bincount(cl.quantize_vector(samples, cl.bin_borders(n)),
                                 minlength=n)
            sig = math.sqrt(10**6 * (1 / n) * (1 - 1 / n))
            assert (np.abs(counts - 10**6 / n) <= 4 * sig).all(), n

        # genuine cell probabilities against Monte Carlo at 10^7 samples
        rho, n = 0.8, 16
        bb = cl.bin_borders(n)
        size = 10**7
        w = nrng.standard_normal(size) * math.sqrt(rho)
        x = w + nrng.standard_normal(size) * math.sqrt(1 - rho)
        y = w + nrng.standard_normal(size) * math.sqrt(1 - rho)
        xh, yh = cl.quantize_vector(x, bb), cl.quantize_vector(y, bb)
        for r, c in ((0, 0), (7, 7), (7, 8), (3, 12), (15, 15), (0, 15)):
            p = cl.genuine_cell_prob(rho, bb, r, c)
            p_hat = np.mean((xh == r) & (yh == c))
            sig = math.sqrt(max(p * (1 - p), 1e-12) / size)
            assert abs(p_hat - p) <= 3 * sig + 1e-9, (r, c, p, p_hat)
        print(f"\n[acceptance] c5: table EER {table_eer:.4f} vs exact {exact_eer:.4f}, "
              "bins uniform at 4 sigma, cells match Monte Carlo at 3 sigma", flush=True)


# -- criterion 6: homomorphic layer ----------------------------------------------

def test_criterion_6_homomorphic_layer():
    with criterion(6, "exhaustive homomorphic round-trips over [-200, 200]"):
        params = params_for_level(96)
        rng = random.Random(600)
        kp1, kp2 = eg.keygen(params, rng), eg.keygen(params, rng)
        joint = eg.joint_keygen(kp1, kp2, params)
        for m in range(-200, 201):
            c = eg.encrypt_rng(params, kp1.pk, m, rng, KeyTag.CLIENT)
            other = eg.encrypt_rng(params, kp1.pk, 57, rng, KeyTag.CLIENT)
            assert eg.decrypt(params, kp1.sk, eg.add(c, other), -500, 500) == m + 57
            assert eg.decrypt(params, kp1.sk, eg.sub(c, other), -500, 500) == m - 57
            jc = eg.encrypt_rng(params, joint.pk_joint, m, rng, KeyTag.JOINT)
            part = eg.partial_decrypt(params, kp2.sk, jc, KeyTag.PARTIAL_BY_SERVER)
            assert eg.decrypt(params, kp1.sk, part, -200, 200) == m
            if m != 0:
                blinded = eg.blind(c, random_nonzero_scalar(params, rng))
                assert not eg.is_zero(params, kp1.sk, blinded)
        zero = eg.encrypt_rng(params, kp1.pk, 0, rng, KeyTag.CLIENT)
        for _ in range(100):
            assert eg.is_zero(params, kp1.sk,
                              eg.blind(zero, random_nonzero_scalar(params, rng)))
        print("\n[acceptance] c6: 401 plaintexts round-tripped through add/sub/"
              "threshold, blinding preserves exactly zero", flush=True)


# -- criterion 7: performance order of magnitude ---------------------------------

def test_criterion_7_performance():
    with criterion(7, "full-size malicious verification under 10s, SH faster"):
        model = cl.synthetic_model([0.8] * 94)
        tables = cl.build_tables(model, 64, 1.5)
        tables = tables.with_theta(pick_balanced_theta(tables, model, seed=0))
        dep = make_deployment(128, tables, seed=700)
        nrng = np.random.default_rng(70)
        features, probes = cl.synth_user_probes(model, 3, nrng)
        enroll_user(dep, b"c7-user", features, "both", seed=0)

        times = {}
        for proto in ("sh", "mal"):
            best = math.inf
            for i in range(2):
                t0 = time.perf_counter()
                res = run_verification(dep, b"c7-user", probes[i], proto, seed=i)
                best = min(best, time.perf_counter() - t0)
                assert res.client_outcome in (Outcome.MATCH, Outcome.NO_MATCH)
            times[proto] = best
        assert times["mal"] < 10.0, times
        assert times["sh"] < times["mal"], times
        print(f"\n[acceptance] c7: level 128, k=94, n=64, window "
              f"{tables.window_len}: mal {times['mal']:.2f}s (<10s), "
              f"sh {times['sh']:.2f}s (faster)", flush=True)


# -- criterion 8: serialization ---------------------------------------------------

def test_criterion_8_serialization(params96, keys96, tiny_dep):
    with criterion(8, "byte-identical round-trips and size scaling"):
        # every wire message round-trips byte-identically: drive an SH and a
        # MAL session and re-serialize each recorded frame
        dep = tiny_dep
        probe = dep.enrolled[b"tiny-user"]
        for proto in ("sh", "mal"):
            res = run_verification(dep, b"tiny-user", probe, proto, seed=80)
            seen = set()
            for sender, frame in res.transcript:
                msg = deserialize(dep.params, frame)
                assert serialize(dep.params, msg) == frame
                seen.add(msg.MSG_TYPE)
            assert len(seen) >= (4 if proto == "sh" else 6)

        # file formats
        ts = dep.tables
        blob = cl.tables_to_bytes(ts)
        assert cl.tables_to_bytes(cl.tables_from_bytes(blob)) == blob
        rows = np.random.default_rng(81).standard_normal((4, 3))
        vblob = cl.vectors_to_bytes(rows)
        assert cl.vectors_to_bytes(cl.vectors_from_bytes(vblob)) == vblob

        # template sizes scale linearly in k*n and in the encoding length
        def sizes(level, k, n):
            model = cl.synthetic_model([0.8] * k)
            tables = cl.build_tables(model, n, 0.5, theta=0)
            d = make_deployment(level, tables, seed=82)
            enroll_user(d, b"u", np.zeros(k), "both", seed=0)
            sh_b = len(sh_template_to_bytes(d.params, d.server_store.get_sh(b"u")))
            mal_t, _ = d.server_store.get_mal(b"u")
            return sh_b, len(mal_template_to_bytes(d.params, mal_t))

        base_sh, base_mal = sizes(96, 2, 4)
        quad_sh, quad_mal = sizes(96, 4, 8)  # 4x the cells
        header = 2 + len(b"u") + 8  # uid prefix + k/n counts
        assert quad_sh - header == 4 * (base_sh - header)
        assert quad_mal - header == 4 * (base_mal - header)

        p96, p128 = params_for_level(96), params_for_level(128)
        big_sh, big_mal = sizes(128, 2, 4)
        per_cell_96 = (base_sh - header) / (2 * 4)
        per_cell_128 = (big_sh - header) / (2 * 4)
        assert per_cell_96 == 2 * p96.encoding_len
        assert per_cell_128 == 2 * p128.encoding_len
        assert big_mal > base_mal
        print("\n[acceptance] c8: all frames and files byte-identical, template "
              "sizes linear in k*n and encoding length", flush=True)
