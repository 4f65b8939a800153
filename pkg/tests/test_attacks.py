import json

import pytest

from helr.attacks import (
    ATTACK_MATRIX,
    SCRIPTS,
    CraftedTemplate,
    make_attack_fixture,
    run_attack,
    run_control,
)
from helr.errors import ConfigError
from helr.harness import make_client, make_server
from helr.proto_sh import quantize_features
from helr.transport import Outcome, run_session


@pytest.mark.parametrize("script,protocol", sorted(ATTACK_MATRIX))
def test_matrix_expected_outcomes(script, protocol):
    for seed in (1, 2, 3):
        report = run_attack(script, protocol, seed)
        assert report.outcome == ATTACK_MATRIX[(script, protocol)], report


def test_reports_are_deterministic_and_json():
    a = run_attack("fake-comparison", "mal", 5)
    b = run_attack("fake-comparison", "mal", 5)
    assert a.to_json() == b.to_json()
    parsed = json.loads(a.to_json())
    assert parsed["outcome"] == "abort"


def test_encrypt_theta_forces_match_on_impostor():
    # honest control with the same impostor probe is a no-match
    assert run_control("encrypt-theta", "sh", 9) is Outcome.NO_MATCH
    assert run_attack("encrypt-theta", "sh", 9).outcome == "success"


def test_fake_comparison_forces_no_match_on_genuine():
    assert run_control("fake-comparison", "sh", 9) is Outcome.MATCH
    assert run_attack("fake-comparison", "sh", 9).outcome == "success"


def test_fake_comparison_mal_aborts_never_no_match():
    for seed in range(5):
        report = run_attack("fake-comparison", "mal", seed)
        assert report.outcome == "abort"
        assert report.detail["distinguished_from_no_match"] is True
        assert run_control("fake-comparison", "mal", seed) is Outcome.MATCH


def test_crafted_template_full_probe_recovery():
    # repeating the row trick per feature reveals the whole quantized probe
    fx = make_attack_fixture(96, seed=4)
    probe = fx.genuine_probe
    true_hat = quantize_features(fx.dep.tables, probe)
    recovered = []
    for target in range(fx.dep.tables.k):
        script = CraftedTemplate()
        script.target_feature = target
        client = make_client(fx.dep, "sh", fx.uid, probe, seed=target)
        server = make_server(fx.dep, "sh", seed=target)
        import random

        hook = script.build_hook(fx, "sh", client, server,
                                 random.Random(1000 + target), {})
        result = run_session(fx.dep.params, client, server, hook=hook)
        outcome, detail = script.evaluate(fx, "sh", client, server, result, {})
        assert outcome == "success"
        recovered.append(detail["recovered_feature"])
    assert recovered == [int(v) for v in true_hat]


def test_crafted_template_mal_aborts_at_signature_check():
    report = run_attack("crafted-template", "mal", 6)
    assert report.outcome == "abort"
    assert report.detail["abort_reason"] == "sigma-verify"


def test_probe_substitution_aborts_at_server():
    report = run_attack("probe-substitution", "mal", 6)
    assert report.outcome == "abort"
    assert report.detail["abort_reason"] == "deczero-verify"
    # honest control proceeds to a decision
    assert run_control("probe-substitution", "mal", 6) in (Outcome.MATCH, Outcome.NO_MATCH)


def test_unknown_script_rejected():
    with pytest.raises(ConfigError):
        run_attack("nonexistent", "sh", 0)
    with pytest.raises(ConfigError):
        run_attack("encrypt-theta", "weird", 0)


def test_scripts_cover_both_roles():
    roles = {s.role for s in SCRIPTS.values()}
    assert roles == {"client", "server"}
