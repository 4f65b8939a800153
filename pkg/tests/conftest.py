import random

import numpy as np
import pytest

from helr import elgamal as eg
from helr.classifier import build_tables, synthetic_model
from helr.group import params_for_level
from helr.harness import enroll_user, make_deployment, pick_balanced_theta


@pytest.fixture(scope="session")
def params96():
    return params_for_level(96)


@pytest.fixture(scope="session")
def params128():
    return params_for_level(128)


@pytest.fixture(scope="session")
def keys96(params96):
    rng = random.Random(1234)
    kp1 = eg.keygen(params96, rng)
    kp2 = eg.keygen(params96, rng)
    joint = eg.joint_keygen(kp1, kp2, params96)
    return kp1, kp2, joint


@pytest.fixture(scope="session")
def tiny_tables():
    """k=2, n=3 table set with a mid-range threshold so both decisions occur."""
    ts = build_tables(synthetic_model([0.85, 0.8]), 3, 0.5, theta=0)
    return ts.with_theta((ts.s_max + ts.s_min) // 4)


@pytest.fixture(scope="session")
def small_model():
    return synthetic_model([0.8] * 4)


@pytest.fixture(scope="session")
def small_tables(small_model):
    ts = build_tables(small_model, 8, 0.5, theta=0)
    return ts.with_theta(pick_balanced_theta(ts, small_model, seed=0))


@pytest.fixture(scope="session")
def tiny_dep(tiny_tables):
    dep = make_deployment(96, tiny_tables, seed=11)
    rng = np.random.default_rng(5)
    feats = rng.standard_normal(2)
    enroll_user(dep, b"tiny-user", feats, "both", seed=11)
    return dep


@pytest.fixture(scope="session")
def small_dep(small_tables, small_model):
    from helr.classifier import synth_user_probes

    dep = make_deployment(96, small_tables, seed=21)
    rng = np.random.default_rng(9)
    features, probes = synth_user_probes(small_model, 12, rng)
    enroll_user(dep, b"small-user", features, "both", seed=21)
    dep.genuine_probes = probes
    dep.impostor_probes = rng.standard_normal((12, small_tables.k))
    return dep
