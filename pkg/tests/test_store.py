import random

import pytest

from helr import elgamal as eg
from helr import signatures as sg
from helr.elgamal import KeyTag
from helr.errors import DecodeError, StoreError
from helr.group import params_for_level
from helr.store import FileStore, InMemoryStore
from helr.templates import MalComponent, TemplateMAL, TemplateSH, ThresholdVector


@pytest.fixture(scope="module")
def material(params96, keys96):
    kp1, kp2, joint = keys96
    rng = random.Random(71)
    p = params96

    def jct(m):
        return eg.encrypt_rng(p, joint.pk_joint, m, rng, KeyTag.JOINT)

    sh = TemplateSH(uid=b"u", rows=tuple(
        tuple(jct(j) for j in range(3)) for _ in range(2)))
    sig_kp = sg.sig_keygen(p, rng)
    sig = sg.sign(p, sig_kp, b"x", rng)
    comp = MalComponent(r=1, col_ct=eg.encrypt_rng(p, kp1.pk, 0, rng, KeyTag.CLIENT),
                        score_ct=jct(2), sigma=sig, alpha=sig)
    mal = TemplateMAL(uid=b"u", features=((comp,),))
    tv = ThresholdVector(theta=1, s_max=3, cts=(jct(1), jct(2), jct(3)))
    return sh, mal, tv


@pytest.mark.parametrize("kind", ["memory", "file"])
def test_store_roundtrips(kind, tmp_path_factory, params96, material):
    sh, mal, tv = material
    store = (InMemoryStore() if kind == "memory"
             else FileStore(tmp_path_factory.mktemp("store"), params96))
    assert not store.has(b"u")
    store.put_sh(b"u", sh)
    store.put_mal(b"u", mal, tv)
    store.put_theta(b"u", tv)
    assert store.has(b"u")
    assert store.get_sh(b"u") == sh
    got_mal, got_tv = store.get_mal(b"u")
    assert got_mal == mal and got_tv == tv
    assert store.get_theta(b"u") == tv


@pytest.mark.parametrize("kind", ["memory", "file"])
def test_store_missing_uid(kind, tmp_path_factory, params96):
    store = (InMemoryStore() if kind == "memory"
             else FileStore(tmp_path_factory.mktemp("store"), params96))
    for getter in (store.get_sh, store.get_mal, store.get_theta):
        with pytest.raises(StoreError):
            getter(b"nobody")


def test_file_store_rejects_wrong_level(tmp_path, params96, material):
    sh, _, _ = material
    FileStore(tmp_path, params96).put_sh(b"u", sh)
    other = FileStore(tmp_path, params_for_level(128))
    with pytest.raises(DecodeError):
        other.get_sh(b"u")


def test_file_store_rejects_corrupt_blob(tmp_path, params96, material):
    sh, _, _ = material
    store = FileStore(tmp_path, params96)
    store.put_sh(b"u", sh)
    path = tmp_path / "sh" / f"{b'u'.hex()}.bin"
    path.write_bytes(b"garbage")
    with pytest.raises(DecodeError):
        store.get_sh(b"u")


def test_threshold_vector_length_invariant(params96, material):
    _, _, tv = material
    with pytest.raises(DecodeError):
        ThresholdVector(theta=1, s_max=5, cts=tv.cts)
