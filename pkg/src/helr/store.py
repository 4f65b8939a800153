"""Template stores: an in-memory map and a file-backed variant.

Both are keyed by user id and synchronized, so concurrent verification
sessions can read while enrollment writes are serialized.  File blobs carry
a versioned header with the security level so a store cannot silently be
read under the wrong curve.
"""

from __future__ import annotations

import struct
import threading
from pathlib import Path

from .errors import DecodeError, StoreError
from .group import GroupParams
from .templates import (
    TemplateMAL,
    TemplateSH,
    ThresholdVector,
    mal_template_from_bytes,
    mal_template_to_bytes,
    sh_template_from_bytes,
    sh_template_to_bytes,
    theta_vector_from_bytes,
    theta_vector_to_bytes,
)

_BLOB_HEADER = struct.Struct("<8sHH")
_BLOB_VERSION = 1
_MAGICS = {"sh": b"HELRSTPL", "mal": b"HELRMTPL", "theta": b"HELRTHTA"}


def _wrap(kind: str, level: int, payload: bytes) -> bytes:
    return _BLOB_HEADER.pack(_MAGICS[kind], _BLOB_VERSION, level) + payload


def _unwrap(kind: str, params: GroupParams, data: bytes) -> bytes:
    if len(data) < _BLOB_HEADER.size:
        raise DecodeError("truncated store blob")
    magic, version, level = _BLOB_HEADER.unpack_from(data)
    if magic != _MAGICS[kind]:
        raise DecodeError(f"bad {kind} blob magic")
    if version != _BLOB_VERSION:
        raise DecodeError(f"unsupported {kind} blob version {version}")
    if level != params.security_level:
        raise DecodeError(f"blob written at level {level}, store opened at {params.security_level}")
    return data[_BLOB_HEADER.size:]


class InMemoryStore:
    """Plain synchronized map; the test default."""

    def __init__(self):
        self._lock = threading.Lock()
        self._sh: dict[bytes, TemplateSH] = {}
        self._mal: dict[bytes, TemplateMAL] = {}
        self._theta: dict[bytes, ThresholdVector] = {}

    def put_sh(self, uid: bytes, template: TemplateSH):
        with self._lock:
            self._sh[uid] = template

    def get_sh(self, uid: bytes) -> TemplateSH:
        with self._lock:
            if uid not in self._sh:
                raise StoreError(f"no template for uid {uid!r}")
            return self._sh[uid]

    def put_mal(self, uid: bytes, template: TemplateMAL, theta_vec: ThresholdVector):
        with self._lock:
            self._mal[uid] = template
            self._theta[uid] = theta_vec

    def get_mal(self, uid: bytes) -> tuple[TemplateMAL, ThresholdVector]:
        with self._lock:
            if uid not in self._mal:
                raise StoreError(f"no template for uid {uid!r}")
            return self._mal[uid], self._theta[uid]

    def put_theta(self, uid: bytes, theta_vec: ThresholdVector):
        with self._lock:
            self._theta[uid] = theta_vec

    def get_theta(self, uid: bytes) -> ThresholdVector:
        with self._lock:
            if uid not in self._theta:
                raise StoreError(f"no threshold vector for uid {uid!r}")
            return self._theta[uid]

    def has(self, uid: bytes) -> bool:
        with self._lock:
            return uid in self._sh or uid in self._mal or uid in self._theta


class FileStore:
    """File-backed store: one blob per uid and kind under the store root."""

    def __init__(self, root, params: GroupParams):
        self.root = Path(root)
        self.params = params
        self._lock = threading.Lock()
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, kind: str, uid: bytes) -> Path:
        d = self.root / kind
        d.mkdir(exist_ok=True)
        return d / f"{uid.hex()}.bin"

    def _write(self, kind: str, uid: bytes, payload: bytes):
        with self._lock:
            self._path(kind, uid).write_bytes(_wrap(kind, self.params.security_level, payload))

    def _read(self, kind: str, uid: bytes) -> bytes:
        path = self._path(kind, uid)
        if not path.exists():
            raise StoreError(f"no {kind} blob for uid {uid!r}")
        return _unwrap(kind, self.params, path.read_bytes())

    def put_sh(self, uid: bytes, template: TemplateSH):
        self._write("sh", uid, sh_template_to_bytes(self.params, template))

    def get_sh(self, uid: bytes) -> TemplateSH:
        template, _ = sh_template_from_bytes(self.params, self._read("sh", uid))
        return template

    def put_mal(self, uid: bytes, template: TemplateMAL, theta_vec: ThresholdVector):
        self._write("mal", uid, mal_template_to_bytes(self.params, template))
        self.put_theta(uid, theta_vec)

    def get_mal(self, uid: bytes) -> tuple[TemplateMAL, ThresholdVector]:
        template, _ = mal_template_from_bytes(self.params, self._read("mal", uid))
        return template, self.get_theta(uid)

    def put_theta(self, uid: bytes, theta_vec: ThresholdVector):
        self._write("theta", uid, theta_vector_to_bytes(self.params, theta_vec))

    def get_theta(self, uid: bytes) -> ThresholdVector:
        tv, _ = theta_vector_from_bytes(self.params, self._read("theta", uid))
        return tv

    def has(self, uid: bytes) -> bool:
        return any((self.root / kind / f"{uid.hex()}.bin").exists()
                   for kind in ("sh", "mal", "theta"))
