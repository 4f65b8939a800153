"""Wire format, channels and the session pump.

Frame layout: 1 version byte, 1 message-type byte, 4-byte big-endian body
length, body.  Frames are capped at 16 MiB (the largest templates are a few
MB).  The in-process channel is the hermetic test default; TCP streams the
same frames over a socket.
"""

from __future__ import annotations

import enum
import queue
import socket
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .elgamal import Ciphertext, KeyTag, ct_from_bytes, ct_to_bytes
from .errors import MalformedFrameError, SessionTimeoutError
from .group import GroupParams
from .sigma import AndProof, SigmaRelation, and_from_bytes, and_to_bytes
from .signatures import Signature, sig_from_bytes, sig_to_bytes
from .templates import TemplateSH, _read_uid, _take, _uid_bytes, sh_template_from_bytes, sh_template_to_bytes

WIRE_VERSION = 1
FRAME_HEADER_LEN = 6
MAX_BODY_LEN = 16 * 1024 * 1024


class Outcome(enum.Enum):
    MATCH = "match"
    NO_MATCH = "no_match"
    ABORT = "abort"
    COMPLETED = "completed"  # honest server end state; it never learns the result


# -- message types ---------------------------------------------------------

@dataclass(frozen=True)
class EnrollSH:
    MSG_TYPE = 0x01
    uid: bytes
    template: TemplateSH

    def encode_body(self, params):
        return sh_template_to_bytes(params, self.template)

    @classmethod
    def decode_body(cls, params, body):
        template, pos = sh_template_from_bytes(params, body)
        _expect_end(body, pos)
        return cls(uid=template.uid, template=template)


@dataclass(frozen=True)
class VerifyRequest:
    MSG_TYPE = 0x02
    uid: bytes

    def encode_body(self, params):
        return _uid_bytes(self.uid)

    @classmethod
    def decode_body(cls, params, body):
        uid, pos = _read_uid(body, 0)
        _expect_end(body, pos)
        return cls(uid=uid)


@dataclass(frozen=True)
class TemplateReply:
    MSG_TYPE = 0x03
    template: TemplateSH

    def encode_body(self, params):
        return sh_template_to_bytes(params, self.template)

    @classmethod
    def decode_body(cls, params, body):
        template, pos = sh_template_from_bytes(params, body)
        _expect_end(body, pos)
        return cls(template=template)


@dataclass(frozen=True)
class FinalScore:
    MSG_TYPE = 0x04
    ct: Ciphertext

    def encode_body(self, params):
        return ct_to_bytes(params, self.ct)

    @classmethod
    def decode_body(cls, params, body):
        return cls(ct=ct_from_bytes(params, body, KeyTag.JOINT))


@dataclass(frozen=True)
class ComparisonVector:
    MSG_TYPE = 0x05
    cts: tuple[Ciphertext, ...]  # blinded, permuted, partially decrypted

    def encode_body(self, params):
        out = [len(self.cts).to_bytes(4, "big")]
        out.extend(ct_to_bytes(params, c) for c in self.cts)
        return b"".join(out)

    @classmethod
    def decode_body(cls, params, body):
        cts, pos = _read_ct_list(params, body, 0, KeyTag.PARTIAL_BY_SERVER)
        _expect_end(body, pos)
        return cls(cts=cts)


@dataclass(frozen=True)
class Step1:
    MSG_TYPE = 0x11
    uid: bytes

    def encode_body(self, params):
        return _uid_bytes(self.uid)

    @classmethod
    def decode_body(cls, params, body):
        uid, pos = _read_uid(body, 0)
        _expect_end(body, pos)
        return cls(uid=uid)


@dataclass(frozen=True)
class Step2:
    MSG_TYPE = 0x12
    probe_cts: tuple[Ciphertext, ...]  # client-key encryptions of the quantized probe
    indexes: tuple[int, ...]
    proof: AndProof  # plaintext-knowledge batch

    def encode_body(self, params):
        out = [len(self.probe_cts).to_bytes(4, "big")]
        out.extend(ct_to_bytes(params, c) for c in self.probe_cts)
        out.extend(r.to_bytes(4, "big") for r in self.indexes)
        out.append(and_to_bytes(params, self.proof))
        return b"".join(out)

    @classmethod
    def decode_body(cls, params, body):
        cts, pos = _read_ct_list(params, body, 0, KeyTag.CLIENT)
        idx = []
        for _ in range(len(cts)):
            raw, pos = _take(body, pos, 4)
            idx.append(int.from_bytes(raw, "big"))
        proof = and_from_bytes(params, SigmaRelation.PLAIN, body[pos:])
        return cls(probe_cts=cts, indexes=tuple(idx), proof=proof)


@dataclass(frozen=True)
class Step3a:
    MSG_TYPE = 0x13
    halves: tuple[tuple[int, Ciphertext, Signature], ...]  # (index, column ct, sigma)

    def encode_body(self, params):
        out = [len(self.halves).to_bytes(4, "big")]
        for r, col_ct, sigma in self.halves:
            out.append(r.to_bytes(4, "big"))
            out.append(ct_to_bytes(params, col_ct))
            out.append(sig_to_bytes(params, sigma))
        return b"".join(out)

    @classmethod
    def decode_body(cls, params, body):
        raw, pos = _take(body, 0, 4)
        count = int.from_bytes(raw, "big")
        cl, sl = 2 * params.encoding_len, 16 + params.scalar_len
        halves = []
        for _ in range(count):
            raw, pos = _take(body, pos, 4)
            r = int.from_bytes(raw, "big")
            raw, pos = _take(body, pos, cl)
            col_ct = ct_from_bytes(params, raw, KeyTag.CLIENT)
            raw, pos = _take(body, pos, sl)
            halves.append((r, col_ct, sig_from_bytes(params, raw)))
        _expect_end(body, pos)
        return cls(halves=tuple(halves))


@dataclass(frozen=True)
class Step3b:
    MSG_TYPE = 0x14
    proof: AndProof  # decrypts-to-zero batch

    def encode_body(self, params):
        return and_to_bytes(params, self.proof)

    @classmethod
    def decode_body(cls, params, body):
        return cls(proof=and_from_bytes(params, SigmaRelation.DEC_ZERO, body))


@dataclass(frozen=True)
class Step4a:
    MSG_TYPE = 0x15
    halves: tuple[tuple[Ciphertext, Ciphertext, Signature], ...]  # (column ct, score ct, alpha)

    def encode_body(self, params):
        out = [len(self.halves).to_bytes(4, "big")]
        for col_ct, score_ct, alpha in self.halves:
            out.append(ct_to_bytes(params, col_ct))
            out.append(ct_to_bytes(params, score_ct))
            out.append(sig_to_bytes(params, alpha))
        return b"".join(out)

    @classmethod
    def decode_body(cls, params, body):
        raw, pos = _take(body, 0, 4)
        count = int.from_bytes(raw, "big")
        cl, sl = 2 * params.encoding_len, 16 + params.scalar_len
        halves = []
        for _ in range(count):
            raw, pos = _take(body, pos, cl)
            col_ct = ct_from_bytes(params, raw, KeyTag.CLIENT)
            raw, pos = _take(body, pos, cl)
            score_ct = ct_from_bytes(params, raw, KeyTag.JOINT)
            raw, pos = _take(body, pos, sl)
            halves.append((col_ct, score_ct, sig_from_bytes(params, raw)))
        _expect_end(body, pos)
        return cls(halves=tuple(halves))


@dataclass(frozen=True)
class Step4b:
    MSG_TYPE = 0x16
    blinded: tuple[Ciphertext, ...]        # aC, joint key
    partials: tuple[Ciphertext, ...]       # [aC]_ser, client key left
    blind_proof: AndProof
    partial_proof: AndProof

    def encode_body(self, params):
        out = [len(self.blinded).to_bytes(4, "big")]
        out.extend(ct_to_bytes(params, c) for c in self.blinded)
        out.extend(ct_to_bytes(params, c) for c in self.partials)
        bp = and_to_bytes(params, self.blind_proof)
        out.append(len(bp).to_bytes(4, "big"))
        out.append(bp)
        out.append(and_to_bytes(params, self.partial_proof))
        return b"".join(out)

    @classmethod
    def decode_body(cls, params, body):
        raw, pos = _take(body, 0, 4)
        count = int.from_bytes(raw, "big")
        cl = 2 * params.encoding_len
        blinded, partials = [], []
        for _ in range(count):
            raw, pos = _take(body, pos, cl)
            blinded.append(ct_from_bytes(params, raw, KeyTag.JOINT))
        for _ in range(count):
            raw, pos = _take(body, pos, cl)
            partials.append(ct_from_bytes(params, raw, KeyTag.PARTIAL_BY_SERVER))
        raw, pos = _take(body, pos, 4)
        bp_len = int.from_bytes(raw, "big")
        raw, pos = _take(body, pos, bp_len)
        blind_proof = and_from_bytes(params, SigmaRelation.BLIND, raw)
        partial_proof = and_from_bytes(params, SigmaRelation.PARTIAL, body[pos:])
        return cls(blinded=tuple(blinded), partials=tuple(partials),
                   blind_proof=blind_proof, partial_proof=partial_proof)


@dataclass(frozen=True)
class Abort:
    """Terminal failure notice; deliberately carries no reason on the wire."""

    MSG_TYPE = 0x7F

    def encode_body(self, params):
        return b""

    @classmethod
    def decode_body(cls, params, body):
        if body:
            raise MalformedFrameError("abort carries no body")
        return cls()


_MESSAGE_TYPES = {
    cls.MSG_TYPE: cls
    for cls in (EnrollSH, VerifyRequest, TemplateReply, FinalScore, ComparisonVector,
                Step1, Step2, Step3a, Step3b, Step4a, Step4b, Abort)
}


def _expect_end(body: bytes, pos: int):
    if pos != len(body):
        raise MalformedFrameError(f"{len(body) - pos} trailing bytes")


def _read_ct_list(params, body, pos, tag):
    raw, pos = _take(body, pos, 4)
    count = int.from_bytes(raw, "big")
    cl = 2 * params.encoding_len
    cts = []
    for _ in range(count):
        raw, pos = _take(body, pos, cl)
        cts.append(ct_from_bytes(params, raw, tag))
    return tuple(cts), pos


def serialize(params: GroupParams, msg) -> bytes:
    body = msg.encode_body(params)
    if len(body) > MAX_BODY_LEN:
        raise MalformedFrameError(f"body of {len(body)} bytes exceeds the frame cap")
    return bytes([WIRE_VERSION, msg.MSG_TYPE]) + len(body).to_bytes(4, "big") + body


def deserialize(params: GroupParams, data: bytes):
    if len(data) < FRAME_HEADER_LEN:
        raise MalformedFrameError("truncated frame header")
    if data[0] != WIRE_VERSION:
        raise MalformedFrameError(f"unsupported wire version {data[0]}")
    cls = _MESSAGE_TYPES.get(data[1])
    if cls is None:
        raise MalformedFrameError(f"unknown message type {data[1]:#x}")
    body_len = int.from_bytes(data[2:6], "big")
    if body_len > MAX_BODY_LEN:
        raise MalformedFrameError("frame exceeds 16 MiB cap")
    if len(data) != FRAME_HEADER_LEN + body_len:
        raise MalformedFrameError("frame length mismatch")
    try:
        return cls.decode_body(params, data[FRAME_HEADER_LEN:])
    except MalformedFrameError:
        raise
    except Exception as exc:  # element/scalar/structure decode failures
        raise MalformedFrameError(str(exc)) from exc


# -- channels ----------------------------------------------------------------

class QueueEnd:
    """One side of an in-process duplex channel."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: float):
        self._inbox = inbox
        self._outbox = outbox
        self.timeout = timeout

    def send(self, data: bytes):
        self._outbox.put(data)

    def recv(self, timeout: Optional[float] = None) -> bytes:
        try:
            return self._inbox.get(timeout=timeout if timeout is not None else self.timeout)
        except queue.Empty:
            raise SessionTimeoutError("channel receive timed out") from None

    def close(self):
        pass


def inproc_channel(timeout: float = 5.0):
    a2b, b2a = queue.Queue(), queue.Queue()
    return QueueEnd(b2a, a2b, timeout), QueueEnd(a2b, b2a, timeout)


class TcpEnd:
    """Socket end speaking the frame format over a byte stream."""

    def __init__(self, sock: socket.socket, timeout: float = 10.0):
        self.sock = sock
        self.timeout = timeout
        sock.settimeout(timeout)

    def send(self, data: bytes):
        self.sock.sendall(data)

    def _recv_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except socket.timeout:
                raise SessionTimeoutError("socket receive timed out") from None
            if not chunk:
                raise MalformedFrameError("connection closed mid-frame")
            buf += chunk
        return buf

    def recv(self, timeout: Optional[float] = None) -> bytes:
        header = self._recv_exact(FRAME_HEADER_LEN)
        body_len = int.from_bytes(header[2:6], "big")
        if body_len > MAX_BODY_LEN:
            raise MalformedFrameError("frame exceeds 16 MiB cap")
        return header + self._recv_exact(body_len)

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


def tcp_pair(host: str = "127.0.0.1", timeout: float = 10.0):
    """Connected (client_end, server_end) pair on a loopback socket."""
    listener = socket.socket()
    listener.bind((host, 0))
    listener.listen(1)
    port = listener.getsockname()[1]
    cs = socket.socket()
    cs.connect((host, port))
    ss, _ = listener.accept()
    listener.close()
    return TcpEnd(cs, timeout), TcpEnd(ss, timeout)


# -- session pump --------------------------------------------------------------

@dataclass
class SessionResult:
    client_outcome: Outcome
    server_outcome: Outcome
    transcript: list = field(default_factory=list)  # (sender role, frame bytes)


Hook = Callable[[str, object], object]


def run_session(params: GroupParams, client, server, channel=None,
                hook: Optional[Hook] = None, timeout: float = 10.0) -> SessionResult:
    """Pump a client and a server state machine to their terminal states.

    Every message crosses the wire format even in direct mode.  ``hook``
    sees each outgoing message (sender role, message) and may return a
    replacement; attack scripts are built on it.  With a channel pair the
    two sides run on threads and speak through the endpoints.
    """
    if channel is not None:
        return _run_threaded(params, client, server, channel, hook, timeout)

    transcript = []

    def _ship(sender: str, msg, receiver) -> list:
        if hook is not None:
            replacement = hook(sender, msg)
            if replacement is not None:
                msg = replacement
        data = serialize(params, msg)
        transcript.append((sender, data))
        return receiver.handle(deserialize(params, data))

    outbox = [("client", m) for m in client.start()]
    while outbox:
        sender, msg = outbox.pop(0)
        receiver = server if sender == "client" else client
        replies = _ship(sender, msg, receiver)
        outbox.extend((receiver.role, m) for m in replies)
    return SessionResult(client_outcome=client.outcome, server_outcome=server.outcome,
                         transcript=transcript)


def _run_threaded(params, client, server, channel, hook, timeout) -> SessionResult:
    client_end, server_end = channel
    transcript = []
    lock = threading.Lock()
    errors = []

    def drive(sm, end, initial):
        try:
            pending = list(initial)
            while True:
                for msg in pending:
                    if hook is not None:
                        replacement = hook(sm.role, msg)
                        if replacement is not None:
                            msg = replacement
                    data = serialize(params, msg)
                    with lock:
                        transcript.append((sm.role, data))
                    end.send(data)
                if sm.done:
                    return
                pending = sm.handle(deserialize(params, end.recv(timeout)))
        except Exception as exc:
            errors.append(exc)

    t_client = threading.Thread(target=drive, args=(client, client_end, client.start()))
    t_server = threading.Thread(target=drive, args=(server, server_end, []))
    t_server.start()
    t_client.start()
    t_client.join(timeout * 4)
    t_server.join(timeout * 4)
    if errors:
        raise errors[0]
    return SessionResult(client_outcome=client.outcome, server_outcome=server.outcome,
                         transcript=transcript)


def replay_transcript(params: GroupParams, transcript: Sequence, sm, role: str) -> Outcome:
    """Feed a recorded transcript to a fresh state machine of the given role
    and check it reproduces its recorded messages byte for byte."""
    expected = [data for sender, data in transcript if sender == role]
    produced = [serialize(params, m) for m in (sm.start() if role == "client" else [])]
    for sender, data in transcript:
        if sender == role:
            continue
        produced.extend(serialize(params, m) for m in sm.handle(deserialize(params, data)))
    if produced != expected:
        raise MalformedFrameError("replay diverged from the recorded transcript")
    return sm.outcome
