"""The malicious-host test stub.

A plain TCP HTTP/1.1 server that answers any request from the scanner
under test.  In phase 1 every request gets a freshly sampled, freshly
tokenized response, recorded in the ledger before the first byte is
written.  In phase 2 every request gets one stored response replayed with
the target token replaced by an injection payload.

Scanner requests are never interpreted: method, path and headers do not
influence the generated response.  The single exception is HEAD, where
the body bytes are suppressed to keep the wire exchange well-formed.
Request bodies are drained and discarded.
"""

from __future__ import annotations

import hashlib
import random
import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from typing import Union

from . import wire
from .grammar import Pcfg, sample_template
from .ledger import CampaignStore, LedgerError, RequestLogEntry, instantiate

_MAX_HEADER_BYTES = 65536
_MAX_DRAIN_BYTES = 1 << 20


class StubError(Exception):
    pass


class BindFailure(StubError):
    """The requested bind address is not usable."""


@dataclass(frozen=True)
class Phase1Mode:
    grammar: Pcfg
    master_seed: int


@dataclass(frozen=True)
class Phase2Mode:
    response_id: str
    target_token: str
    payload_id: str
    payload_text: str


StubMode = Union[Phase1Mode, Phase2Mode]


def derive_seed(master_seed: int, purpose: str, index: int) -> int:
    """Stable per-purpose, per-connection seed from the campaign master seed."""

    key = f"{master_seed}:{purpose}:{index}".encode("ascii")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def substitute_payload(
    crafted, target_token: str, payload_text: str, *, head_only: bool = False
) -> bytes:
    """The stored response with the target token replaced by the payload.

    Substitution happens on the structured parts and the message is framed
    again, so Content-Length stays correct when the body length changes.
    Non-ASCII payload characters travel as latin-1 single bytes, the HTTP
    default charset, so U+00A0 survives header transport intact.
    """

    token = target_token.encode("ascii")
    payload = payload_text.encode("latin-1")
    return wire.frame(
        crafted.status_line.replace(token, payload),
        tuple(line.replace(token, payload) for line in crafted.header_lines),
        crafted.body.replace(token, payload),
        head_only=head_only,
    )


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


class _Handler(socketserver.BaseRequestHandler):
    server: "StubServer"

    def handle(self) -> None:
        self.request.settimeout(10.0)
        try:
            method, request_line, headers = self._read_request()
        except (OSError, ValueError):
            return
        response_id = ""
        try:
            response_id, payload_bytes = self.server.build_response(
                head_only=(method == "HEAD")
            )
        except LedgerError:
            # Never serve a tokenized response the ledger did not accept.
            self._log(request_line, headers, "")
            return
        try:
            self.request.sendall(payload_bytes)
        except OSError:
            pass
        self._log(request_line, headers, response_id)

    def _read_request(self) -> tuple[str, str, list[str]]:
        buf = b""
        while b"\r\n\r\n" not in buf and len(buf) < _MAX_HEADER_BYTES:
            chunk = self.request.recv(4096)
            if not chunk:
                break
            buf += chunk
        head, _, rest = buf.partition(b"\r\n\r\n")
        lines = head.decode("latin-1").split("\r\n")
        request_line = lines[0] if lines else ""
        headers = [line for line in lines[1:] if line]
        method = request_line.split(" ", 1)[0].upper() if request_line else ""
        self._drain_body(headers, already=len(rest))
        return method, request_line, headers

    def _drain_body(self, headers: list[str], already: int) -> None:
        length = 0
        for line in headers:
            name, _, value = line.partition(":")
            if name.strip().lower() == "content-length":
                try:
                    length = int(value.strip())
                except ValueError:
                    length = 0
        remaining = min(length - already, _MAX_DRAIN_BYTES)
        while remaining > 0:
            try:
                chunk = self.request.recv(min(65536, remaining))
            except OSError:
                return
            if not chunk:
                return
            remaining -= len(chunk)

    def _log(self, request_line: str, headers: list[str], response_id: str) -> None:
        entry = RequestLogEntry(
            timestamp=_now(),
            peer=f"{self.client_address[0]}:{self.client_address[1]}",
            request_line=request_line,
            headers=tuple(headers),
            response_id=response_id,
        )
        try:
            self.server.store.record_request(entry)
        except OSError:
            pass


class StubServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, bind: tuple[str, int], mode: StubMode, store: CampaignStore):
        self.mode = mode
        self.store = store
        self._conn_lock = threading.Lock()
        self._conn_index = 0
        try:
            super().__init__(bind, _Handler)
        except OSError as exc:
            raise BindFailure(f"cannot bind {bind[0]}:{bind[1]}: {exc}") from exc
        self._thread: threading.Thread | None = None

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "StubServer":
        # small poll interval keeps shutdown prompt; phase 2 restarts the
        # server once per trial
        self._thread = threading.Thread(
            target=lambda: self.serve_forever(poll_interval=0.05), daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    @property
    def host(self) -> str:
        return self.server_address[0]

    @property
    def port(self) -> int:
        return self.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}/"

    # -- response generation ---------------------------------------------------

    def _next_index(self) -> int:
        with self._conn_lock:
            index = self._conn_index
            self._conn_index += 1
            return index

    def build_response(self, *, head_only: bool) -> tuple[str, bytes]:
        if isinstance(self.mode, Phase1Mode):
            return self._phase1_response(head_only)
        return self._phase2_response(head_only)

    def _phase1_response(self, head_only: bool) -> tuple[str, bytes]:
        index = self._next_index()
        template = sample_template(
            self.mode.grammar, derive_seed(self.mode.master_seed, "template", index)
        )
        token_rng = random.Random(derive_seed(self.mode.master_seed, "tokens", index))
        crafted = instantiate(
            template,
            token_rng,
            response_id=self.store.next_response_id(),
            campaign_id=self.store.campaign_id,
        )
        self.store.record_response(crafted)  # record before the first byte
        if head_only:
            return crafted.response_id, wire.frame(
                crafted.status_line, crafted.header_lines, crafted.body, head_only=True
            )
        return crafted.response_id, crafted.rendered

    def _phase2_response(self, head_only: bool) -> tuple[str, bytes]:
        crafted = self.store.get_response(self.mode.response_id)
        return crafted.response_id, substitute_payload(
            crafted, self.mode.target_token, self.mode.payload_text, head_only=head_only
        )


def serve(bind_address: str, mode: StubMode, store: CampaignStore) -> StubServer:
    """Start the stub on ``host:port`` (port 0 picks a free port).

    Phase 2 mode is validated against the ledger up front: the response
    must exist and the target token must be bound in it.
    """

    host, _, port_text = bind_address.rpartition(":")
    try:
        port = int(port_text)
    except ValueError as exc:
        raise BindFailure(f"bad bind address {bind_address!r}") from exc
    if isinstance(mode, Phase2Mode):
        crafted = store.get_response(mode.response_id)
        if crafted.binding_for(mode.target_token) is None:
            raise LedgerError(
                f"token {mode.target_token} is not bound in {mode.response_id}"
            )
    server = StubServer((host or "127.0.0.1", port), mode, store)
    return server.start()


def probe(url: str, timeout: float = 5.0) -> bytes:
    """One plain GET against the stub; returns the raw response bytes."""

    from urllib.parse import urlparse

    parsed = urlparse(url)
    host = parsed.hostname or "127.0.0.1"
    port = parsed.port or 80
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(b"GET %s HTTP/1.1\r\nHost: %s\r\n\r\n" % (
            (parsed.path or "/").encode("ascii"), host.encode("ascii")))
        sock.settimeout(timeout)
        chunks = []
        while True:
            try:
                chunk = sock.recv(65536)
            except OSError:
                break
            if not chunk:
                break
            chunks.append(chunk)
    return b"".join(chunks)
