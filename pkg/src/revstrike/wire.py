"""HTTP/1.1 wire-format assembly for crafted responses.

The grammar produces status line, header lines and body without framing;
this module turns them into the exact byte sequence written to the socket.
Framing headers are appended when missing because scanners commonly hang
on responses without a declared length: a correct decimal Content-Length,
then Connection: close.
"""

from __future__ import annotations

from typing import Protocol, Sequence

CRLF = b"\r\n"


class RenderableResponse(Protocol):
    status_line: bytes
    header_lines: tuple[bytes, ...]
    body: bytes


def _has_header(header_lines: Sequence[bytes], name: bytes) -> bool:
    prefix = name.lower() + b":"
    return any(line.lower().startswith(prefix) for line in header_lines)


def frame(
    status_line: bytes,
    header_lines: Sequence[bytes],
    body: bytes,
    *,
    head_only: bool = False,
) -> bytes:
    """Assemble the wire form: status line, headers, blank line, body.

    ``head_only`` suppresses the body bytes while keeping the headers that
    describe it, matching HEAD semantics.
    """

    lines = list(header_lines)
    if not _has_header(lines, b"content-length"):
        lines.append(b"Content-Length: %d" % len(body))
    if not _has_header(lines, b"connection"):
        lines.append(b"Connection: close")
    wire = status_line + CRLF
    for line in lines:
        wire += line + CRLF
    wire += CRLF
    if not head_only:
        wire += body
    return wire


def render_http(crafted: RenderableResponse) -> bytes:
    """Wire form of a fully instantiated response (no placeholders left)."""

    return frame(crafted.status_line, crafted.header_lines, crafted.body)
