"""Change-notification wire format: a GET query string with fixed parameter order."""

from __future__ import annotations

import re
from dataclasses import dataclass
from urllib.parse import quote, unquote

__all__ = ["Notification", "NotificationError", "encode_notification", "decode_notification",
           "NOTIFY_PATH", "PARAMS"]

NOTIFY_PATH = "/sensor-notify"
PARAMS = ("url", "digest", "status", "size", "seq")
_DIGEST_RE = re.compile(r"^[0-9a-f]{32}$")
_UINT_RE = re.compile(r"^[0-9]+$")


class NotificationError(ValueError):
    """Malformed notification; ``param`` names the offending parameter."""

    def __init__(self, param: str, message: str):
        super().__init__(f"{param}: {message}")
        self.param = param


@dataclass(frozen=True)
class Notification:
    url: str
    digest: str
    status: int
    size: int
    seq: int


def encode_notification(n: Notification, endpoint_path: str = NOTIFY_PATH) -> str:
    """Render ``n`` as a request target.

    Only RFC 3986 unreserved characters survive in ``url``; everything else
    becomes ``%HH`` with uppercase hex (UTF-8 first for non-ASCII).
    """
    if not isinstance(n.digest, str) or not _DIGEST_RE.match(n.digest):
        raise NotificationError("digest", f"not a 32-char lowercase hex MD5: {n.digest!r}")
    for name in ("status", "size", "seq"):
        v = getattr(n, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise NotificationError(name, f"expected a non-negative integer, got {v!r}")
    return (f"{endpoint_path}?url={quote(n.url, safe='')}&digest={n.digest}"
            f"&status={n.status}&size={n.size}&seq={n.seq}")


def decode_notification(query: str) -> Notification:
    """Parse a query string (with or without a leading path and ``?``).

    Missing, duplicated or malformed parameters raise NotificationError.
    Parameters outside the five known names are ignored.
    """
    if "?" in query:
        query = query.split("?", 1)[1]
    values: dict[str, str] = {}
    for part in query.split("&") if query else ():
        name, sep, raw = part.partition("=")
        if not sep:
            raise NotificationError(unquote(name) or "query", "parameter without '='")
        name = unquote(name)
        if name not in PARAMS:
            continue
        if name in values:
            raise NotificationError(name, "duplicated")
        try:
            values[name] = unquote(raw, errors="strict")
        except UnicodeDecodeError:
            raise NotificationError(name, "not valid UTF-8 after percent-decoding") from None
    for name in PARAMS:
        if name not in values:
            raise NotificationError(name, "missing")
    if not _DIGEST_RE.match(values["digest"]):
        raise NotificationError("digest", f"not a 32-char lowercase hex MD5: {values['digest']!r}")
    ints = {}
    for name in ("status", "size", "seq"):
        if not _UINT_RE.match(values[name]):
            raise NotificationError(name, f"not a non-negative integer: {values[name]!r}")
        ints[name] = int(values[name])
    return Notification(values["url"], values["digest"], **ints)
