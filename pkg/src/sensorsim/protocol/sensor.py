"""Server-side sensor: fingerprinting WSGI middleware and its notifier."""

from __future__ import annotations

import collections
import hashlib
import http.client
import itertools
import logging
import threading
import time
import urllib.parse
import urllib.request
from typing import Callable, Optional

from .store import ExclusionRules, FingerprintEntry, FingerprintKey, FingerprintStore, Verdict
from .wire import NOTIFY_PATH, Notification, encode_notification

__all__ = ["Notifier", "SensorMiddleware", "ProxyApp", "http_deliver", "OBSERVED_STATUSES"]

log = logging.getLogger(__name__)

OBSERVED_METHODS = frozenset({"GET", "HEAD"})
OBSERVED_STATUSES = frozenset({200, 403, 404, 500})


def http_deliver(robot_base: str, endpoint_path: str = NOTIFY_PATH,
                 timeout: float = 5.0) -> Callable[[Notification], None]:
    """Return a delivery function that GETs the encoded notification from the robot."""
    base = robot_base.rstrip("/")

    def deliver(n: Notification) -> None:
        url = base + encode_notification(n, endpoint_path)
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            resp.read()

    return deliver


class Notifier:
    """Fire-and-forget notification queue drained by one background thread.

    The queue is bounded; when full the oldest pending notification is
    dropped and ``overflows`` is incremented. Delivery failures are logged
    and counted, never raised to the submitter.
    """

    def __init__(self, deliver: Callable[[Notification], None], capacity: int = 1024):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.deliver = deliver
        self.capacity = capacity
        self._queue: collections.deque[Notification] = collections.deque()
        self._cond = threading.Condition()
        self._seq = itertools.count(1)
        self._busy = False
        self._stopping = False
        self._thread: Optional[threading.Thread] = None
        self.submitted = 0
        self.delivered = 0
        self.failures = 0
        self.overflows = 0

    def submit(self, url: str, digest: str, status: int, size: int) -> Notification:
        with self._cond:
            n = Notification(url, digest, status, size, next(self._seq))
            if len(self._queue) >= self.capacity:
                self._queue.popleft()
                self.overflows += 1
            self._queue.append(n)
            self.submitted += 1
            self._cond.notify()
        return n

    def pending(self) -> int:
        with self._cond:
            return len(self._queue)

    def start(self) -> "Notifier":
        if self._thread is None:
            self._thread = threading.Thread(target=self._loop, name="sensor-notifier", daemon=True)
            self._thread.start()
        return self

    def _loop(self) -> None:
        while True:
            with self._cond:
                while not self._queue and not self._stopping:
                    self._cond.wait()
                if not self._queue:
                    return
                n = self._queue.popleft()
                self._busy = True
            try:
                self.deliver(n)
            except Exception as exc:  # noqa: BLE001 - any delivery failure is only counted
                with self._cond:
                    self.failures += 1
                log.warning("notification seq=%d for %s failed: %s", n.seq, n.url, exc)
            else:
                with self._cond:
                    self.delivered += 1
            finally:
                with self._cond:
                    self._busy = False
                    self._cond.notify_all()

    def flush(self, timeout: float = 5.0) -> bool:
        """Wait until the queue is drained and nothing is in delivery."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while self._queue or self._busy:
                left = deadline - time.monotonic()
                if left <= 0:
                    return False
                self._cond.wait(left)
        return True

    def stop(self, timeout: float = 5.0) -> None:
        with self._cond:
            self._stopping = True
            self._cond.notify_all()
        if self._thread is not None:
            self._thread.join(timeout)
            self._thread = None


class _Tap:
    """Body iterable that hashes chunks on their way to the client."""

    def __init__(self, body, on_done):
        self._body = body
        self._it = iter(body)
        self._on_done = on_done
        self._md5 = hashlib.md5()
        self._size = 0
        self._exhausted = False

    def __iter__(self):
        return self

    def __next__(self):
        try:
            chunk = next(self._it)
        except StopIteration:
            self._exhausted = True
            raise
        self._md5.update(chunk)
        self._size += len(chunk)
        return chunk

    def feed(self, data: bytes) -> None:
        self._md5.update(data)
        self._size += len(data)

    def close(self):
        try:
            close = getattr(self._body, "close", None)
            if close is not None:
                close()
        finally:
            # a client that hung up mid-body tells us nothing reliable
            if self._exhausted:
                self._on_done(self._md5.hexdigest(), self._size)


class SensorMiddleware:
    """Wraps a WSGI app; fingerprints its responses and reports changes.

    Excluded paths, methods other than GET/HEAD, and statuses outside
    200/403/404/500 pass straight through. The client's status, headers and
    body are never altered; fingerprinting happens as the body streams out
    and the notification is only queued, never delivered inline.
    """

    def __init__(self, app, store: FingerprintStore, rules: ExclusionRules, notifier: Notifier,
                 notify_on_new: bool = False, public_base: Optional[str] = None,
                 clock: Callable[[], float] = time.time):
        self.app = app
        self.store = store
        self.rules = rules
        self.notifier = notifier
        self.notify_on_new = notify_on_new
        self.public_base = public_base.rstrip("/") if public_base else None
        self.clock = clock
        self._lock = threading.Lock()
        self.requests = 0
        self.fingerprints = 0
        self.notifications = 0

    def counters(self) -> dict[str, int]:
        with self._lock:
            c = {"requests": self.requests, "fingerprints": self.fingerprints,
                 "notifications": self.notifications}
        c["overflows"] = self.notifier.overflows
        c["notify_failures"] = self.notifier.failures
        return c

    def _resource_url(self, environ, path: str, query: str) -> str:
        if self.public_base:
            base = self.public_base
        else:
            scheme = environ.get("wsgi.url_scheme", "http")
            host = environ.get("HTTP_HOST") or f"{environ.get('SERVER_NAME', 'localhost')}:{environ.get('SERVER_PORT', '80')}"
            base = f"{scheme}://{host}"
        url = base + urllib.parse.quote(path, safe="/:@!$&'()*+,;=-._~%")
        return f"{url}?{query}" if query else url

    def __call__(self, environ, start_response):
        with self._lock:
            self.requests += 1
        method = environ.get("REQUEST_METHOD", "GET")
        path = environ.get("PATH_INFO", "") or "/"
        query = environ.get("QUERY_STRING", "")
        if method not in OBSERVED_METHODS or self.rules.excludes(path):
            return self.app(environ, start_response)

        seen: dict = {}
        tap_ref: list[_Tap] = []

        def tapped_start(status, headers, exc_info=None):
            seen["status"] = status
            seen["headers"] = headers
            write = start_response(status, headers, exc_info) if exc_info else start_response(status, headers)

            def tapped_write(data):
                if tap_ref:
                    tap_ref[0].feed(data)
                else:
                    seen.setdefault("early", []).append(data)
                return write(data)

            return tapped_write

        key = FingerprintKey(method, path, query)

        def done(digest: str, size: int) -> None:
            status_line = seen.get("status", "")
            try:
                code = int(status_line.split(None, 1)[0])
            except (ValueError, IndexError):
                return
            if code not in OBSERVED_STATUSES:
                return
            ctype = ""
            for name, value in seen.get("headers", ()):
                if name.lower() == "content-type":
                    ctype = value
                    break
            entry = FingerprintEntry(digest, size, ctype, code, self.clock())
            verdict = self.store.observe(key, entry)
            with self._lock:
                self.fingerprints += 1
            if verdict is Verdict.CHANGED or (verdict is Verdict.NEW and self.notify_on_new):
                self.notifier.submit(self._resource_url(environ, path, query), digest, code, size)
                with self._lock:
                    self.notifications += 1

        body = self.app(environ, tapped_start)
        tap = _Tap(body, done)
        for data in seen.pop("early", ()):
            tap.feed(data)
        tap_ref.append(tap)
        return tap


_HOP_BY_HOP = frozenset({"connection", "keep-alive", "proxy-authenticate", "proxy-authorization",
                         "te", "trailers", "transfer-encoding", "upgrade"})


class ProxyApp:
    """Minimal WSGI reverse proxy to one origin over HTTP/1.1."""

    def __init__(self, origin: str, timeout: float = 30.0):
        parts = urllib.parse.urlsplit(origin if "://" in origin else "http://" + origin)
        if parts.scheme != "http" or not parts.hostname:
            raise ValueError(f"origin must be an http://host[:port] address, got {origin!r}")
        self.host = parts.hostname
        self.port = parts.port or 80
        self.timeout = timeout

    def __call__(self, environ, start_response):
        method = environ.get("REQUEST_METHOD", "GET")
        target = urllib.parse.quote(environ.get("PATH_INFO", "") or "/", safe="/:@!$&'()*+,;=-._~%")
        if environ.get("QUERY_STRING"):
            target += "?" + environ["QUERY_STRING"]
        headers = {}
        for k, v in environ.items():
            if k.startswith("HTTP_"):
                name = k[5:].replace("_", "-").title()
                if name.lower() not in _HOP_BY_HOP and name.lower() != "host":
                    headers[name] = v
        if environ.get("CONTENT_TYPE"):
            headers["Content-Type"] = environ["CONTENT_TYPE"]
        length = int(environ.get("CONTENT_LENGTH") or 0)
        body = environ["wsgi.input"].read(length) if length > 0 else None
        conn = http.client.HTTPConnection(self.host, self.port, timeout=self.timeout)
        try:
            conn.request(method, target, body=body, headers=headers)
            resp = conn.getresponse()
            data = resp.read()
        except OSError as exc:
            conn.close()
            msg = f"origin unreachable: {exc}\n".encode()
            start_response("502 Bad Gateway", [("Content-Type", "text/plain"),
                                               ("Content-Length", str(len(msg)))])
            return [msg]
        conn.close()
        out_headers = [(k, v) for k, v in resp.getheaders()
                       if k.lower() not in _HOP_BY_HOP and k.lower() != "content-length"]
        if method == "HEAD":
            if resp.getheader("Content-Length") is not None:
                out_headers.append(("Content-Length", resp.getheader("Content-Length")))
        else:
            out_headers.append(("Content-Length", str(len(data))))
        start_response(f"{resp.status} {resp.reason}", out_headers)
        return [data] if method != "HEAD" else []
