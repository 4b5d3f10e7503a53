"""Robot side of the protocol: notification endpoint, refetch queue, refetcher."""

from __future__ import annotations

import hashlib
import logging
import queue
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Optional

from .wire import NOTIFY_PATH, Notification, NotificationError, decode_notification

__all__ = ["RefetchQueue", "RobotReceiver", "Refetcher", "IndexedPage", "robot_receive"]

log = logging.getLogger(__name__)


class RefetchQueue:
    """Thread-safe FIFO of notifications to refetch.

    A (url, digest) pair already accepted within the last ``window`` seconds
    is dropped as a duplicate.
    """

    def __init__(self, window: float = 60.0, clock: Callable[[], float] = time.monotonic):
        self.window = window
        self.clock = clock
        self._q: queue.Queue[Notification] = queue.Queue()
        self._recent: dict[tuple[str, str], float] = {}
        self._lock = threading.Lock()
        self.accepted = 0
        self.duplicates = 0

    def __len__(self) -> int:
        return self._q.qsize()

    def offer(self, n: Notification) -> bool:
        now = self.clock()
        key = (n.url, n.digest)
        with self._lock:
            if len(self._recent) > 4096:
                self._recent = {k: t for k, t in self._recent.items() if now - t < self.window}
            seen = self._recent.get(key)
            if seen is not None and now - seen < self.window:
                self.duplicates += 1
                return False
            self._recent[key] = now
            self.accepted += 1
        self._q.put(n)
        return True

    def get(self, timeout: Optional[float] = None) -> Notification:
        return self._q.get(timeout=timeout)

    def task_done(self) -> None:
        self._q.task_done()

    def join(self) -> None:
        self._q.join()


def robot_receive(n: Notification, refetch: RefetchQueue) -> tuple[int, str]:
    """Accept a decoded notification; returns (HTTP status, body text)."""
    if refetch.offer(n):
        return 200, "queued\n"
    return 200, "duplicate\n"


class RobotReceiver:
    """WSGI app serving ``GET /sensor-notify``: 200 on success, 400 if malformed."""

    def __init__(self, refetch: RefetchQueue, endpoint_path: str = NOTIFY_PATH):
        self.refetch = refetch
        self.endpoint_path = endpoint_path
        self.received = 0
        self.rejected = 0
        self._lock = threading.Lock()

    def __call__(self, environ, start_response):
        path = environ.get("PATH_INFO", "")
        if path != self.endpoint_path:
            return _reply(start_response, 404, "not found\n")
        if environ.get("REQUEST_METHOD") not in ("GET", "HEAD"):
            return _reply(start_response, 405, "use GET\n", [("Allow", "GET, HEAD")])
        try:
            n = decode_notification(environ.get("QUERY_STRING", ""))
        except NotificationError as exc:
            with self._lock:
                self.rejected += 1
            return _reply(start_response, 400, f"bad notification: {exc}\n")
        with self._lock:
            self.received += 1
        status, text = robot_receive(n, self.refetch)
        return _reply(start_response, status, text)


_REASONS = {200: "OK", 400: "Bad Request", 404: "Not Found", 405: "Method Not Allowed"}


def _reply(start_response, code: int, text: str, extra=()):
    body = text.encode("utf-8")
    start_response(f"{code} {_REASONS[code]}", [("Content-Type", "text/plain; charset=utf-8"),
                                                ("Content-Length", str(len(body))), *extra])
    return [body]


@dataclass(frozen=True)
class IndexedPage:
    url: str
    digest: str
    status: int
    size: int
    fetched_at: float


def http_fetch(url: str, timeout: float = 10.0) -> tuple[int, bytes]:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


class Refetcher:
    """Worker that drains the refetch queue with plain GETs and keeps an index."""

    def __init__(self, refetch: RefetchQueue, fetch: Callable[[str], tuple[int, bytes]] = http_fetch):
        self.refetch = refetch
        self.fetch = fetch
        self.index: dict[str, IndexedPage] = {}
        self.fetches = 0
        self.failures = 0
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._lock = threading.Lock()

    def start(self) -> "Refetcher":
        if self._thread is None:
            self._thread = threading.Thread(target=self._loop, name="robot-refetcher", daemon=True)
            self._thread.start()
        return self

    def _loop(self) -> None:
        while not self._stop.is_set():
            try:
                n = self.refetch.get(timeout=0.1)
            except queue.Empty:
                continue
            try:
                self.process(n)
            finally:
                self.refetch.task_done()

    def process(self, n: Notification) -> Optional[IndexedPage]:
        try:
            status, body = self.fetch(n.url)
        except Exception as exc:  # noqa: BLE001 - a failed refetch must not kill the worker
            with self._lock:
                self.failures += 1
            log.warning("refetch of %s failed: %s", n.url, exc)
            return None
        page = IndexedPage(n.url, hashlib.md5(body).hexdigest(), status, len(body), time.time())
        with self._lock:
            self.fetches += 1
            self.index[n.url] = page
        if page.digest != n.digest:
            log.info("index updated %s digest=%s (notified %s; changed again since)",
                     n.url, page.digest, n.digest)
        else:
            log.info("index updated %s digest=%s status=%d size=%d", n.url, page.digest,
                     page.status, page.size)
        return page

    def drain(self, timeout: float = 5.0) -> bool:
        """Block until every queued notification has been processed."""
        done = threading.Event()

        def waiter():
            self.refetch.join()
            done.set()

        threading.Thread(target=waiter, daemon=True).start()
        return done.wait(timeout)

    def stop(self, timeout: float = 5.0) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout)
            self._thread = None
