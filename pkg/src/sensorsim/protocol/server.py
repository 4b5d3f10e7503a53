"""Threaded stdlib WSGI server used by the sensor proxy, robotd and tests."""

from __future__ import annotations

import logging
import socketserver
import threading
from wsgiref.simple_server import WSGIRequestHandler, WSGIServer, make_server

__all__ = ["ThreadingWSGIServer", "build_server", "serve_in_thread", "parse_address"]

log = logging.getLogger(__name__)


class ThreadingWSGIServer(socketserver.ThreadingMixIn, WSGIServer):
    daemon_threads = True
    allow_reuse_address = True


class _QuietHandler(WSGIRequestHandler):
    def log_message(self, format, *args):
        log.debug("%s - %s", self.address_string(), format % args)


def parse_address(addr: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    """``host:port`` or ``:port`` or ``port`` -> (host, port)."""
    host, sep, port = addr.rpartition(":")
    if not sep:
        host, port = "", addr
    try:
        p = int(port)
    except ValueError:
        raise ValueError(f"bad address {addr!r}: port is not an integer") from None
    if not 0 <= p <= 65535:
        raise ValueError(f"bad address {addr!r}: port out of range")
    return host.strip("[]") or default_host, p


def build_server(app, host: str = "127.0.0.1", port: int = 0) -> ThreadingWSGIServer:
    return make_server(host, port, app, server_class=ThreadingWSGIServer, handler_class=_QuietHandler)


def serve_in_thread(app, host: str = "127.0.0.1", port: int = 0):
    """Start serving ``app`` on a daemon thread; returns (server, base_url)."""
    server = build_server(app, host, port)
    threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05},
                     name=f"wsgi-{server.server_port}", daemon=True).start()
    h, p = server.server_address[:2]
    return server, f"http://{h}:{p}"
