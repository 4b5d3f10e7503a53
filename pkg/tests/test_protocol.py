import hashlib
import threading

import pytest
from hypothesis import given, settings, strategies as st

from wsgi_helpers import call
from sensorsim.protocol import (
    ExclusionRules,
    FingerprintKey,
    FingerprintStore,
    Notification,
    NotificationError,
    Notifier,
    RefetchQueue,
    Refetcher,
    RobotReceiver,
    SensorMiddleware,
    Verdict,
    decode_notification,
    encode_notification,
    fingerprint,
    is_excluded,
    parse_exclusions,
    robot_receive,
)

EMPTY_MD5 = "d41d8cd98f00b204e9800998ecf8427e"
ABC_MD5 = "900150983cd24fb0d6963f7d28e17f72"


# -- fingerprints --------------------------------------------------------------

def test_fingerprint_rfc1321_vectors():
    e = fingerprint(b"", 200, "text/html")
    assert (e.digest, e.size) == (EMPTY_MD5, 0)
    e = fingerprint(b"abc", 200, "text/html")
    assert (e.digest, e.size) == (ABC_MD5, 3)
    assert fingerprint(b"message digest", 200, "").digest == "f96b697d7cb7938d525a2f31aaf161d0"


def test_fingerprint_deterministic():
    a = fingerprint(b"hello", 404, "text/plain", last_seen=1.0)
    b = fingerprint(b"hello", 404, "text/plain", last_seen=2.0)
    assert a.same_response(b) and a.content_type == b.content_type and a != b


def test_observe_verdicts():
    store = FingerprintStore()
    k = FingerprintKey("GET", "/p", "")
    assert store.observe(k, fingerprint(b"v1", 200, "", 1.0)) is Verdict.NEW
    assert store.observe(k, fingerprint(b"v1", 200, "", 2.0)) is Verdict.UNCHANGED
    assert store.get(k).last_seen == 2.0
    assert store.observe(k, fingerprint(b"v2", 200, "", 3.0)) is Verdict.CHANGED
    assert store.get(k).digest == hashlib.md5(b"v2").hexdigest()
    assert store.observe(k, fingerprint(b"v2", 404, "", 4.0)) is Verdict.CHANGED


def test_observe_key_is_exact():
    store = FingerprintStore()
    body = fingerprint(b"x", 200, "")
    for key in (FingerprintKey("GET", "/p", "a=1&b=2"), FingerprintKey("GET", "/p", "b=2&a=1"),
                FingerprintKey("HEAD", "/p", "a=1&b=2"), FingerprintKey("GET", "/P", "a=1&b=2")):
        assert store.observe(key, body) is Verdict.NEW


def test_observe_atomic_under_contention():
    store = FingerprintStore()
    k = FingerprintKey("GET", "/hot", "")
    verdicts = []
    barrier = threading.Barrier(16)

    def worker():
        barrier.wait()
        verdicts.append(store.observe(k, fingerprint(b"same", 200, "")))

    threads = [threading.Thread(target=worker) for _ in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert verdicts.count(Verdict.NEW) == 1 and verdicts.count(Verdict.UNCHANGED) == 15


def test_store_snapshot_roundtrip(tmp_path):
    store = FingerprintStore()
    store.observe(FingerprintKey("GET", "/a", "q=1"), fingerprint(b"abc", 200, "text/html", 5.0))
    store.save(tmp_path / "s.json")
    again = FingerprintStore.load(tmp_path / "s.json")
    assert again.get(FingerprintKey("GET", "/a", "q=1")) == store.get(FingerprintKey("GET", "/a", "q=1"))


# -- exclusions ----------------------------------------------------------------

def test_exclusion_examples():
    assert is_excluded(ExclusionRules(["/admin"]), "/admin/users")
    assert not is_excluded(ExclusionRules([]), "/anything")
    assert not is_excluded(ExclusionRules(["/a"]), "/b")
    assert is_excluded(ExclusionRules(["/x", "/a"]), "/abc")


def test_exclusion_file_format():
    rules = parse_exclusions("# private\n/admin   \n\n  \n/tmp/\n#/not-a-rule\n")
    assert rules.prefixes == ("/admin", "/tmp/")


# -- wire format ---------------------------------------------------------------

def test_encode_example():
    n = Notification("/a b", EMPTY_MD5, 200, 0, 1)
    assert encode_notification(n, "/sensor-notify") == (
        "/sensor-notify?url=%2Fa%20b&digest=d41d8cd98f00b204e9800998ecf8427e&status=200&size=0&seq=1")


def test_encode_keeps_unreserved_and_uppercases_hex():
    n = Notification("AZaz09-._~/?#[]@!$&'()*+,;=%é", EMPTY_MD5, 1, 2, 3)
    url_param = encode_notification(n).split("?", 1)[1].split("&")[0]
    assert url_param == "url=AZaz09-._~%2F%3F%23%5B%5D%40%21%24%26%27%28%29%2A%2B%2C%3B%3D%25%C3%A9"


def test_encode_param_order():
    target = encode_notification(Notification("u", ABC_MD5, 404, 3, 9))
    names = [p.split("=")[0] for p in target.split("?", 1)[1].split("&")]
    assert names == ["url", "digest", "status", "size", "seq"]


def test_encode_rejects_bad_digest():
    with pytest.raises(NotificationError):
        encode_notification(Notification("u", "ABC", 200, 0, 1))


def test_decode_example():
    target = "/sensor-notify?url=%2Fa%20b&digest=d41d8cd98f00b204e9800998ecf8427e&status=200&size=0&seq=1"
    assert decode_notification(target) == Notification("/a b", EMPTY_MD5, 200, 0, 1)


@pytest.mark.parametrize("query,param", [
    ("url=x&status=200&size=0&seq=1", "digest"),
    ("url=x&digest=" + ABC_MD5 + "&status=200&size=0", "seq"),
    ("url=x&url=y&digest=" + ABC_MD5 + "&status=200&size=0&seq=1", "url"),
    ("url=x&digest=" + ABC_MD5.upper() + "&status=200&size=0&seq=1", "digest"),
    ("url=x&digest=abc&status=200&size=0&seq=1", "digest"),
    ("url=x&digest=" + ABC_MD5 + "&status=2x0&size=0&seq=1", "status"),
    ("url=x&digest=" + ABC_MD5 + "&status=200&size=-1&seq=1", "size"),
    ("url=x&digest=" + ABC_MD5 + "&status=200&size=0&seq=1.5", "seq"),
    ("", "url"),
])
def test_decode_rejections_name_param(query, param):
    with pytest.raises(NotificationError) as info:
        decode_notification(query)
    assert info.value.param == param


notifications = st.builds(
    Notification,
    url=st.text(max_size=60),
    digest=st.binary(max_size=32).map(lambda b: hashlib.md5(b).hexdigest()),
    status=st.sampled_from([200, 403, 404, 500]) | st.integers(0, 999),
    size=st.integers(0, 2 ** 40),
    seq=st.integers(0, 2 ** 63),
)


@settings(max_examples=1000, deadline=None)
@given(notifications)
def test_roundtrip_property(n):
    assert decode_notification(encode_notification(n)) == n


# -- middleware ----------------------------------------------------------------

class Origin:
    def __init__(self, body=b"v1", status="200 OK", ctype="text/html"):
        self.body, self.status, self.ctype = body, status, ctype
        self.use_write = False

    def __call__(self, environ, start_response):
        headers = [("Content-Type", self.ctype), ("X-Stamp", "volatile")]
        write = start_response(self.status, headers)
        if self.use_write:
            write(self.body)
            return []
        # two chunks so the tap has to hash incrementally
        return [self.body[:1], self.body[1:]]


class Collect:
    """Notifier stand-in that records submissions synchronously."""

    def __init__(self):
        self.sent = []
        self.overflows = 0
        self.failures = 0

    def submit(self, url, digest, status, size):
        self.sent.append(Notification(url, digest, status, size, len(self.sent) + 1))


def sensor(origin, rules=(), notify_on_new=False):
    store = FingerprintStore()
    notes = Collect()
    return SensorMiddleware(origin, store, ExclusionRules(rules), notes, notify_on_new), store, notes


def test_change_yields_exactly_one_notification():
    origin = Origin(b"v1")
    app, store, notes = sensor(origin)
    call(app, "/page")
    call(app, "/page")
    origin.body = b"v2"
    call(app, "/page")
    call(app, "/page")
    assert len(notes.sent) == 1
    n = notes.sent[0]
    assert n.digest == hashlib.md5(b"v2").hexdigest() and n.size == 2 and n.status == 200
    assert n.url == "http://127.0.0.1/page"


def test_identical_requests_no_notification():
    app, store, notes = sensor(Origin(b"same"))
    for _ in range(5):
        call(app, "/p", "x=1")
    assert notes.sent == [] and len(store) == 1


def test_notify_on_new_flag():
    app, _, notes = sensor(Origin(b"a"), notify_on_new=True)
    call(app, "/p")
    call(app, "/p")
    assert len(notes.sent) == 1


def test_excluded_path_never_fingerprinted():
    app, store, notes = sensor(Origin(b"x"), rules=["/private"])
    for i in range(10):
        call(app, "/private/doc")
    assert len(store) == 0 and notes.sent == [] and app.fingerprints == 0


def test_status_change_is_a_change():
    origin = Origin(b"gone")
    app, _, notes = sensor(origin)
    call(app, "/p")
    origin.status = "404 Not Found"
    call(app, "/p")
    assert [n.status for n in notes.sent] == [404]


def test_unobserved_methods_and_statuses():
    origin = Origin(b"x", status="302 Found")
    app, store, _ = sensor(origin)
    call(app, "/p")
    call(app, "/p", method="POST")
    assert len(store) == 0


def test_write_callable_bodies_are_hashed():
    origin = Origin(b"written")
    origin.use_write = True
    app, store, _ = sensor(origin)
    status, headers, body = call(app, "/w")
    assert body == b"written"
    assert store.get(FingerprintKey("GET", "/w", "")).digest == hashlib.md5(b"written").hexdigest()


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=512), st.sampled_from(["200 OK", "404 Not Found", "302 Found", "500 Oops"]),
       st.sampled_from(["/", "/a", "/private/x"]))
def test_pass_through_transparency(body, status, path):
    origin = Origin(body, status)
    direct = call(origin, path)
    app, _, _ = sensor(origin, rules=["/private"])
    assert call(app, path) == direct


# -- notifier ------------------------------------------------------------------

def test_notifier_overflow_drops_oldest():
    n = Notifier(lambda note: None, capacity=3)
    for i in range(5):
        n.submit(f"u{i}", ABC_MD5, 200, i)
    assert n.overflows == 2 and n.pending() == 3
    got = []
    n.deliver = got.append
    n.start()
    assert n.flush(2)
    n.stop()
    assert [x.url for x in got] == ["u2", "u3", "u4"]
    assert [x.seq for x in got] == [3, 4, 5]


def test_notifier_failures_counted_not_raised():
    def boom(note):
        raise ConnectionError("robot down")

    n = Notifier(boom).start()
    n.submit("u", ABC_MD5, 200, 1)
    n.submit("v", ABC_MD5, 200, 1)
    assert n.flush(2)
    n.stop()
    assert n.failures == 2 and n.delivered == 0


def test_notifier_seq_strictly_increasing():
    n = Notifier(lambda note: None)
    seqs = [n.submit("u", ABC_MD5, 200, 0).seq for _ in range(50)]
    assert seqs == sorted(set(seqs))


# -- robot receiver ------------------------------------------------------------

class FakeClock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        return self.t


def test_robot_receive_dedup_window():
    clock = FakeClock()
    q = RefetchQueue(window=10, clock=clock)
    n = Notification("http://h/p", ABC_MD5, 200, 3, 1)
    assert robot_receive(n, q)[0] == 200 and len(q) == 1
    clock.t = 5
    assert robot_receive(n, q)[0] == 200 and len(q) == 1
    assert q.duplicates == 1
    assert q.offer(Notification("http://h/p", EMPTY_MD5, 200, 0, 2))
    clock.t = 11
    assert q.offer(n) and len(q) == 3


def test_receiver_endpoint_statuses():
    q = RefetchQueue()
    app = RobotReceiver(q)
    good = encode_notification(Notification("http://h/p", ABC_MD5, 200, 3, 1)).split("?", 1)[1]
    status, _, body = call(app, "/sensor-notify", good)
    assert status.startswith("200") and len(q) == 1
    status, _, body = call(app, "/sensor-notify", "url=x&status=200&size=0&seq=1")
    assert status.startswith("400") and b"digest" in body and len(q) == 1
    assert call(app, "/elsewhere", good)[0].startswith("404")
    status, _, _ = call(app, "/sensor-notify", good)
    assert status.startswith("200") and len(q) == 1


def test_refetcher_indexes_pages():
    q = RefetchQueue()
    pages = {"http://h/a": (200, b"abc")}
    r = Refetcher(q, fetch=lambda url: pages[url]).start()
    q.offer(Notification("http://h/a", ABC_MD5, 200, 3, 1))
    q.offer(Notification("http://h/missing", ABC_MD5, 200, 3, 2))
    assert r.drain(2)
    r.stop()
    assert r.index["http://h/a"].digest == ABC_MD5
    assert r.fetches == 1 and r.failures == 1


# -- over real sockets ---------------------------------------------------------

import urllib.error
import urllib.request

from sensorsim.protocol import ProxyApp, http_deliver
from sensorsim.protocol.server import serve_in_thread


@pytest.fixture
def servers():
    started = []

    def serve(app):
        srv, url = serve_in_thread(app)
        started.append(srv)
        return url

    yield serve
    for srv in started:
        srv.shutdown()
        srv.server_close()


def fetch(url, method="GET"):
    req = urllib.request.Request(url, method=method)
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            return resp.status, dict(resp.headers), resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, dict(exc.headers), exc.read()


def test_loopback_through_proxy(servers):
    content = {"/page": b"v1", "/gone": b"missing"}

    def origin(environ, start_response):
        path = environ["PATH_INFO"]
        status = "200 OK" if path != "/gone" else "404 Not Found"
        start_response(status, [("Content-Type", "text/plain")])
        return [content.get(path, b"")]

    origin_url = servers(origin)
    refetch = RefetchQueue(window=60)
    refetcher = Refetcher(refetch).start()
    robot_url = servers(RobotReceiver(refetch))
    notifier = Notifier(http_deliver(robot_url)).start()
    app = SensorMiddleware(ProxyApp(origin_url), FingerprintStore(), ExclusionRules(["/private"]),
                           notifier)
    sensor_url = servers(app)
    try:
        for v in (b"v1", b"v1", b"v2", b"v2"):
            content["/page"] = v
            status, headers, body = fetch(sensor_url + "/page")
            assert (status, body) == (200, v)
        assert fetch(sensor_url + "/gone")[0] == 404
        fetch(sensor_url + "/private/x")
        assert notifier.flush(5) and refetcher.drain(5)
    finally:
        notifier.stop()
        refetcher.stop()
    assert refetch.accepted == 1
    page = refetcher.index[sensor_url + "/page"]
    assert page.digest == hashlib.md5(b"v2").hexdigest() and page.size == 2
    # the refetch itself is a GET through the sensor, seen as Unchanged
    assert app.counters() == {"requests": 7, "fingerprints": 6, "notifications": 1,
                              "overflows": 0, "notify_failures": 0}


def test_proxy_head_and_unreachable(servers):
    def origin(environ, start_response):
        start_response("200 OK", [("Content-Type", "text/plain"), ("Content-Length", "5")])
        return [] if environ["REQUEST_METHOD"] == "HEAD" else [b"hello"]

    url = servers(ProxyApp(servers(origin)))
    status, headers, body = fetch(url + "/x", "HEAD")
    assert status == 200 and headers["Content-Length"] == "5" and body == b""
    dead = servers(ProxyApp("http://127.0.0.1:9"))
    assert fetch(dead + "/x")[0] == 502


def test_unreachable_robot_does_not_affect_clients(servers):
    body = {"v": b"a"}

    def origin(environ, start_response):
        start_response("200 OK", [("Content-Type", "text/plain")])
        return [body["v"]]

    notifier = Notifier(http_deliver("http://127.0.0.1:9", timeout=1)).start()
    app = SensorMiddleware(origin, FingerprintStore(), ExclusionRules(), notifier)
    url = servers(app)
    for v in (b"a", b"b", b"c"):
        body["v"] = v
        assert fetch(url + "/p")[2] == v
    assert notifier.flush(10)
    notifier.stop()
    assert app.counters()["notify_failures"] == 2
