import contextlib
import math

import pytest

from sensorsim.engine import ScriptedStream

_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion(capsys):
    """``with criterion("3", "robot rounds"):`` records and prints one PASS/FAIL line."""

    @contextlib.contextmanager
    def check(number: str, title: str):
        try:
            yield
        except BaseException as exc:
            line = f"ACCEPTANCE {number} FAIL {title}: {exc}".splitlines()[0]
            _CRITERIA.append((number, False, line))
            with capsys.disabled():
                print("\n" + line)
            raise
        line = f"ACCEPTANCE {number} PASS {title}"
        _CRITERIA.append((number, True, line))
        with capsys.disabled():
            print("\n" + line)

    return check


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(_CRITERIA, key=lambda c: [int(x) if x.isdigit() else x
                                                       for x in c[0].replace(".", " ").split()]):
        terminalreporter.write_line(line)


# inverse maps from a wanted variate to the uniform that produces it

def u_uniform_int(lo: int, hi: int, value: int) -> float:
    assert lo <= value <= hi
    return (value - lo + 0.5) / (hi - lo + 1)


def u_exp(mean: float, delay: int) -> float:
    return -math.expm1(-delay / mean)


def u_kind(index: int) -> float:
    return (index + 0.5) / 6


class ScriptedStreams:
    """Streams object for Simulation with every stream scripted."""

    def __init__(self, sizes=(), changes=None, requests=None, downloads=(), notifications=()):
        self._sizes = ScriptedStream(sizes, "sizes")
        self._changes = {k: ScriptedStream(v, f"change[{k}]") for k, v in (changes or {}).items()}
        self._requests = {k: ScriptedStream(v, f"request[{k}]") for k, v in (requests or {}).items()}
        self._downloads = ScriptedStream(downloads, "downloads")
        self._notifications = ScriptedStream(notifications, "notifications")

    def sizes(self):
        return self._sizes

    def change(self, rid):
        return self._changes.setdefault(rid, ScriptedStream((), f"change[{rid}]"))

    def request(self, rid):
        return self._requests.setdefault(rid, ScriptedStream((), f"request[{rid}]"))

    def downloads(self):
        return self._downloads

    def notifications(self):
        return self._notifications

    def leftovers(self):
        out = {"sizes": self._sizes.remaining, "downloads": self._downloads.remaining,
               "notifications": self._notifications.remaining}
        out.update({s.name: s.remaining for s in self._changes.values()})
        out.update({s.name: s.remaining for s in self._requests.values()})
        return {k: v for k, v in out.items() if v}
