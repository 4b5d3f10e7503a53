"""Response fingerprints, the per-request fingerprint store, exclusion rules."""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import asdict, dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

__all__ = [
    "FingerprintKey",
    "FingerprintEntry",
    "FingerprintStore",
    "Verdict",
    "ExclusionRules",
    "fingerprint",
    "is_excluded",
    "load_exclusions",
    "parse_exclusions",
]


class FingerprintKey(NamedTuple):
    method: str
    path: str
    query: str


@dataclass(frozen=True)
class FingerprintEntry:
    digest: str
    size: int
    content_type: str
    status: int
    last_seen: float = 0.0

    def same_response(self, other: "FingerprintEntry") -> bool:
        return (self.digest, self.status, self.size) == (other.digest, other.status, other.size)


class Verdict(str, Enum):
    NEW = "new"
    UNCHANGED = "unchanged"
    CHANGED = "changed"


def fingerprint(body: bytes, status: int, content_type: str,
                last_seen: Optional[float] = None) -> FingerprintEntry:
    return FingerprintEntry(hashlib.md5(body).hexdigest(), len(body), content_type, status,
                            time.time() if last_seen is None else last_seen)


class FingerprintStore:
    """In-memory request -> response fingerprint map with atomic observe."""

    def __init__(self):
        self._entries: dict[FingerprintKey, FingerprintEntry] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key) -> bool:
        return key in self._entries

    def get(self, key: FingerprintKey) -> Optional[FingerprintEntry]:
        return self._entries.get(key)

    def keys(self) -> list[FingerprintKey]:
        with self._lock:
            return list(self._entries)

    def observe(self, key: FingerprintKey, entry: FingerprintEntry) -> Verdict:
        with self._lock:
            old = self._entries.get(key)
            if old is None:
                self._entries[key] = entry
                return Verdict.NEW
            if old.same_response(entry):
                self._entries[key] = replace(old, last_seen=entry.last_seen)
                return Verdict.UNCHANGED
            self._entries[key] = entry
            return Verdict.CHANGED

    def save(self, path) -> None:
        with self._lock:
            rows = [{"key": list(k), "entry": asdict(e)} for k, e in self._entries.items()]
        Path(path).write_text(json.dumps(rows, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FingerprintStore":
        store = cls()
        for row in json.loads(Path(path).read_text(encoding="utf-8")):
            store._entries[FingerprintKey(*row["key"])] = FingerprintEntry(**row["entry"])
        return store


class ExclusionRules:
    """Path prefixes excluded from fingerprinting, robots.txt style."""

    def __init__(self, prefixes: Iterable[str] = ()):
        self.prefixes = tuple(prefixes)

    def __len__(self) -> int:
        return len(self.prefixes)

    def __repr__(self) -> str:
        return f"ExclusionRules({list(self.prefixes)!r})"

    def excludes(self, path: str) -> bool:
        return any(path.startswith(p) for p in self.prefixes)


def is_excluded(rules: ExclusionRules, path: str) -> bool:
    return rules.excludes(path)


def parse_exclusions(text: str) -> ExclusionRules:
    prefixes = []
    for line in text.splitlines():
        line = line.rstrip()
        if not line or line.startswith("#"):
            continue
        prefixes.append(line)
    return ExclusionRules(prefixes)


def load_exclusions(path) -> ExclusionRules:
    return parse_exclusions(Path(path).read_text(encoding="utf-8"))
