import pytest

from sensorsim.engine import ContractViolation
from sensorsim.metrics import Index, IndexEntry, freshness, measure, record_download, sample_times
from sensorsim.world import Resource, Snapshot, Status, World, WorldConfig


def world_of(*versions):
    cfg = WorldConfig(n_resources=len(versions), horizon=100, measurement_interval=10)
    return World(cfg, [Resource(i, Status.OK, 100, v) for i, v in enumerate(versions)])


def test_freshness_identity():
    w = world_of(0, 3, 1)
    assert freshness(Index.warm(w), w) == 100.0


def test_freshness_three_of_four():
    w = world_of(1, 1, 1, 1)
    idx = Index.warm(w)
    idx.entries[2] = IndexEntry(2, Status.OK, 0, 100, 0)
    assert freshness(idx, w) == 75.0


def test_freshness_requires_status_match():
    w = world_of(1, 1)
    idx = Index.warm(w)
    idx.entries[0] = IndexEntry(0, Status.NOT_FOUND, 1, 100, 0)
    assert freshness(idx, w) == 50.0


def test_freshness_cold_index():
    w = world_of(0, 0, 0)
    assert freshness(Index(3), w) == 0.0


def test_freshness_empty_world():
    w = world_of(0)
    w.resources = []
    with pytest.raises(ContractViolation):
        freshness(Index(0), w)


def test_record_download():
    s65 = Snapshot(0, Status.OK, 65, 0, 0)
    assert record_download(0, s65) == 65
    c = record_download(record_download(0, Snapshot(0, Status.OK, 100, 0, 0)), Snapshot(1, Status.OK, 200, 0, 0))
    assert c == 300


def test_record_download_zero_byte_errors():
    s = Snapshot(0, Status.NOT_FOUND, 5000, 1, 0)
    assert record_download(10, s) == 5010
    assert record_download(10, s, zero_byte_errors=True) == 10


def test_sample_times():
    assert len(sample_times(8_640_000, 10_000)) == 864
    assert sample_times(8_640_000, 10_000)[0] == 10_000
    assert sample_times(50_000, 10_000) == [10_000, 20_000, 30_000, 40_000, 50_000]


def test_measure():
    w = world_of(0, 0)
    s = measure(10_000, Index.warm(w), w, 77)
    assert s == (10_000, 100.0, 77)
