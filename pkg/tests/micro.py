"""Two-resource scenario with every random draw pinned.

World: N=2, horizon=100, samples every 20 units, both rates 1 per horizon
(so exponential delays have mean 100). Initial sizes r0=1000, r1=2000.

Change history (same for every strategy):
  t=15  r0 Err404     -> v1 (404, 1000)
  t=45  r1 Available  -> no-op (already 200)
  t=52  r1 Shrink     -> v1 (200, 500)
  t=75  r0 Grow       -> v2 (404, 5000)
  t=78  r0 Err500     -> v3 (500, 5000)

Robot, download durations 25, 32, 28, 40:
  [0,25] r0@v0, [25,57] r1@v0 (round 1 done), [57,85] r0@v1, [85,125] r1@v1 (unfinished)
  t:          20    40    60    80   100
  fresh %:    50    50     0     0     0
  bytes:       0  1000  3000  3000  4000

Sensors, change-triggered. Notify delays 2, 3, 1, 1; download durations 10, 22, 15, 2:
  t=17 notify r0@v1 -> done 27;  t=55 notify r1@v1 -> done 77
  t=76 notify r0@v2 -> done 91;  t=79 notify r0@v3 -> done 81
  t=91 completion of v2 is refused by the version guard (index holds v3)
  t:          20    40    60    80   100
  fresh %:    50   100    50    50   100
  bytes:       0  1000  1000  1500 11500

Sensors, request-triggered. Requests r0 at 31, 34, 88; r1 at 61.
Notify delays 2, 3, 1; download durations 5, 7, 3:
  t=31 request sees r0@v1 -> notify 33 -> done 38
  t=34 request, nothing new
  t=61 request sees r1@v1 -> notify 64 -> done 71
  t=88 request sees r0@v3 -> notify 89 -> done 92
  t:          20    40    60    80   100
  fresh %:    50   100    50    50   100
  bytes:       0  1000  1000  1500  6500
"""

from conftest import ScriptedStreams, u_exp, u_kind, u_uniform_int

from sensorsim.experiment import Series
from sensorsim.world import RateSpec, WorldConfig

CONFIG = WorldConfig(n_resources=2, horizon=100, measurement_interval=20)
RATES = RateSpec(1, 1)
MEAN = 100.0
FAR = 1000  # pushes the next arrival past the horizon
SERIES = Series("[1-1]", RATES)

TIMES = [20, 40, 60, 80, 100]
EXPECTED = {
    "robot": ([50.0, 50.0, 0.0, 0.0, 0.0], [0, 1000, 3000, 3000, 4000]),
    "change": ([50.0, 100.0, 50.0, 50.0, 100.0], [0, 1000, 1000, 1500, 11500]),
    "request": ([50.0, 100.0, 50.0, 50.0, 100.0], [0, 1000, 1000, 1500, 6500]),
}
EXPECTED_DOWNLOADS = {"robot": [1000, 2000, 1000], "change": [1000, 500, 5000, 5000],
                      "request": [1000, 500, 5000]}
EXPECTED_NOTIFICATIONS = {"change": 4, "request": 3}


def _dl(d):
    return u_uniform_int(1, 40, d)


def _nt(d):
    return u_uniform_int(1, 3, d)


def streams(variant: str) -> ScriptedStreams:
    sizes = [u_uniform_int(65, 122880, 1000), u_uniform_int(65, 122880, 2000)]
    changes = {
        0: [u_exp(MEAN, 15),
            u_kind(0), u_exp(MEAN, 60),
            u_kind(4), u_uniform_int(1001, 122880, 5000), u_exp(MEAN, 3),
            u_kind(2), u_exp(MEAN, FAR)],
        1: [u_exp(MEAN, 45),
            u_kind(5), u_exp(MEAN, 7),
            u_kind(3), u_uniform_int(65, 1999, 500), u_exp(MEAN, FAR)],
    }
    if variant == "robot":
        return ScriptedStreams(sizes, changes, downloads=[_dl(d) for d in (25, 32, 28, 40)])
    if variant == "change":
        return ScriptedStreams(sizes, changes,
                               downloads=[_dl(d) for d in (10, 22, 15, 2)],
                               notifications=[_nt(d) for d in (2, 3, 1, 1)])
    if variant == "request":
        requests = {0: [u_exp(MEAN, 31), u_exp(MEAN, 3), u_exp(MEAN, 54), u_exp(MEAN, FAR)],
                    1: [u_exp(MEAN, 61), u_exp(MEAN, FAR)]}
        return ScriptedStreams(sizes, changes, requests,
                               downloads=[_dl(d) for d in (5, 7, 3)],
                               notifications=[_nt(d) for d in (2, 3, 1)])
    raise ValueError(variant)
