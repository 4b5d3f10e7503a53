"""Reference implementation of the server-side sensor and the robot receiver."""

from .robotd import IndexedPage, RefetchQueue, Refetcher, RobotReceiver, robot_receive
from .sensor import Notifier, ProxyApp, SensorMiddleware, http_deliver
from .store import (
    ExclusionRules,
    FingerprintEntry,
    FingerprintKey,
    FingerprintStore,
    Verdict,
    fingerprint,
    is_excluded,
    load_exclusions,
    parse_exclusions,
)
from .wire import NOTIFY_PATH, Notification, NotificationError, decode_notification, encode_notification

sensor_middleware = SensorMiddleware

__all__ = [
    "ExclusionRules",
    "FingerprintEntry",
    "FingerprintKey",
    "FingerprintStore",
    "IndexedPage",
    "NOTIFY_PATH",
    "Notification",
    "NotificationError",
    "Notifier",
    "ProxyApp",
    "RefetchQueue",
    "Refetcher",
    "RobotReceiver",
    "Verdict",
    "decode_notification",
    "encode_notification",
    "fingerprint",
    "http_deliver",
    "is_excluded",
    "load_exclusions",
    "parse_exclusions",
    "robot_receive",
    "sensor_middleware",
]
