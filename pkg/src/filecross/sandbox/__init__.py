"""Device backend interface and the deterministic browser-behaviour sandbox."""

from .device import (
    DEFAULT_EXTENSIONS,
    DEFAULT_KEYWORDS,
    AdbBackend,
    Delivery,
    DeliveryError,
    DeliveryResult,
    DeviceBackend,
    ExecutionTrace,
    SandboxDevice,
    find_targets,
    http_beacon_sink,
    warm_up,
)
from .policy import SopPolicy, effective_policy
from .profile import (
    EXTERNAL_INTENT,
    SYSTEM_DEFAULT,
    USER_BAR,
    BrowserProfile,
    CustomEngine,
    PatchModes,
    RenderPoints,
    load_corpus,
    load_profile,
    profile_from_dict,
    profile_to_dict,
)
from .vfs import VirtualFS, Zone, ZoneEscape

__all__ = [
    "AdbBackend", "BrowserProfile", "CustomEngine", "DEFAULT_EXTENSIONS", "DEFAULT_KEYWORDS",
    "Delivery", "DeliveryError", "DeliveryResult", "DeviceBackend", "EXTERNAL_INTENT",
    "ExecutionTrace", "PatchModes", "RenderPoints", "SYSTEM_DEFAULT", "SandboxDevice",
    "SopPolicy", "USER_BAR", "VirtualFS", "Zone", "ZoneEscape", "effective_policy",
    "find_targets", "http_beacon_sink", "load_corpus", "load_profile", "profile_from_dict",
    "profile_to_dict", "warm_up",
]
