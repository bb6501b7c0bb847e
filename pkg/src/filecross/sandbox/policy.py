from __future__ import annotations

from dataclasses import dataclass

from ..versions import JELLY_BEAN, Version
from .profile import BrowserProfile, CustomEngine


@dataclass(frozen=True)
class SopPolicy:
    device_version: str
    allow_file_to_file: bool
    allow_file_to_http: bool
    symlink_flaw_present: bool


def effective_policy(profile: BrowserProfile, device_version: str) -> SopPolicy:
    """Same-origin behaviour of ``file://`` documents for this browser on this device.

    The system webkit fixed file/file and file/http reads from 4.1 on, but only
    for apps compiled against a 4.1+ SDK that avoid the legacy access APIs.
    No system version mitigates the symlink flaw.
    """
    if isinstance(profile.engine, CustomEngine):
        e = profile.engine
        return SopPolicy(device_version, e.allow_file_to_file, e.allow_file_to_http,
                         e.symlink_flaw_present)
    loose = (Version(device_version) < JELLY_BEAN
             or Version(profile.compiled_sdk) < JELLY_BEAN
             or profile.uses_legacy_file_access_api)
    return SopPolicy(device_version, loose, loose, not profile.symlink_mitigated)
