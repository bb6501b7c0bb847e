"""Android version strings compared as integer tuples ("4.0" < "4.1" < "4.10")."""

from __future__ import annotations

from functools import total_ordering


@total_ordering
class Version:
    __slots__ = ("text", "parts")

    def __init__(self, text: str | Version):
        if isinstance(text, Version):
            text = text.text
        text = str(text).strip()
        try:
            parts = tuple(int(p) for p in text.split("."))
        except ValueError:
            raise ValueError(f"invalid version string: {text!r}") from None
        if not parts:
            raise ValueError("empty version string")
        self.text = text
        self.parts = parts

    def _key(self) -> tuple[int, ...]:
        # "4.1" and "4.1.0" compare equal
        parts = list(self.parts)
        while len(parts) > 1 and parts[-1] == 0:
            parts.pop()
        return tuple(parts)

    def __eq__(self, other):
        if not isinstance(other, Version):
            try:
                other = Version(other)
            except (TypeError, ValueError):
                return NotImplemented
        return self._key() == other._key()

    def __lt__(self, other):
        if not isinstance(other, Version):
            other = Version(other)
        return self._key() < other._key()

    def __hash__(self):
        return hash(self._key())

    def __str__(self):
        return self.text

    def __repr__(self):
        return f"Version({self.text!r})"


JELLY_BEAN = Version("4.1")
