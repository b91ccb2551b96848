"""Machine words: integers, tuples of words, and the two sentinels.

Shared cells hold arbitrary immutable words.  ``BOT`` and ``INF`` sit outside
the integer range and compare only by identity.
"""

from __future__ import annotations

import enum
from typing import Any


class Sentinel(enum.Enum):
    BOT = "⊥"
    INF = "∞"

    def __repr__(self) -> str:
        return self.value

    __str__ = __repr__


BOT = Sentinel.BOT
INF = Sentinel.INF

#: an ``inc`` that guessed wrong
FAIL = BOT


def is_int(w: Any) -> bool:
    return isinstance(w, int) and not isinstance(w, bool)


def encode(w: Any) -> Any:
    """Turn a word into plain JSON data."""
    if isinstance(w, Sentinel):
        return {"$": w.name.lower()}
    if isinstance(w, (tuple, list)):
        return [encode(x) for x in w]
    if isinstance(w, dict):
        return {k: encode(v) for k, v in w.items()}
    return w


def decode(d: Any) -> Any:
    if isinstance(d, list):
        return tuple(decode(x) for x in d)
    if isinstance(d, dict):
        if set(d) == {"$"}:
            return Sentinel[d["$"].upper()]
        return {k: decode(v) for k, v in d.items()}
    return d
