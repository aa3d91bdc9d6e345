"""Frozen airport / origin-destination index.

Every delay-state matrix column is identified by position in this index, so
the ordering is fixed at construction and fingerprinted; downstream files and
checkpoints carry the fingerprint to prevent column misalignment.
"""

from __future__ import annotations

import hashlib
import json
import re
from typing import Iterable, Sequence

_ICAO_RE = re.compile(r"^[A-Z]{4}$")


class UnknownOdPair(KeyError):
    """The (origin, destination) pair is not in the index."""


class IndexMismatch(ValueError):
    """An artifact was produced under a different network index."""


class NetworkIndex:
    """Ordered airports and OD pairs with two-way lookup."""

    def __init__(self, airports: Sequence[str], od_pairs: Iterable[tuple[str, str]]):
        airports = tuple(airports)
        od_pairs = tuple((o, d) for o, d in od_pairs)
        if len(set(airports)) != len(airports):
            raise ValueError("duplicate airports")
        if len(set(od_pairs)) != len(od_pairs):
            raise ValueError("duplicate OD pairs")
        known = set(airports)
        for code in airports:
            if not _ICAO_RE.match(code):
                raise ValueError(f"bad airport code {code!r}")
        for o, d in od_pairs:
            if o not in known or d not in known:
                raise ValueError(f"OD pair ({o}, {d}) references unknown airport")
            if o == d:
                raise ValueError(f"degenerate OD pair ({o}, {d})")
        self._airports = airports
        self._od_pairs = od_pairs
        self._airport_pos = {a: i for i, a in enumerate(airports)}
        self._od_pos = {od: i for i, od in enumerate(od_pairs)}

    @property
    def airports(self) -> tuple[str, ...]:
        return self._airports

    @property
    def od_pairs(self) -> tuple[tuple[str, str], ...]:
        return self._od_pairs

    @property
    def n_airports(self) -> int:
        return len(self._airports)

    @property
    def n_od(self) -> int:
        return len(self._od_pairs)

    def airport_pos(self, code: str) -> int | None:
        return self._airport_pos.get(code)

    def od_pos(self, origin: str, destination: str) -> int:
        try:
            return self._od_pos[(origin, destination)]
        except KeyError:
            raise UnknownOdPair(f"({origin}, {destination}) not in index") from None

    def has_od(self, origin: str, destination: str) -> bool:
        return (origin, destination) in self._od_pos

    @property
    def fingerprint(self) -> str:
        """SHA-256 over the canonical serialized index."""
        return hashlib.sha256(
            json.dumps(self.to_json(), sort_keys=True).encode()
        ).hexdigest()

    def to_json(self) -> dict:
        return {
            "airports": list(self._airports),
            "od_pairs": [list(p) for p in self._od_pairs],
        }

    @classmethod
    def from_json(cls, doc) -> "NetworkIndex":
        return cls(doc["airports"], [tuple(p) for p in doc["od_pairs"]])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, NetworkIndex)
            and self._airports == other._airports
            and self._od_pairs == other._od_pairs
        )

    def __repr__(self) -> str:
        return f"NetworkIndex({self.n_airports} airports, {self.n_od} OD pairs)"
