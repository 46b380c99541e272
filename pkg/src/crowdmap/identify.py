"""Free-text note -> canonical landmark label."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from crowdmap.errors import InputError, ProtocolError
from crowdmap.services import post_json


@dataclass(frozen=True)
class CategoryTable:
    """Label -> keywords. Matching is case-insensitive substring search."""

    entries: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self) -> None:
        labels = [label for label, _ in self.entries]
        if len(set(labels)) != len(labels):
            raise InputError("category labels must be unique")
        for label, keywords in self.entries:
            if any(not kw for kw in keywords):
                raise InputError(f"empty keyword under {label!r}")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Iterable[str]]) -> CategoryTable:
        return cls(tuple((label, tuple(kws)) for label, kws in mapping.items()))

    @classmethod
    def load(cls, path: str | Path) -> CategoryTable:
        """Read a JSON object ``{"Label": ["keyword", ...], ...}``."""
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict) or not all(
            isinstance(v, list) and all(isinstance(k, str) for k in v) for v in data.values()
        ):
            raise InputError(f"{path}: expected an object of label -> list of keywords")
        return cls.from_mapping(data)

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.entries]


def identify_label(note: str, table: CategoryTable) -> str | None:
    """Label whose keyword gives the longest match in ``note``.

    Equal-length matches go to the lexicographically smallest label, so the
    result does not depend on table order. Returns None when nothing matches.
    """
    if not note:
        raise InputError("note must be non-empty")
    haystack = note.casefold()
    best: tuple[int, str] | None = None
    for label, keywords in table.entries:
        for kw in keywords:
            if kw.casefold() in haystack:
                key = (-len(kw), label)
                if best is None or key < best:
                    best = key
    return None if best is None else best[1]


def label_via_service(
    note: str,
    categories: Sequence[str],
    endpoint: str,
    timeout: float | None = None,
) -> str:
    """Ask the external labeling service to pick one of ``categories`` for ``note``.

    Raises TransportError on network failure and ProtocolError when the answer
    is malformed or not one of the offered categories.
    """
    if not categories:
        raise InputError("categories must be non-empty")
    response = post_json(endpoint, {"text": note, "categories": list(categories)}, timeout)
    label = response.get("label")
    if not isinstance(label, str):
        raise ProtocolError("labeling response lacks a string 'label'")
    if label not in categories:
        raise ProtocolError(f"service returned {label!r}, which is not an offered category")
    return label
