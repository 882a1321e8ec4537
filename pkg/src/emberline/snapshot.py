"""Text snapshot and run-manifest formats.

Snapshot::

    emberline-snapshot v1 H W step
    <H lines of W characters from U, B, X; northern row first>
    agent row col water          (optional)

A trajectory file is a concatenation of snapshots.  A manifest is a list of
``key = value`` lines; ``#`` starts a comment.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import BURNED, BURNING, UNBURNED

MAGIC = "emberline-snapshot"
VERSION = "v1"
_TO_CHAR = {UNBURNED: "U", BURNING: "B", BURNED: "X"}
_FROM_CHAR = {v: k for k, v in _TO_CHAR.items()}


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Snapshot:
    fire: np.ndarray
    step: int = 0
    agent: tuple[int, int, int] | None = None  # (row, col, water)

    def __eq__(self, other):
        return (isinstance(other, Snapshot) and self.step == other.step and self.agent == other.agent
                and np.array_equal(self.fire, other.fire))


def serialize_snapshot(snap: Snapshot) -> str:
    fire = np.asarray(snap.fire)
    h, w = fire.shape
    lines = [f"{MAGIC} {VERSION} {h} {w} {snap.step}"]
    for row in fire[::-1]:
        lines.append("".join(_TO_CHAR[int(v)] for v in row))
    if snap.agent is not None:
        r, c, water = snap.agent
        lines.append(f"agent {r} {c} {water}")
    return "\n".join(lines) + "\n"


def serialize_snapshots(snaps) -> str:
    return "".join(serialize_snapshot(s) for s in snaps)


def parse_snapshots(text: str) -> list[Snapshot]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    out, i = [], 0
    while i < len(lines):
        head = lines[i].split()
        if len(head) != 5 or head[0] != MAGIC:
            raise SnapshotError(f"line {i + 1}: expected snapshot header, got {lines[i]!r}")
        if head[1] != VERSION:
            raise SnapshotError(f"unsupported snapshot version {head[1]!r}")
        try:
            h, w, step = int(head[2]), int(head[3]), int(head[4])
        except ValueError:
            raise SnapshotError(f"line {i + 1}: bad header numbers") from None
        if h < 1 or w < 1:
            raise SnapshotError(f"line {i + 1}: bad dimensions {h}x{w}")
        rows = lines[i + 1:i + 1 + h]
        if len(rows) != h:
            raise SnapshotError("truncated snapshot")
        fire = np.zeros((h, w), dtype=np.int8)
        for k, row in enumerate(rows):
            if len(row) != w or any(ch not in _FROM_CHAR for ch in row):
                raise SnapshotError(f"line {i + 2 + k}: expected {w} characters from U/B/X")
            fire[h - 1 - k] = [_FROM_CHAR[ch] for ch in row]
        i += 1 + h
        agent = None
        if i < len(lines) and lines[i].startswith("agent"):
            parts = lines[i].split()
            if len(parts) != 4:
                raise SnapshotError(f"line {i + 1}: expected 'agent row col water'")
            agent = tuple(int(p) for p in parts[1:])
            i += 1
        out.append(Snapshot(fire, step, agent))
    return out


def parse_snapshot(text: str) -> Snapshot:
    snaps = parse_snapshots(text)
    if len(snaps) != 1:
        raise SnapshotError(f"expected one snapshot, found {len(snaps)}")
    return snaps[0]


def write_snapshots(path, snaps) -> None:
    Path(path).write_text(serialize_snapshots(snaps), encoding="ascii")


def read_snapshots(path) -> list[Snapshot]:
    return parse_snapshots(Path(path).read_text(encoding="ascii"))


# -- manifests -----------------------------------------------------------------


def format_manifest(entries: dict) -> str:
    lines = ["# emberline run manifest"]
    for key, value in entries.items():
        if isinstance(value, (list, tuple)):
            value = " ".join(str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"manifest line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out
