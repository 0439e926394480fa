"""Trace events and their canonical line rendering.

One event per line, tab separated: ``time  seq  kind  node  data`` where
``node`` and ``data`` are compact JSON. The first line carries run metadata as
``#meta<TAB>{json}``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

KINDS = ("send", "deliver", "timer", "op-start", "op-complete", "version-visible", "snapshot", "liveness")


class TraceFormatError(ValueError):
    pass


def _dumps(x) -> str:
    return json.dumps(x, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class Event:
    time: int
    seq: int
    kind: str
    node: Any
    data: dict

    def render(self) -> str:
        return f"{self.time}\t{self.seq}\t{self.kind}\t{_dumps(self.node)}\t{_dumps(self.data)}"

    @classmethod
    def parse(cls, line: str) -> "Event":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 5:
            raise TraceFormatError(f"expected 5 tab-separated fields, got {len(parts)}: {line[:80]!r}")
        t, seq, kind, node, data = parts
        if kind not in KINDS:
            raise TraceFormatError(f"unknown event kind {kind!r}")
        return cls(int(t), int(seq), kind, json.loads(node), json.loads(data))


@dataclass
class Trace:
    meta: dict = field(default_factory=dict)
    events: list[Event] = field(default_factory=list)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self.events if e.kind in kinds]

    def render(self) -> str:
        lines = [f"#meta\t{_dumps(self.meta)}"]
        lines.extend(e.render() for e in self.events)
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "Trace":
        meta: dict = {}
        events = []
        for n, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            if line.startswith("#meta\t"):
                meta = json.loads(line[len("#meta\t"):])
                continue
            if line.startswith("#"):
                continue
            try:
                events.append(Event.parse(line))
            except (ValueError, json.JSONDecodeError) as exc:
                raise TraceFormatError(f"line {n + 1}: {exc}") from exc
        seqs = [e.seq for e in events]
        if len(set(seqs)) != len(seqs):
            raise TraceFormatError("duplicate sequence numbers")
        return cls(meta, events)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.render())

    @classmethod
    def load(cls, path: str | Path) -> "Trace":
        return cls.parse(Path(path).read_text())
