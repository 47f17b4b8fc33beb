"""Sliding-window state: per-group aggregates and bounded window history.

Windows tumble: contiguous, non-overlapping, hop = length, indexed from the
first event a query admits.  Closed windows are frozen into immutable
snapshots and pushed onto a bounded history so alert expressions can reach
k windows back; absent groups or too-short history read as ABSENT, which
every comparison treats as false.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Optional

from saql.evaluate import ABSENT, value_to_json
from saql.language import ast

_I64_MAX = 2**63 - 1


def assign_window(ts: int, t0: int, length_ms: int) -> int:
    """Window index of a timestamp; windows are [t0+k*len, t0+(k+1)*len)."""
    return (ts - t0) // length_ms


def sort_key(group: tuple) -> tuple:
    """Total order over group keys with mixed scalar types."""
    return tuple((type(v).__name__, v) for v in group)


class _FieldAccum:
    __slots__ = ("func", "total", "count", "low", "high", "values")

    def __init__(self, func: str):
        self.func = func
        self.total = 0
        self.count = 0
        self.low = None
        self.high = None
        self.values = set() if func == "set" else None

    def add(self, value):
        if self.func == "set":
            if value is not None:
                self.values.add(value)
            return
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            return  # absent or non-numeric: skipped, not zeroed
        self.count += 1
        self.total += value
        if self.total > _I64_MAX:
            self.total = _I64_MAX
        if self.low is None or value < self.low:
            self.low = value
        if self.high is None or value > self.high:
            self.high = value

    def value(self):
        if self.func == "set":
            return frozenset(self.values)
        if self.func == "count":
            return self.count
        if self.func == "sum":
            return min(self.total, _I64_MAX)
        if self.count == 0:
            return ABSENT
        if self.func == "avg":
            return self.total / self.count
        return self.low if self.func == "min" else self.high


@dataclass(frozen=True)
class FrozenWindow:
    """Immutable snapshot of one closed window."""

    index: int
    w_start: int
    w_end: int
    groups: dict  # group key -> {field name -> value}

    def value(self, group: tuple, fieldname: str):
        fields = self.groups.get(group)
        if fields is None:
            return ABSENT
        return fields.get(fieldname, ABSENT)

    def sorted_groups(self) -> list:
        return sorted(self.groups, key=sort_key)

    def all_values(self, fieldname: str) -> list:
        """(group, value) for every group where the field is present."""
        out = []
        for group in self.sorted_groups():
            v = self.groups[group].get(fieldname, ABSENT)
            if v is not ABSENT:
                out.append((group, v))
        return out


class WindowState:
    """One open window accumulating per-group aggregates."""

    def __init__(self, index: int, w_start: int, w_end: int, block: ast.StateBlock):
        self.index = index
        self.w_start = w_start
        self.w_end = w_end
        self.block = block
        self._groups: dict = {}

    def accumulate(self, group: tuple, values: dict):
        """Fold one matched binding's field values into its group."""
        accums = self._groups.get(group)
        if accums is None:
            accums = {f.name: _FieldAccum(f.func) for f in self.block.fields}
            self._groups[group] = accums
        for name, value in values.items():
            accums[name].add(value)

    def finalize(self) -> FrozenWindow:
        groups = {g: {name: acc.value() for name, acc in accums.items()}
                  for g, accums in self._groups.items()}
        return FrozenWindow(self.index, self.w_start, self.w_end, groups)


def snapshot_lines(frozen: FrozenWindow) -> Iterator[str]:
    """Debug dump: one JSON line per group of a closed window."""
    for group in frozen.sorted_groups():
        fields = {name: value_to_json(v)
                  for name, v in frozen.groups[group].items()}
        yield json.dumps({"window": frozen.index, "start": frozen.w_start,
                          "end": frozen.w_end, "group": list(group),
                          "fields": fields}, separators=(",", ":"))


class StateHistory:
    """The last N closed windows; [0] is the most recent."""

    def __init__(self, depth: int):
        self.depth = depth
        self._windows: deque = deque(maxlen=depth)

    def push(self, frozen: FrozenWindow):
        self._windows.appendleft(frozen)

    def window(self, k: int) -> Optional[FrozenWindow]:
        if 0 <= k < len(self._windows):
            return self._windows[k]
        return None

    def value(self, k: int, group: tuple, fieldname: str):
        frozen = self.window(k)
        if frozen is None:
            return ABSENT
        return frozen.value(group, fieldname)

    @property
    def current(self) -> Optional[FrozenWindow]:
        return self.window(0)
