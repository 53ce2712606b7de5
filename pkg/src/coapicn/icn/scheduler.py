"""Single-threaded discrete-event scheduler and line-oriented event log."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Any, Callable


def fmt_time(t: float) -> str:
    if isinstance(t, int) or float(t).is_integer():
        return str(int(t))
    return repr(float(t))


@dataclass(frozen=True)
class LogRecord:
    time: float
    node: str
    kind: str
    object_id: str
    detail: str

    def line(self) -> str:
        return f"{fmt_time(self.time)} | {self.node} | {self.kind} | {self.object_id or '-'} | {self.detail}"


class EventLog:
    def __init__(self, header: dict[str, str] | None = None) -> None:
        self.header = dict(header or {})
        self.records: list[LogRecord] = []

    def add(self, time: float, node: str, kind: str, object_id: Any = "", detail: str = "") -> None:
        self.records.append(LogRecord(time, node, kind, str(object_id) if object_id else "", detail))

    def kinds(self) -> set[str]:
        return {r.kind for r in self.records}

    def of_kind(self, kind: str) -> list[LogRecord]:
        return [r for r in self.records if r.kind == kind]

    def text(self) -> str:
        head = ["# " + " ".join(f"{k}={v}" for k, v in self.header.items())]
        head.append("# time | node | event-kind | object-id | detail")
        return "\n".join(head + [r.line() for r in self.records]) + "\n"


class Scheduler:
    """Events run in (time, enqueue sequence) order."""

    def __init__(self) -> None:
        self.now: float = 0
        self._queue: list[tuple[float, int, Callable[..., None], tuple]] = []
        self._seq = itertools.count()
        self.executed = 0

    def at(self, time: float, fn: Callable[..., None], *args: Any) -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule in the past ({time} < {self.now})")
        heapq.heappush(self._queue, (time, next(self._seq), fn, args))

    def after(self, delay: float, fn: Callable[..., None], *args: Any) -> None:
        self.at(self.now + delay, fn, *args)

    def pending(self) -> int:
        return len(self._queue)

    def run(self, until: float | None = None, max_events: int | None = None) -> None:
        while self._queue:
            time, _, fn, args = self._queue[0]
            if until is not None and time > until:
                break
            heapq.heappop(self._queue)
            self.now = time
            fn(*args)
            self.executed += 1
            if max_events is not None and self.executed >= max_events:
                raise RuntimeError(f"event budget of {max_events} exhausted at t={time}")
        if until is not None and self.now < until:
            self.now = until
