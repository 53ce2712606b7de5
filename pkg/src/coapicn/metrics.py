"""Run reports, their CSV form, and the two-mode comparison table."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean

__all__ = [
    "ScenarioMismatch",
    "MetricsReport",
    "ComparisonRow",
    "to_csv",
    "read_csv",
    "compare",
    "format_comparison",
    "comparison_csv",
]

CSV_HEADER = ("mode", "metric", "key", "value")

# fabric message kinds that carry client traffic, as opposed to RD plumbing
REQUEST_KIND = "request"
RESPONSE_KIND = "response"


class ScenarioMismatch(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    mode: str
    digest: str
    seed: int
    tick_ms: float = 1.0
    link_counts: dict[tuple[str, str], dict[str, int]] = field(default_factory=dict)
    fabric_messages: int = 0
    control_messages: int = 0
    ip_datagrams: int = 0
    request_messages: int = 0
    response_messages: int = 0
    notification_messages: int = 0
    kind_messages: dict[str, int] = field(default_factory=dict)
    deliveries: int = 0
    expected_deliveries: int = 0
    nap_stats: dict[str, dict[str, int]] = field(default_factory=dict)
    server_requests: dict[str, int] = field(default_factory=dict)
    server_max_outstanding: dict[str, int] = field(default_factory=dict)
    client_latencies: dict[str, tuple[float, ...]] = field(default_factory=dict)
    client_failures: int = 0

    def counter(self, name: str) -> int:
        """Sum of one NAP counter over all NAPs."""
        return sum(stats.get(name, 0) for stats in self.nap_stats.values())

    @property
    def max_pending(self) -> dict[str, int]:
        return {n: s.get("max_pending_waiters", 0) for n, s in self.nap_stats.items()}

    def rows(self) -> list[tuple[str, str, float | int | str]]:
        out: list[tuple[str, str, float | int | str]] = [
            ("scenario", "digest", self.digest),
            ("scenario", "seed", self.seed),
            ("total", "fabric_messages", self.fabric_messages),
            ("total", "control_messages", self.control_messages),
            ("total", "ip_datagrams", self.ip_datagrams),
            ("total", "request_messages", self.request_messages),
            ("total", "response_messages", self.response_messages),
            ("total", "notification_messages", self.notification_messages),
            ("total", "deliveries", self.deliveries),
            ("total", "client_failures", self.client_failures),
        ]
        for kind, n in sorted(self.kind_messages.items()):
            out.append(("kind", kind, n))
        for name in ("orphan_responses", "stale_notices", "token_mismatch", "late_responses", "late_notices",
                     "stale_notifications", "suppressed_local", "suppressed_at_server", "forwarded_to_server"):
            out.append(("counter", name, self.counter(name)))
        for (a, b), kinds in sorted(self.link_counts.items()):
            for kind, n in sorted(kinds.items()):
                out.append((f"link.{kind}", f"{a}-{b}", n))
        for nap, stats in sorted(self.nap_stats.items()):
            for name, n in sorted(stats.items()):
                out.append((f"nap.{name}", nap, n))
        for server, n in sorted(self.server_requests.items()):
            out.append(("server.requests", server, n))
        for server, n in sorted(self.server_max_outstanding.items()):
            out.append(("server.max_outstanding", server, n))
        for client, lats in sorted(self.client_latencies.items()):
            out.append(("client.responses", client, len(lats)))
            if lats:
                out.append(("client.latency_mean_ms", client, round(mean(lats) * self.tick_ms, 6)))
                out.append(("client.latency_max_ms", client, round(max(lats) * self.tick_ms, 6)))
        return out


def to_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for metric, key, value in report.rows():
        writer.writerow((report.mode, metric, key, value))
    return buf.getvalue()


@dataclass(frozen=True)
class ReportTable:
    """A report read back from CSV: mode, digest and numeric values by (metric, key)."""

    mode: str
    digest: str
    values: dict[tuple[str, str], float]


def read_csv(source: str | Path) -> ReportTable:
    text = Path(source).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"{source}: not a metrics CSV (header {header!r})")
    mode, digest, values = "", "", {}
    for row in reader:
        if len(row) != 4:
            raise ValueError(f"{source}: malformed row {row!r}")
        mode, metric, key, value = row
        if (metric, key) == ("scenario", "digest"):
            digest = value
            continue
        values[(metric, key)] = float(value)
    return ReportTable(mode, digest, values)


def _table(x: MetricsReport | ReportTable | str | Path) -> ReportTable:
    if isinstance(x, ReportTable):
        return x
    if isinstance(x, MetricsReport):
        values = {(m, k): float(v) for m, k, v in x.rows() if (m, k) != ("scenario", "digest")}
        return ReportTable(x.mode, x.digest, values)
    return read_csv(x)


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    key: str
    a: float
    b: float

    @property
    def diff(self) -> float:
        return self.a - self.b

    @property
    def ratio(self) -> float:
        if self.b == 0:
            return 1.0 if self.a == 0 else float("inf")
        return self.a / self.b


def compare(a, b) -> tuple[list[ComparisonRow], float | None]:
    """Per-metric rows plus the multicast savings (None when the baseline sent no responses).

    Savings is computed with ``a`` as the ICN run and ``b`` as the baseline, whichever
    order the caller used for the rows.
    """
    ta, tb = _table(a), _table(b)
    if ta.digest != tb.digest:
        raise ScenarioMismatch(f"reports come from different scenarios ({ta.digest[:12]} vs {tb.digest[:12]})")
    keys = sorted(set(ta.values) | set(tb.values))
    rows = [ComparisonRow(m, k, ta.values.get((m, k), 0.0), tb.values.get((m, k), 0.0)) for m, k in keys]
    icn, base = (ta, tb) if tb.mode == "baseline" or ta.mode == "icn" else (tb, ta)
    key = ("total", "response_messages")
    base_rsp = base.values.get(key, 0.0)
    savings = None if base_rsp == 0 else 1 - icn.values.get(key, 0.0) / base_rsp
    return rows, savings


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{x:.4f}"


def format_comparison(rows: list[ComparisonRow], savings: float | None, labels=("a", "b")) -> str:
    lines = [f"{'metric':<36} {'key':<24} {labels[0]:>10} {labels[1]:>10} {'diff':>10} {'ratio':>8}"]
    for r in rows:
        lines.append(f"{r.metric:<36} {r.key:<24} {_fmt(r.a):>10} {_fmt(r.b):>10} {_fmt(r.diff):>10} {_fmt(r.ratio):>8}")
    lines.append(f"multicast savings: {'n/a' if savings is None else f'{savings:.4f}'}")
    return "\n".join(lines) + "\n"


def comparison_csv(rows: list[ComparisonRow], savings: float | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("metric", "key", "a", "b", "diff", "ratio"))
    for r in rows:
        w.writerow((r.metric, r.key, _fmt(r.a), _fmt(r.b), _fmt(r.diff), _fmt(r.ratio)))
    w.writerow(("multicast_savings", "", "", "", "", "" if savings is None else f"{savings:.6f}"))
    return buf.getvalue()
