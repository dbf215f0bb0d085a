"""Per-node link metrics computed from a trace.

PSR counts every frame addressed to a node: frames that arrived while the
node was not listening count as lost (``cause=asleep``).  ``link_psr`` leaves
those out and measures the radio channel alone.

Update time is the gap between consecutive accepted frames at a node.  The
``info_age_mean_ms`` column is a different quantity: the time-averaged age of
the displayed information between the first and last accepted frame.
"""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .protocol import FRAME_SIZE, TAGGED_FRAME_SIZE, effective_throughput, tx_time
from .simengine import Trace

PAYLOAD_BITS = 3 * 8


class UnknownNodeError(KeyError):
    pass


@dataclass
class NodeMetrics:
    node: str
    rx_ok: int = 0
    rx_lost: int = 0
    rx_lost_asleep: int = 0
    rx_corrupt: int = 0
    ok_times: list[int] = field(default_factory=list)
    display_timeline: list[tuple[int, str]] = field(default_factory=list)

    @property
    def addressed(self) -> int:
        return self.rx_ok + self.rx_lost + self.rx_corrupt

    @property
    def psr(self) -> float:
        return self.rx_ok / self.addressed if self.addressed else 0.0

    @property
    def link_psr(self) -> float:
        heard = self.addressed - self.rx_lost_asleep
        return self.rx_ok / heard if heard else 0.0

    @property
    def update_intervals(self) -> list[int]:
        t = self.ok_times
        return [b - a for a, b in zip(t, t[1:])]

    @property
    def mean_interval(self) -> Optional[float]:
        gaps = self.update_intervals
        return statistics.fmean(gaps) if gaps else None

    @property
    def median_interval(self) -> Optional[float]:
        gaps = self.update_intervals
        return float(statistics.median(gaps)) if gaps else None

    @property
    def max_interval(self) -> Optional[int]:
        gaps = self.update_intervals
        return max(gaps) if gaps else None

    @property
    def mean_info_age(self) -> Optional[float]:
        gaps = self.update_intervals
        total = sum(gaps)
        return sum(g * g for g in gaps) / (2 * total) if total else None


@dataclass(frozen=True)
class Theoretical:
    tx_time_us: float
    tagged_tx_time_us: float
    throughput: float  # bit/us
    tagged_throughput: float

    @classmethod
    def default(cls) -> Theoretical:
        t13, t14 = tx_time(FRAME_SIZE), tx_time(TAGGED_FRAME_SIZE)
        return cls(t13, t14, effective_throughput(PAYLOAD_BITS, t13), effective_throughput(PAYLOAD_BITS, t14))


@dataclass
class MetricsReport:
    nodes: dict[str, NodeMetrics]
    tx_counts: dict[str, int]
    theoretical: Theoretical = field(default_factory=Theoretical.default)

    def node(self, node_id: str) -> NodeMetrics:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None


def compute_metrics(trace: Trace) -> MetricsReport:
    nodes: dict[str, NodeMetrics] = {}
    tx_counts: dict[str, int] = {}

    def get(node):
        if node not in nodes:
            nodes[node] = NodeMetrics(node)
        return nodes[node]

    for e in trace:
        if e.kind == "tx":
            tx_counts[e.node] = tx_counts.get(e.node, 0) + 1
        elif e.kind == "rx-ok":
            m = get(e.node)
            m.rx_ok += 1
            m.ok_times.append(e.time)
        elif e.kind == "rx-lost":
            m = get(e.node)
            m.rx_lost += 1
            if e.fields().get("cause") == "asleep":
                m.rx_lost_asleep += 1
        elif e.kind == "rx-corrupt":
            get(e.node).rx_corrupt += 1
        elif e.kind == "display-change":
            get(e.node).display_timeline.append((e.time, e.fields()["display"]))
    return MetricsReport(nodes, tx_counts)


@dataclass(frozen=True)
class Comparison:
    node_a: str
    node_b: str
    count_ratio: float  # rx_ok(a) / rx_ok(b)
    mean_interval_diff_us: Optional[float]  # mean(b) - mean(a)


def compare_receivers(report: MetricsReport, node_a: str, node_b: str) -> Comparison:
    a, b = report.node(node_a), report.node(node_b)
    ratio = a.rx_ok / b.rx_ok if b.rx_ok else float("inf")
    diff = None
    if a.mean_interval is not None and b.mean_interval is not None:
        diff = b.mean_interval - a.mean_interval
    return Comparison(node_a, node_b, ratio, diff)


# -- rendering -----------------------------------------------------------------

METRICS_COLUMNS = (
    "node", "rx_ok", "rx_lost", "rx_lost_asleep", "rx_corrupt", "psr", "link_psr",
    "update_count", "update_mean_ms", "update_median_ms", "update_max_ms", "info_age_mean_ms",
)


def _ms(us: Optional[float]) -> str:
    return "" if us is None else f"{us / 1000:.3f}"


def metrics_rows(report: MetricsReport) -> list[dict[str, str]]:
    """Formatted rows shared by the CSV writer and the text summary."""
    rows = []
    for node in sorted(report.nodes):
        m = report.nodes[node]
        if not m.addressed:
            continue
        rows.append({
            "node": node,
            "rx_ok": str(m.rx_ok),
            "rx_lost": str(m.rx_lost),
            "rx_lost_asleep": str(m.rx_lost_asleep),
            "rx_corrupt": str(m.rx_corrupt),
            "psr": f"{m.psr:.4f}",
            "link_psr": f"{m.link_psr:.4f}",
            "update_count": str(len(m.update_intervals)),
            "update_mean_ms": _ms(m.mean_interval),
            "update_median_ms": _ms(m.median_interval),
            "update_max_ms": _ms(m.max_interval),
            "info_age_mean_ms": _ms(m.mean_info_age),
        })
    return rows


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def metrics_csv(report: MetricsReport) -> str:
    return _csv(metrics_rows(report), METRICS_COLUMNS)


def format_summary(report: MetricsReport, title: str = "") -> str:
    rows = metrics_rows(report)
    th = report.theoretical
    lines = [title] if title else []
    lines.append(f"frame air time        : {th.tx_time_us:g} us (tagged {th.tagged_tx_time_us:g} us)")
    lines.append(f"controller throughput : {th.throughput:.4f} b/us (tagged {th.tagged_throughput:.4f} b/us)")
    for node, count in sorted(report.tx_counts.items()):
        lines.append(f"tx {node:<18}: {count}")
    for row in rows:
        lines.append("")
        lines.append(f"node {row['node']}")
        for col in METRICS_COLUMNS[1:]:
            lines.append(f"  {col:<17}: {row[col]}")
    return "\n".join(lines) + "\n"


def parse_summary(text: str) -> dict[str, dict[str, str]]:
    """Per-node values back out of :func:`format_summary` output."""
    out: dict[str, dict[str, str]] = {}
    current = None
    for line in text.splitlines():
        if line.startswith("node "):
            current = out.setdefault(line[5:], {"node": line[5:]})
        elif current is not None and line.startswith("  "):
            key, _, value = line.strip().partition(":")
            current[key.strip()] = value.strip()
    return out


def write_report(report: MetricsReport, out_dir: str | Path, prefix: str = "", title: str = "") -> None:
    out_dir = Path(out_dir)
    (out_dir / f"{prefix}metrics.csv").write_text(metrics_csv(report), encoding="utf-8", newline="")
    (out_dir / f"{prefix}summary.txt").write_text(format_summary(report, title), encoding="utf-8")


SWEEP_COLUMNS = ("value",) + METRICS_COLUMNS


def sweep_csv(points: list[tuple[float, MetricsReport]]) -> str:
    rows = []
    for value, report in points:
        for row in metrics_rows(report):
            rows.append({"value": f"{value:g}", **row})
    return _csv(rows, SWEEP_COLUMNS)
