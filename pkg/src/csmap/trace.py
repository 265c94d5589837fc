"""Trace records and their canonical serialization.

One simulation produces a :class:`SimTrace`: a meta header, per-packet
records, periodic telemetry, regime windows and sparse events.  The JSONL
form is canonical: one record per line, keys sorted, compact separators,
floats via Python repr, no NaN (missing values are null), records ordered by
(time, record rank, insertion index).  Two runs of the same scenario with
the same seeds serialize byte-identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class PacketRecord:
    t: float  # true TX start, s
    source: int
    packet_id: int
    duration: float
    ber: float | None
    body_errors: int | None
    header_valid: bool | None
    collided: bool
    enqueue_round: int
    tx_round: int
    delay_rounds: int
    snr: float | None = None
    cfo_hz: float | None = None
    truncated: bool = False


@dataclass
class TelemetryRecord:
    t: float
    pps_diff: float | None = None  # sta1 minus sta2 PPS timing, s
    ld_wiwi: float | None = None  # m
    ld_truth: float | None = None  # m
    wiwi_status: str | None = None  # locked | lost
    t_c: float | None = None  # measured offset of the monitored link, s


@dataclass
class RegimeRecord:
    t_start: float
    t_end: float
    label: str
    n_packets: int
    n_collided: int


@dataclass
class MacDecisionRecord:
    t: float
    terminal: int
    round: int
    verdict: str
    i_acc: float
    q_acc: float
    i_thresh: float | None
    q_thresh: float | None
    reason: str = ""


@dataclass
class SimTrace:
    meta: dict
    packets: list[PacketRecord] = field(default_factory=list)
    telemetry: list[TelemetryRecord] = field(default_factory=list)
    regimes: list[RegimeRecord] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    mac_decisions: list[MacDecisionRecord] = field(default_factory=list)
    # In-memory only (not serialized): evenly sampled pair phase records.
    phase_samples: dict = field(default_factory=dict)

    def summary(self) -> dict:
        warmup = float(self.meta.get("warmup_s", 0.0))
        done = [p for p in self.packets if not p.truncated]
        post = [p for p in done if p.t >= warmup]
        bers = [p.ber for p in done if p.ber is not None]
        post_bers = [p.ber for p in post if p.ber is not None]
        lost_at = None
        for rec in self.telemetry:
            if rec.wiwi_status == "lost":
                lost_at = rec.t
                break
        dist_errors = [
            abs(rec.ld_wiwi - rec.ld_truth)
            for rec in self.telemetry
            if rec.ld_wiwi is not None
            and rec.ld_truth is not None
            and rec.wiwi_status == "locked"
        ]
        return {
            "name": self.meta.get("name"),
            "packets": len(done),
            "packets_truncated": len(self.packets) - len(done),
            "collisions": sum(1 for p in done if p.collided),
            "mean_ber": (sum(bers) / len(bers)) if bers else None,
            "max_ber": max(bers) if bers else None,
            "post_warmup_max_ber": max(post_bers) if post_bers else None,
            "max_delay_rounds": max((p.delay_rounds for p in done), default=None),
            "regimes_seen": sorted({r.label for r in self.regimes}),
            "max_abs_distance_error_m": max(dist_errors) if dist_errors else None,
            "tracking_lost_at_s": lost_at,
        }

    def to_jsonl(self) -> str:
        rows: list[tuple[float, int, int, dict]] = []
        rows.append((-math.inf, 0, 0, {"type": "meta", **self.meta}))
        for idx, rec in enumerate(self.telemetry):
            rows.append((rec.t, 1, idx, {"type": "telemetry", **_clean(asdict(rec))}))
        for idx, rec in enumerate(self.packets):
            rows.append((rec.t, 2, idx, {"type": "packet", **_clean(asdict(rec))}))
        for idx, rec in enumerate(self.regimes):
            rows.append((rec.t_start, 3, idx, {"type": "regime", **_clean(asdict(rec))}))
        for idx, rec in enumerate(self.events):
            rows.append((float(rec.get("t", 0.0)), 4, idx, {"type": "event", **_clean(rec)}))
        for idx, rec in enumerate(self.mac_decisions):
            rows.append((rec.t, 5, idx, {"type": "mac", **_clean(asdict(rec))}))
        rows.sort(key=lambda r: (r[0], r[1], r[2]))
        return "".join(canonical_json(row[3]) + "\n" for row in rows)


def _clean(obj: dict) -> dict:
    out = {}
    for key, value in obj.items():
        if isinstance(value, float) and not math.isfinite(value):
            value = None
        if isinstance(value, (np.floating, np.integer)):
            value = value.item()
        out[key] = value
    return out


def canonical_json(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


def parse_jsonl(text: str) -> SimTrace:
    """Rebuild a SimTrace from its JSONL form (for verification)."""
    meta: dict | None = None
    trace = SimTrace(meta={})
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"trace line {line_no}: invalid JSON: {exc}") from None
        kind = record.pop("type", None)
        try:
            if kind == "meta":
                meta = record
            elif kind == "telemetry":
                trace.telemetry.append(TelemetryRecord(**record))
            elif kind == "packet":
                trace.packets.append(PacketRecord(**record))
            elif kind == "regime":
                trace.regimes.append(RegimeRecord(**record))
            elif kind == "event":
                trace.events.append(record)
            elif kind == "mac":
                trace.mac_decisions.append(MacDecisionRecord(**record))
            else:
                raise ValueError(f"unknown record type {kind!r}")
        except TypeError as exc:
            raise ValueError(f"trace line {line_no}: {exc}") from None
    if meta is None:
        raise ValueError("trace has no meta record")
    trace.meta = meta
    return trace


def csv_text(header: list[str], rows: list[list]) -> str:
    """Minimal deterministic CSV writer (no quoting needed for our fields)."""
    def fmt(v) -> str:
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        if isinstance(v, bool):
            return str(v).lower()
        return str(v)

    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"
