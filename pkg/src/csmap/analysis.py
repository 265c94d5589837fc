"""Regime classification and distance-error extraction from traces."""

from __future__ import annotations

import math
from enum import Enum

from .mac import APSchedule
from .trace import PacketRecord, SimTrace


class RegimeLabel(str, Enum):
    CORRECT_ORDER = "correct_order"
    SIMULTANEOUS = "simultaneous"
    REVERSED_ORDER = "reversed_order"
    UNCLASSIFIED = "unclassified"


def intervals_overlap(a_start: float, a_end: float, b_start: float, b_end: float) -> bool:
    return a_start < b_end and b_start < a_end


def classify_regime(
    packets: list[PacketRecord],
    sched: APSchedule,
    context: list[PacketRecord] | None = None,
) -> RegimeLabel:
    """Classify one window of packet transmissions.

    Simultaneous when any two transmissions overlap in true time.  Reversed
    when, within one service cycle, a higher-slot terminal transmits ahead
    of a lower-slot one: operationally, a consecutive transmission pair from
    different sources less than 1.5 periods apart running high-to-low slot
    (pairs separated by the vacant round do not count as in-cycle).  Correct
    otherwise; an empty window is unclassifiable.

    ``context`` may extend the window with neighbouring packets so pairs
    straddling the window edge are still seen; a pair only counts if at
    least one member belongs to the window itself.
    """
    if not packets:
        return RegimeLabel.UNCLASSIFIED
    window_ids = {id(p) for p in packets}
    items = sorted(context if context is not None else packets, key=lambda p: p.t)

    def in_window(a, b) -> bool:
        return id(a) in window_ids or id(b) in window_ids

    for i, a in enumerate(items):
        for b in items[i + 1 :]:
            if b.t >= a.t + a.duration:
                break
            if intervals_overlap(a.t, a.t + a.duration, b.t, b.t + b.duration) and in_window(a, b):
                return RegimeLabel.SIMULTANEOUS
    in_cycle_gap = 1.5 * sched.period
    for a, b in zip(items, items[1:]):
        if (
            a.source != b.source
            and b.t - a.t < in_cycle_gap
            and a.source > b.source
            and in_window(a, b)
        ):
            return RegimeLabel.REVERSED_ORDER
    return RegimeLabel.CORRECT_ORDER


def segment_regimes(
    packets: list[PacketRecord], sched: APSchedule, run_duration: float
):
    """Split the run into service-cycle windows and classify each.

    The window is (N + 1) periods, the full service rotation, so one window
    always contains at least one full cycle of transmissions.
    """
    window = (sched.terminals_per_cycle + 1) * sched.period
    margin = 1.5 * sched.period
    live = [p for p in packets if not p.truncated]
    segments = []
    t = 0.0
    while t < run_duration:
        t_end = min(t + window, run_duration)
        window_packets = [p for p in live if t <= p.t < t_end]
        context = [p for p in live if t - margin <= p.t < t_end + margin]
        label = classify_regime(window_packets, sched, context)
        segments.append(
            (
                t,
                t_end,
                label,
                len(window_packets),
                sum(1 for p in window_packets if p.collided),
            )
        )
        t += window
    return segments


def distance_error_series(trace: SimTrace) -> tuple[list[tuple[float, float]], float | None]:
    """Signed (estimate minus truth) distance error series and its max module.

    The series is truncated at the first telemetry record with lost status.
    """
    series: list[tuple[float, float]] = []
    for rec in trace.telemetry:
        if rec.wiwi_status == "lost":
            break
        if rec.ld_wiwi is None or rec.ld_truth is None:
            continue
        if not (math.isfinite(rec.ld_wiwi) and math.isfinite(rec.ld_truth)):
            continue
        series.append((rec.t, rec.ld_wiwi - rec.ld_truth))
    max_abs = max((abs(e) for _, e in series), default=None)
    return series, max_abs
