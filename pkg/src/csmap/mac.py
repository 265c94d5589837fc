"""Arbitration-point scheduling and adaptive carrier-sense arbitration.

Each terminal owns one arbitration point (AP) per PPS cycle, placed by slot
index at ``pps + index * (duration + offset)`` in its LOCAL clock, so clock
error moves windows in true time and desynchronization emerges instead of
being scripted.

The arbitration algorithm accumulates DC-removed I/Q over the window and
declares the channel vacant when both accumulations exceed their thresholds.
With the channel model used here (idle = positive pilot, occupied =
zero-mean) and a DC offset above the pilot, idle windows accumulate a small
negative value and occupied windows a large negative one; scaling recorded
vacant accumulations by a > 1 therefore pushes the threshold safely below
the idle level.  Thresholds re-adapt from the last ``queue_len`` recorded
vacant windows once enough packets have been sent; before the first
calibration the terminal spends one window measuring (and defers), which is
the warm-up transient of a fresh network.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .phy import IqWindow


class Verdict(str, Enum):
    TRANSMIT = "transmit"
    DEFER = "defer"


@dataclass(frozen=True)
class APSchedule:
    """Per-terminal arbitration window parameters."""

    ap_duration: float  # s
    ap_offset: float  # s, gap between consecutive APs
    terminal_index: int = 0  # 0-based slot
    terminals_per_cycle: int = 1  # N
    period: float = 1.0  # s, one PPS cycle

    def __post_init__(self) -> None:
        if self.ap_duration <= 0:
            raise ValueError("ap_duration must be > 0")
        if self.ap_offset < 0:
            raise ValueError("ap_offset must be >= 0")
        if not 0 <= self.terminal_index < self.terminals_per_cycle:
            raise ValueError("terminal_index must be within terminals_per_cycle")
        if self.terminals_per_cycle * (self.ap_duration + self.ap_offset) > self.period:
            raise ValueError("AP block does not fit within one period")


def ap_window(sched: APSchedule, local_pps_edge: float) -> tuple[float, float]:
    """Window [t_s, t_e] of this terminal's AP, in its local clock."""
    t_s = local_pps_edge + sched.terminal_index * (sched.ap_duration + sched.ap_offset)
    return t_s, t_s + sched.ap_duration


def delay_bound(n_terminals: int, sched: APSchedule | None = None) -> int:
    """Worst-case AP rounds before a pending packet starts, N + 1."""
    if n_terminals < 1:
        raise ValueError("need at least one terminal")
    return n_terminals + 1


@dataclass
class MacDecision:
    verdict: Verdict
    i_acc: float
    q_acc: float
    round: int = 0
    reason: str = ""


@dataclass
class CarrierSenseState:
    """Mutable arbitration state of one terminal.

    ``queue_len`` and ``scale_factor`` are the two published knobs (queue
    length and threshold scale); the mobility experiments used (3, 5) and the
    fixed-position ones (10, 2).  ``dc_offset`` is the i_0 = q_0 level removed
    before accumulating; it must sit above the idle pilot but not more than
    a/(a-1) times it for the vacancy test to separate idle from occupied.
    """

    queue_len: int = 10
    scale_factor: float = 2.0
    dc_offset: float = 1.5
    calibration_fraction: float | None = None  # defaults to scale_factor
    i_rec: deque = field(default_factory=deque)
    q_rec: deque = field(default_factory=deque)
    i_thresh: float | None = None  # None until calibrated
    q_thresh: float | None = None
    packets_sent: int = 0

    def __post_init__(self) -> None:
        if self.queue_len < 1:
            raise ValueError("queue_len must be >= 1")
        if not self.i_rec:
            self.i_rec = deque([0.0] * self.queue_len, maxlen=self.queue_len)
        if not self.q_rec:
            self.q_rec = deque([0.0] * self.queue_len, maxlen=self.queue_len)
        if self.calibration_fraction is None:
            self.calibration_fraction = self.scale_factor

    @property
    def calibrated(self) -> bool:
        return self.i_thresh is not None and self.q_thresh is not None


def accumulate(cs: CarrierSenseState, window: IqWindow) -> tuple[float, float]:
    """DC-removed accumulations over the window."""
    i_acc = float(np.sum(window.i - cs.dc_offset) * window.dt)
    q_acc = float(np.sum(window.q - cs.dc_offset) * window.dt)
    return i_acc, q_acc


def carrier_sense(cs: CarrierSenseState, window: IqWindow | None, round_index: int = 0) -> MacDecision:
    """Run one arbitration decision; mutates ``cs`` on a vacant verdict.

    Missing or incomplete samples defer (fail-safe).  The first complete
    window calibrates the thresholds from its own accumulation and defers.
    On a vacant verdict the accumulations are shifted into the record queues
    (the occupied branch leaves them untouched).
    """
    if window is None or not window.complete or window.i.size == 0:
        return MacDecision(Verdict.DEFER, 0.0, 0.0, round_index, reason="missing samples")
    i_acc, q_acc = accumulate(cs, window)
    if not cs.calibrated:
        cs.i_thresh = cs.calibration_fraction * i_acc
        cs.q_thresh = cs.calibration_fraction * q_acc
        return MacDecision(Verdict.DEFER, i_acc, q_acc, round_index, reason="calibration")
    if i_acc > cs.i_thresh and q_acc > cs.q_thresh:
        cs.i_rec.append(i_acc)
        cs.q_rec.append(q_acc)
        return MacDecision(Verdict.TRANSMIT, i_acc, q_acc, round_index)
    return MacDecision(Verdict.DEFER, i_acc, q_acc, round_index, reason="occupied")


def update_thresholds(cs: CarrierSenseState) -> CarrierSenseState:
    """Adapt thresholds after a vacant verdict, once enough packets went out.

    Recomputing from an unchanged queue is idempotent.
    """
    if cs.packets_sent >= cs.queue_len - 1:
        cs.i_thresh = cs.scale_factor / cs.queue_len * sum(cs.i_rec)
        cs.q_thresh = cs.scale_factor / cs.queue_len * sum(cs.q_rec)
    return cs
