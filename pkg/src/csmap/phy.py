"""Data-channel model: path loss, collisions, DBPSK errors, I/Q synthesis.

The channel abstraction feeding carrier sense is deliberately minimal: an
idle channel reads as a constant positive pilot level plus noise, while an
occupied channel reads as zero-mean modulated samples (a strong signal
captures the front end and the idle pilot disappears).  That convention is
what makes the published vacancy test, accumulations above thresholds mean
vacant, behave correctly; see ``mac`` for the threshold arithmetic.

An optional sensing dead time emulates the receiver settling artifact that
broke arbitration for window parameters of a few microseconds in the
hardware experiments: the first ``sense_dead_time`` of every sensed window
reports the stale idle pilot no matter what is on the air.  Set it to zero
for an ideal sensor; no claim is made about the true hardware cause.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import SPEED_OF_LIGHT
from .timebase import TWO_PI


class PathLossModel(str, Enum):
    FREE_SPACE = "free_space"
    TWO_RAY_GROUND = "two_ray_ground"


@dataclass(frozen=True)
class ChannelConfig:
    carrier_frequency: float = 2.4e9  # Hz
    symbol_rate: float = 500e3  # symbols/s, DBPSK: 1 bit/symbol
    noise_floor: float = 1e-10  # linear power
    path_loss_model: PathLossModel = PathLossModel.FREE_SPACE
    antenna_height: float = 2.0  # m
    ground_reflection: float = -1.0  # two-ray reflection coefficient
    idle_pilot_level: float = 1.0  # amplitude of the idle reading
    sense_noise_sigma: float = 0.02  # per-sample amplitude noise
    sense_sample_rate: float = 1e7  # samples/s for carrier sense
    sense_dead_time: float = 1.75e-6  # s, settling artifact; 0 disables
    tx_power: float = 1.0  # linear

    def __post_init__(self) -> None:
        if self.symbol_rate <= 0:
            raise ValueError("symbol_rate must be > 0")
        if self.antenna_height <= 0:
            raise ValueError("antenna_height must be > 0")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency


@dataclass(frozen=True)
class TransmissionRecord:
    """One on-air packet in true time."""

    source: int
    true_start: float
    duration: float
    tx_power: float
    packet_id: int = 0

    @property
    def true_end(self) -> float:
        return self.true_start + self.duration


@dataclass(frozen=True)
class CfoState:
    """Carrier frequency offset between a transmitter and receiver."""

    delta_f: float = 0.0  # Hz

    def __post_init__(self) -> None:
        if not math.isfinite(self.delta_f):
            raise ValueError("delta_f must be finite")


def cfo_from_reference_offset(y_tx: float, y_rx: float, carrier_frequency: float = 2.4e9) -> CfoState:
    """CFO implied by mismatched reference oscillators feeding the carrier."""
    return CfoState(delta_f=(y_tx - y_rx) * carrier_frequency)


def received_power(distance: float, cfg: ChannelConfig, tx_power: float) -> float:
    """Received power after path loss (linear units)."""
    if distance <= 0:
        raise ValueError("distance must be > 0")
    lam = cfg.wavelength
    direct = (lam / (2.0 * TWO_PI * distance)) ** 2
    if cfg.path_loss_model is PathLossModel.FREE_SPACE:
        return tx_power * direct
    # Two-ray: coherent sum of the direct path and a ground bounce between
    # antennas at equal height; reflection coefficient 0 degenerates to Friis
    # exactly (the direct term is factored out).
    h = cfg.antenna_height
    d_refl = math.sqrt(distance * distance + (2.0 * h) ** 2)
    k = TWO_PI / lam
    ratio = cfg.ground_reflection * distance / d_refl
    phase = k * (d_refl - distance)
    re = 1.0 + ratio * math.cos(phase)
    im = ratio * math.sin(phase)
    return tx_power * direct * (re * re + im * im)


def detect_collisions(transmissions) -> set[tuple[int, int]]:
    """Index pairs (i < j) of transmissions whose air intervals overlap."""
    records = list(transmissions)
    order = sorted(range(len(records)), key=lambda i: (records[i].true_start, i))
    pairs: set[tuple[int, int]] = set()
    for a in range(len(order)):
        i = order[a]
        for b in range(a + 1, len(order)):
            j = order[b]
            if records[j].true_start >= records[i].true_end:
                break
            if records[i].true_start < records[j].true_end:
                pairs.add((min(i, j), max(i, j)))
    return pairs


def dbpsk_error_probability(snr: float, cfo: CfoState, cfg: ChannelConfig) -> float:
    """Per-bit error probability of differential BPSK with a CFO penalty.

    theta is the inter-symbol phase rotation caused by the offset.  At
    theta = 0 this is the classic 0.5*exp(-snr); as theta approaches pi the
    differential decisions flip deterministically and the probability tends
    to 1 at high snr.
    """
    if snr < 0:
        raise ValueError("snr must be >= 0")
    theta = TWO_PI * cfo.delta_f / cfg.symbol_rate
    p = 0.5 * (1.0 - math.cos(theta) * (1.0 - math.exp(-snr)))
    return min(1.0, max(0.0, p))


def dbpsk_bit_errors(
    frame_bits: int,
    snr: float,
    cfo: CfoState,
    cfg: ChannelConfig,
    seed,
    collided: bool = False,
) -> np.ndarray:
    """Sorted error bit positions for one frame.

    A collision jams both frames: the error probability is pinned at 0.5
    regardless of snr (no capture effect).  Errors are i.i.d. per bit; the
    draw is realised as a binomial count plus a uniform position choice,
    which is distribution-identical and cheap when errors are rare.
    """
    p = 0.5 if collided else dbpsk_error_probability(snr, cfo, cfg)
    if p <= 0.0:
        return np.empty(0, dtype=np.int64)
    rng = np.random.default_rng(seed)
    count = int(rng.binomial(frame_bits, p))
    if count == 0:
        return np.empty(0, dtype=np.int64)
    positions = rng.choice(frame_bits, size=count, replace=False)
    positions.sort()
    return positions.astype(np.int64)


@dataclass
class IqWindow:
    """Sensed I/Q samples over one arbitration window."""

    i: np.ndarray
    q: np.ndarray
    dt: float  # s per sample
    complete: bool = True

    @property
    def duration(self) -> float:
        return self.i.size * self.dt


def synthesize_iq(
    t_start: float,
    t_end: float,
    active_intervals,
    cfg: ChannelConfig,
    seed,
) -> IqWindow:
    """Synthesize the sensed I/Q samples over [t_start, t_end).

    ``active_intervals`` is an iterable of ``(start, end, amplitude)``
    true-time intervals during which a transmission is on the air, with the
    received amplitude at the sensing terminal.  Idle samples sit at the
    pilot level; occupied samples are zero-mean chips; the leading dead time
    reads as pilot regardless (see module docstring).  Deterministic under
    seed and interval order.
    """
    if t_end <= t_start:
        raise ValueError("window must have positive length")
    duration = t_end - t_start
    n = max(1, round(duration * cfg.sense_sample_rate))
    dt = duration / n
    times = t_start + (np.arange(n) + 0.5) * dt

    rng = np.random.default_rng(seed)
    occupied = np.zeros(n, dtype=bool)
    sig_i = np.zeros(n)
    sig_q = np.zeros(n)
    for start, end, amplitude in active_intervals:
        mask = (times >= start) & (times < end)
        hit = int(mask.sum())
        if hit == 0:
            continue
        occupied |= mask
        sig_i[mask] += amplitude * rng.choice((-1.0, 1.0), size=hit)
        sig_q[mask] += amplitude * rng.choice((-1.0, 1.0), size=hit)

    pilot = cfg.idle_pilot_level
    i = np.where(occupied, sig_i, pilot)
    q = np.where(occupied, sig_q, pilot)

    if cfg.sense_dead_time > 0:
        n_dead = min(n, round(cfg.sense_dead_time / dt))
        if n_dead:
            i[:n_dead] = pilot
            q[:n_dead] = pilot

    if cfg.sense_noise_sigma > 0:
        i = i + cfg.sense_noise_sigma * rng.standard_normal(n)
        q = q + cfg.sense_noise_sigma * rng.standard_normal(n)
    return IqWindow(i=i, q=q, dt=dt)
