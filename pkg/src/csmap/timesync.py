"""Two-way time transfer, carrier-phase tracking and PID disciplining.

Sign conventions
----------------
``t_c`` is the clock offset of site B relative to site A (positive when B's
clock is ahead) and ``t_d`` the one-way propagation delay.  A full exchange
gives::

    t_A = T_BA - T_BB = -t_c + t_d        (computed at A)
    t_B = T_AB - T_AA = +t_c + t_d        (computed at B)
    t_c = (t_B - t_A) / 2
    t_d = (t_B + t_A) / 2

The carrier-phase route measures, at each site, the received carrier phase
against the local oscillator.  The synthesis used by the simulator is::

    phi_A = wrap(-2*pi*f0*(t_c + t_d))
    phi_B = wrap(+2*pi*f0*(t_c - t_d))

which makes the difference channel carry the clock offset,

    t_c = (phi_B - phi_A + 2*pi*M_c) / (4*pi*f0),

and the sum channel carry the propagation distance,

    l_d = -(c / (4*pi*f0)) * (phi_A + phi_B + 2*pi*M_c) = c * t_d.

Each channel has its own integer ambiguity, tracked by keeping the
observation-to-observation change of the unwrapped phase below pi.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from . import SPEED_OF_LIGHT
from .timebase import TWO_PI


def wrap_phase(phi: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = math.remainder(phi, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


class TrackingLost(Exception):
    """Integer-ambiguity tracking failed (phase moved too fast)."""


@dataclass(frozen=True)
class TimestampExchange:
    """One-and-a-half round trips of timestamps (seconds, local clocks)."""

    t_aa: float
    t_ab: float
    t_ba: float
    t_bb: float

    def __post_init__(self) -> None:
        for name in ("t_aa", "t_ab", "t_ba", "t_bb"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"timestamp {name} must be finite")


@dataclass(frozen=True)
class PhaseExchange:
    """Wrapped carrier phases measured at the two sites."""

    phi_a: float
    phi_b: float
    f0: float = 920e6  # Hz

    def __post_init__(self) -> None:
        for name in ("phi_a", "phi_b"):
            v = getattr(self, name)
            if not (-math.pi < v <= math.pi):
                raise ValueError(f"{name}={v} outside (-pi, pi]")
        if self.f0 <= 0:
            raise ValueError("f0 must be > 0")


@dataclass
class SyncEstimate:
    """Result of one two-way exchange on a link."""

    t_c: float  # clock offset, s
    t_d: float  # propagation delay, s
    phi_c_unwrapped: float  # radians (difference channel)
    m_c: int  # integer ambiguity of the distance channel
    l_d: float  # metres


def twtt_offsets(ex: TimestampExchange) -> tuple[float, float]:
    """Per-site time differences (t_A, t_B) from a timestamp exchange."""
    t_a = ex.t_ba - ex.t_bb
    t_b = ex.t_ab - ex.t_aa
    return t_a, t_b


def solve_offset_delay(t_a: float, t_b: float) -> tuple[float, float]:
    """Clock offset and propagation delay from the two one-way differences.

    A negative delay beyond float-representation dust is flagged as a
    non-physical link (two-way transfer assumes a symmetric route).
    """
    t_c = (t_b - t_a) / 2.0
    t_d = (t_b + t_a) / 2.0
    if t_d < -1e-12:
        warnings.warn(
            f"negative propagation delay {t_d} s: non-physical link "
            "(asymmetric route?)",
            stacklevel=2,
        )
    return t_c, t_d


def twcp_offset(px: PhaseExchange, m_c: int) -> float:
    """Clock offset from the carrier-phase difference channel."""
    return (px.phi_b - px.phi_a + TWO_PI * m_c) / (2.0 * TWO_PI * px.f0)


def estimate_distance(px: PhaseExchange, m_c: int) -> float:
    """Propagation distance from the carrier-phase sum channel."""
    return -(SPEED_OF_LIGHT / (2.0 * TWO_PI * px.f0)) * (
        px.phi_a + px.phi_b + TWO_PI * m_c
    )


def unwrap_step(previous_unwrapped: float, new_wrapped: float) -> tuple[float, int]:
    """Unwrap one observation against the running unwrapped value.

    Picks the integer cycle count minimising the apparent step.  Raises
    :class:`TrackingLost` when even the best candidate moves by >= pi (the
    tie boundary of the ambiguity search).  Note an actual step faster than
    pi per observation aliases into a small apparent step and cannot be seen
    here; the link model adjudicates that case from geometry.
    """
    m = round((previous_unwrapped - new_wrapped) / TWO_PI)
    unwrapped = new_wrapped + TWO_PI * m
    if abs(unwrapped - previous_unwrapped) >= math.pi:
        raise TrackingLost(
            f"phase step {unwrapped - previous_unwrapped:+.3f} rad >= pi"
        )
    return unwrapped, m


class PhaseChannelTracker:
    """Tracks the unwrapped value and integer ambiguity of one phase channel."""

    def __init__(self, initial_unwrapped: float):
        self.reset(initial_unwrapped)

    def reset(self, unwrapped: float) -> None:
        self.unwrapped = unwrapped
        self.m = round((unwrapped - wrap_phase(unwrapped)) / TWO_PI)

    def update(self, new_wrapped: float) -> tuple[float, int]:
        self.unwrapped, self.m = unwrap_step(self.unwrapped, new_wrapped)
        return self.unwrapped, self.m


@dataclass
class PidController:
    """Positional PID acting on the measured clock offset.

    Gains are per second; the output is a fractional-frequency correction to
    subtract from the follower.  The integral is conditionally frozen while
    the output sits on the slew limit (anti-windup) and clamped.
    """

    k_p: float = 8.0
    k_i: float = 8.0
    k_d: float = 0.0
    update_interval: float = 0.05  # s
    slew_limit: float = 2e-5  # max |output| as fractional frequency
    integral_limit: float = 1e-2  # s*s
    integral_state: float = 0.0
    previous_error: float = 0.0
    previous_output: float = 0.0

    def __post_init__(self) -> None:
        if self.update_interval <= 0:
            raise ValueError("update_interval must be > 0")

    def update(self, measured_t_c: float) -> float:
        if not math.isfinite(measured_t_c):
            warnings.warn(
                "non-finite offset measurement; controller holds previous output",
                stacklevel=2,
            )
            return self.previous_output
        e = measured_t_c
        t = self.update_interval
        derivative = (e - self.previous_error) / t
        raw = (
            self.k_p * e
            + self.k_i * self.integral_state
            + self.k_d * derivative
        )
        output = max(-self.slew_limit, min(self.slew_limit, raw))
        if output == raw:  # integrate only while unclamped
            i = self.integral_state + e * t
            self.integral_state = max(-self.integral_limit, min(self.integral_limit, i))
            output = max(
                -self.slew_limit,
                min(self.slew_limit, self.k_p * e + self.k_i * self.integral_state + self.k_d * derivative),
            )
        self.previous_error = e
        self.previous_output = output
        return output


def discipline_step(pid: PidController, measured_t_c: float) -> tuple[float, PidController]:
    """One controller update; the correction is subtracted from follower y."""
    return pid.update(measured_t_c), pid


@dataclass(frozen=True)
class WiWiLinkConfig:
    """Static parameters of one two-way sync link."""

    carrier_frequency: float = 920e6  # Hz
    carrier_wavelength: float = 0.32  # m, published speed-bound figure
    revision_interval: float = 0.05  # s
    tx_power_level: float = 1.0  # linear, dimensionless
    sync_loss_power_threshold: float | None = None  # None: calibrated at 14 m
    timestamp_quantization: float = 1e-9  # s; 0 disables
    phase_noise_sigma: float = 0.005  # rad per measured phase

    def __post_init__(self) -> None:
        if self.carrier_wavelength <= 0 or self.revision_interval <= 0:
            raise ValueError("wavelength and revision interval must be > 0")

    def power_threshold(self) -> float:
        if self.sync_loss_power_threshold is not None:
            return self.sync_loss_power_threshold
        # Default calibration: unity tx power becomes too weak at 14 m.
        return free_space_gain(14.0, self.carrier_wavelength)


def free_space_gain(distance: float, wavelength: float) -> float:
    """Friis free-space power gain (linear)."""
    if distance <= 0:
        raise ValueError("distance must be > 0")
    return (wavelength / (2.0 * TWO_PI * distance)) ** 2


def max_tracking_speed(cfg: WiWiLinkConfig) -> float:
    """Upper bound on relative terminal speed, lambda / (4 T), in m/s."""
    return cfg.carrier_wavelength / (4.0 * cfg.revision_interval)


def link_power_ok(distance: float, cfg: WiWiLinkConfig, path_loss_model=None) -> bool:
    """Whether the sync link still has enough received power at ``distance``."""
    if distance < 0:
        raise ValueError("distance must be >= 0")
    if distance == 0:
        return True
    gain = (
        path_loss_model(distance)
        if path_loss_model is not None
        else free_space_gain(distance, cfg.carrier_wavelength)
    )
    return cfg.tx_power_level * gain > cfg.power_threshold()


def simulate_exchange(
    t_c: float,
    t_d: float,
    base_time: float = 0.0,
    quantization: float | None = None,
    rng=None,
    timestamp_noise: float = 0.0,
) -> TimestampExchange:
    """Forward-model the four timestamps of an exchange with truth (t_c, t_d).

    With ``quantization`` None or 0 and no noise the recovery through
    :func:`twtt_offsets` + :func:`solve_offset_delay` is exact.
    """

    def stamp(value: float) -> float:
        if timestamp_noise and rng is not None:
            value += timestamp_noise * rng.standard_normal()
        if quantization:
            value = round(value / quantization) * quantization
        return value

    # A emits at local time base_time; B emits half an interval later.
    t_aa = stamp(base_time)
    t_ab = stamp(base_time + t_c + t_d)
    t_bb = stamp(base_time + 0.5 + t_c)
    t_ba = stamp(base_time + 0.5 + t_d)
    return TimestampExchange(t_aa=t_aa, t_ab=t_ab, t_ba=t_ba, t_bb=t_bb)


def measured_phases(
    t_c: float,
    t_d: float,
    f0: float,
    rng=None,
    phase_noise: float = 0.0,
    sum_bias: float = 0.0,
) -> PhaseExchange:
    """Forward-model the wrapped carrier phases for truth (t_c, t_d).

    ``sum_bias`` shifts the distance (sum) channel only, which is how the
    floor-reflection disturbance is injected.
    """
    na = nb = 0.0
    if phase_noise and rng is not None:
        na = phase_noise * rng.standard_normal()
        nb = phase_noise * rng.standard_normal()
    phi_a = wrap_phase(-TWO_PI * f0 * (t_c + t_d) + na + sum_bias / 2.0)
    phi_b = wrap_phase(TWO_PI * f0 * (t_c - t_d) + nb + sum_bias / 2.0)
    return PhaseExchange(phi_a=phi_a, phi_b=phi_b, f0=f0)


class WiWiLink:
    """Measurement and tracking state of one leader-follower sync link.

    Produces a :class:`SyncEstimate` per revision.  The two phase channels
    are treated differently when they move faster than pi per revision:

    - The offset (difference) channel always has the coarse timestamp route
      as a fallback, so during fast slewing (PID pull-in) the tracker is
      reseeded from the timestamp offset instead of failing.
    - The distance (sum) channel has no comparably fine fallback; moving
      faster than the published bound loses the integer count for good, so
      the link declares :class:`TrackingLost`.  Aliasing makes that condition
      invisible to the wrapped measurements themselves, so it is adjudicated
      from the true per-revision delay change (the physics of losing lock),
      not from the estimator.
    """

    def __init__(self, cfg: WiWiLinkConfig, true_t_c: float, true_t_d: float, rng):
        self.cfg = cfg
        self.rng = rng
        f0 = cfg.carrier_frequency
        # First observation seeds both integer ambiguities from ground truth.
        self.diff_tracker = PhaseChannelTracker(2.0 * TWO_PI * f0 * true_t_c)
        self.sum_tracker = PhaseChannelTracker(-2.0 * TWO_PI * f0 * true_t_d)
        self._last_true_t_d = true_t_d
        self._last_true_t_c = true_t_c
        self.lost = False
        self.sum_bias = 0.0

    def revise(self, true_t_c: float, true_t_d: float) -> SyncEstimate:
        """Run one revision: timestamps, phases, trackers."""
        cfg = self.cfg
        f0 = cfg.carrier_frequency
        ex = simulate_exchange(
            true_t_c,
            true_t_d,
            quantization=cfg.timestamp_quantization,
            rng=self.rng,
        )
        t_a, t_b = twtt_offsets(ex)
        ts_t_c, ts_t_d = solve_offset_delay(t_a, t_b)

        px = measured_phases(
            true_t_c,
            true_t_d,
            f0,
            rng=self.rng,
            phase_noise=cfg.phase_noise_sigma,
            sum_bias=self.sum_bias,
        )

        # Offset channel: fine when coherent, reseed from timestamps when not.
        diff_step_true = 2.0 * TWO_PI * f0 * (true_t_c - self._last_true_t_c)
        if abs(diff_step_true) >= math.pi:
            self.diff_tracker.reset(2.0 * TWO_PI * f0 * ts_t_c)
            t_c_est = ts_t_c
        else:
            try:
                unwrapped, _ = self.diff_tracker.update(
                    wrap_phase(px.phi_b - px.phi_a)
                )
                t_c_est = unwrapped / (2.0 * TWO_PI * f0)
            except TrackingLost:
                self.diff_tracker.reset(2.0 * TWO_PI * f0 * ts_t_c)
                t_c_est = ts_t_c
        self._last_true_t_c = true_t_c

        # Distance channel: hard bound.
        if not self.lost:
            delta_u_true = -2.0 * TWO_PI * f0 * (true_t_d - self._last_true_t_d)
            if abs(delta_u_true) >= math.pi:
                self.lost = True
        self._last_true_t_d = true_t_d

        if not self.lost:
            try:
                self.sum_tracker.update(wrap_phase(px.phi_a + px.phi_b))
            except TrackingLost:
                self.lost = True
        # The raw sum of two wrapped phases lives in (-2*pi, 2*pi]; reference
        # the tracked integer to it so the distance formula sees a matched
        # (phase sum, M_c) pair.
        raw_sum = px.phi_a + px.phi_b
        m_c = round((self.sum_tracker.unwrapped - raw_sum) / TWO_PI)
        l_d = estimate_distance(px, m_c) if not self.lost else float("nan")

        return SyncEstimate(
            t_c=t_c_est,
            t_d=ts_t_d,
            phi_c_unwrapped=self.diff_tracker.unwrapped,
            m_c=m_c,
            l_d=l_d,
        )
