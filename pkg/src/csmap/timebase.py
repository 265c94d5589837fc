"""Oscillator models, PPS generation and Allan-deviation analysis.

Phase is stored as the accumulated phase error versus an ideal global
reference (radians at the nominal frequency), not as absolute cycles, so a
10 MHz oscillator can run for hours without losing precision.  Local time of
a clock is therefore::

    local_time = true_time + phase / (2 * pi * nominal_frequency)

The oscillator noise model has three components:

- white phase noise (a fresh time jitter applied per advance, replacing the
  previous draw, so it does not random-walk),
- white frequency noise (integrates into a phase random walk),
- random-walk frequency noise (the fractional frequency itself drifts).

All randomness comes from a generator seeded in ``OscillatorParams`` so a
given parameter set reproduces the same sample path bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class OscillatorParams:
    """Static description of one oscillator."""

    nominal_frequency: float = 10e6  # Hz
    initial_fractional_offset: float = 0.0
    white_phase_noise_sigma: float = 0.0  # seconds, per advance
    white_fm_sigma: float = 0.0  # dimensionless, per sqrt(second)
    random_walk_fm_sigma: float = 0.0  # dimensionless, per sqrt(second)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.nominal_frequency <= 0:
            raise ValueError("nominal_frequency must be > 0")
        for name in ("white_phase_noise_sigma", "white_fm_sigma", "random_walk_fm_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class ClockState:
    """Instantaneous state of one oscillator.

    ``phase`` is the accumulated phase error (radians) against the ideal
    reference; ``fractional_frequency`` is the current value of y; ``pm_phase``
    holds the currently applied white-PM jitter so it can be replaced rather
    than accumulated on the next advance.
    """

    true_time: float = 0.0
    phase: float = 0.0  # radians
    fractional_frequency: float = 0.0
    pm_phase: float = 0.0  # radians, current white-PM contribution

    def local_time(self, params: OscillatorParams) -> float:
        return self.true_time + self.phase / (TWO_PI * params.nominal_frequency)

    def time_error(self, params: OscillatorParams) -> float:
        """Local-minus-true time offset in seconds."""
        return self.phase / (TWO_PI * params.nominal_frequency)


class SimulationError(RuntimeError):
    """Fatal simulation error (non-finite clock state and similar)."""


def advance_clock(
    state: ClockState,
    params: OscillatorParams,
    dt: float,
    rng: np.random.Generator,
    y_extra: float = 0.0,
) -> ClockState:
    """Advance one clock by ``dt`` true seconds and return the new state.

    The phase advances by ``2*pi*nu0*(y*dt)`` plus the white-FM phase
    increment; y then takes its random-walk step.  ``y_extra`` is an external
    frequency correction (discipline) integrated into the phase but kept out
    of the free-running y state.  ``dt == 0`` is a no-op and consumes no
    randomness, which keeps co-timed events deterministic.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0.0:
        return state

    nu0 = params.nominal_frequency
    y = state.fractional_frequency
    dx = (y + y_extra) * dt  # seconds of time-error drift
    if params.white_fm_sigma > 0:
        dx += params.white_fm_sigma * math.sqrt(dt) * rng.standard_normal()
    phase = state.phase + TWO_PI * nu0 * dx

    pm_phase = state.pm_phase
    if params.white_phase_noise_sigma > 0:
        new_pm = TWO_PI * nu0 * params.white_phase_noise_sigma * rng.standard_normal()
        phase += new_pm - pm_phase
        pm_phase = new_pm

    if params.random_walk_fm_sigma > 0:
        y = y + params.random_walk_fm_sigma * math.sqrt(dt) * rng.standard_normal()

    if not (math.isfinite(phase) and math.isfinite(y)):
        raise SimulationError("clock state became non-finite")
    return ClockState(
        true_time=state.true_time + dt,
        phase=phase,
        fractional_frequency=y,
        pm_phase=pm_phase,
    )


def next_pps_edge(state: ClockState, params: OscillatorParams) -> float:
    """True time at which local time next crosses an integer second.

    The prediction assumes the current fractional frequency holds until the
    edge; callers that retune y must re-predict.
    """
    local = state.local_time(params)
    target = math.floor(local) + 1.0
    rate = 1.0 + state.fractional_frequency
    if rate <= 0:
        raise SimulationError("clock is not running forward")
    return state.true_time + (target - local) / rate


class Oscillator:
    """Convenience wrapper tying params, state and the noise stream together."""

    def __init__(self, params: OscillatorParams, start_time_error: float = 0.0):
        self.params = params
        self.state = ClockState(
            true_time=0.0,
            phase=TWO_PI * params.nominal_frequency * start_time_error,
            fractional_frequency=params.initial_fractional_offset,
        )
        self.rng = np.random.default_rng(np.random.PCG64(params.rng_seed))

    def advance_to(self, true_time: float, y_extra: float = 0.0) -> None:
        dt = true_time - self.state.true_time
        if dt < 0:
            raise SimulationError(f"clock asked to run backwards by {-dt} s")
        self.state = advance_clock(self.state, self.params, dt, self.rng, y_extra)

    def local_time(self) -> float:
        return self.state.local_time(self.params)

    def time_error(self) -> float:
        return self.state.time_error(self.params)

    def add_frequency(self, dy: float) -> None:
        self.state = replace(
            self.state, fractional_frequency=self.state.fractional_frequency + dy
        )

    def set_discipline(self, y_discipline: float, y_free: float) -> None:
        """Pin the effective fractional frequency to free-run plus correction."""
        self.state = replace(self.state, fractional_frequency=y_free + y_discipline)

    def next_pps_edge(self) -> float:
        return next_pps_edge(self.state, self.params)


# ---------------------------------------------------------------------------
# Allan deviation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseRecord:
    """Evenly sampled record of the phase difference between two signals.

    ``samples`` are radians at ``nominal_frequency``; converting to time error
    (seconds) divides by 2*pi*nu0.
    """

    sample_interval: float
    samples: np.ndarray
    nominal_frequency: float = 10e6

    def __post_init__(self) -> None:
        if self.sample_interval <= 0:
            raise ValueError("sample_interval must be > 0")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        if self.samples.ndim != 1 or self.samples.size < 3:
            raise ValueError("need at least 3 phase samples")


@dataclass(frozen=True)
class AllanResult:
    taus: np.ndarray
    deviations: np.ndarray

    def __post_init__(self) -> None:
        taus = np.asarray(self.taus, dtype=float)
        devs = np.asarray(self.deviations, dtype=float)
        if np.any(np.diff(taus) <= 0):
            raise ValueError("taus must be strictly increasing")
        if np.any(devs < 0):
            raise ValueError("deviations must be >= 0")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "deviations", devs)

    def to_csv(self) -> str:
        lines = ["tau_s,adev"]
        for tau, dev in zip(self.taus, self.deviations):
            lines.append(f"{tau!r},{dev!r}")
        return "\n".join(lines) + "\n"


def allan_deviation(record: PhaseRecord, taus) -> AllanResult:
    """Overlapping Allan deviation of a phase record at the requested taus.

    Each tau must be an integer multiple of the sample interval and short
    enough to leave at least two overlapping second differences.
    """
    x = record.samples / (TWO_PI * record.nominal_frequency)  # time error, s
    n = x.size
    t0 = record.sample_interval

    out_taus = []
    out_devs = []
    for tau in taus:
        ratio = tau / t0
        m = int(round(ratio))
        if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"tau={tau} is not an integer multiple of the sample interval {t0}"
            )
        if n - 2 * m < 2:
            raise ValueError(
                f"record too short for tau={tau}: need at least {2 * m + 2} samples, have {n}"
            )
        d = x[2 * m :] - 2.0 * x[m:-m] + x[: -2 * m]
        sigma2 = 0.5 * float(np.mean(d * d)) / (m * t0) ** 2
        out_taus.append(m * t0)
        out_devs.append(math.sqrt(sigma2))
    return AllanResult(taus=np.array(out_taus), deviations=np.array(out_devs))


def fit_loglog_slope(taus, values) -> float:
    """Least-squares slope of log(values) vs log(taus); zeros are rejected."""
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        raise ValueError("cannot fit a log-log slope through zero values")
    coeffs = np.polyfit(np.log(taus), np.log(values), 1)
    return float(coeffs[0])


# Oscillator presets used by scenario configuration.  The crystal numbers make
# a free-running pair's deviation turn upward around tau = 1 s (random-walk FM
# dominating) while a disciplined pair is loop-residual limited and crosses
# below the rubidium pair within a few seconds; the rubidium numbers keep the
# reference pair flat and quiet at short tau.
CRYSTAL = dict(white_fm_sigma=1.2e-11, random_walk_fm_sigma=4e-11)
RUBIDIUM = dict(white_fm_sigma=2e-12, random_walk_fm_sigma=2e-14)
IDEAL = dict(white_fm_sigma=0.0, random_walk_fm_sigma=0.0)

OSCILLATOR_PRESETS = {"crystal": CRYSTAL, "rubidium": RUBIDIUM, "ideal": IDEAL}


def make_params(
    preset: str = "crystal",
    *,
    rng_seed: int = 0,
    initial_fractional_offset: float = 0.0,
    nominal_frequency: float = 10e6,
) -> OscillatorParams:
    try:
        noise = OSCILLATOR_PRESETS[preset]
    except KeyError:
        raise ValueError(
            f"unknown oscillator preset {preset!r}; choose from {sorted(OSCILLATOR_PRESETS)}"
        ) from None
    return OscillatorParams(
        nominal_frequency=nominal_frequency,
        initial_fractional_offset=initial_fractional_offset,
        rng_seed=rng_seed,
        **noise,
    )
