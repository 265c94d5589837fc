"""Scenario model and the line-oriented configuration format.

A scenario file is INI-style (sections of ``key = value`` lines), chosen so
golden files diff cleanly.  The full schema is documented in
``docs/scenario-format.md``; :func:`load_scenario` reports errors anchored to
their ``[section] key``.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .mac import APSchedule
from .phy import ChannelConfig, PathLossModel
from .timesync import WiWiLinkConfig
from .trajectory import Trajectory, TrajectoryKind


class ScenarioError(ValueError):
    """Configuration error with a section/key anchor."""


class SyncMode(str, Enum):
    SYNCHRONIZED = "synchronized"
    DESYNCHRONIZED = "desynchronized"


class Role(str, Enum):
    BS = "bs"
    STA = "sta"


@dataclass(frozen=True)
class TerminalSpec:
    name: str
    role: Role
    slot: int = 0  # AP slot index for STAs
    position: tuple[float, float] = (0.0, 0.0)
    trajectory: Trajectory | None = None
    oscillator_preset: str = "crystal"
    y0: float = 0.0  # initial fractional frequency offset
    x0: float = 0.0  # initial time offset, s
    pps_jitter: float = 0.0  # s, 1-sigma
    arrivals: tuple = ()  # scripted packet arrival times; empty = saturated


@dataclass(frozen=True)
class Injections:
    """Scripted disturbances; all optional."""

    sync_loss_at: float | None = None  # s, follower links free-run afterwards
    reflection_pulse_times: tuple = ()  # s, each pulse slips one cycle
    reflection_ramp_steps: int = 4
    reflection_magnitude: float = 1.2 * math.pi  # rad on the sum channel


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    sync_mode: SyncMode = SyncMode.SYNCHRONIZED
    run_duration: float = 60.0  # s
    seed: int = 1
    warmup: float = 10.0  # s, packets before this are "warm-up" in summaries
    terminals: tuple[TerminalSpec, ...] = ()
    ap_duration: float = 5e-6
    ap_offset: float = 5e-6
    period: float = 1.0
    queue_len: int = 10  # carrier-sense record length
    scale_factor: float = 2.0  # carrier-sense threshold scale
    dc_offset: float = 1.5
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    wiwi: WiWiLinkConfig = field(default_factory=WiWiLinkConfig)
    pid_kp: float = 8.0
    pid_ki: float = 8.0
    pid_kd: float = 0.0
    pid_slew_limit: float = 2e-5
    injections: Injections = field(default_factory=Injections)
    telemetry_interval: float = 1.0  # s
    phase_sample_interval: float = 0.0  # s; 0 disables phase records
    sync_only: bool = False  # clocks + links only, no data plane
    wiwi_enabled: bool = True  # False: no sync links at all (ideal-clock runs)
    trace_mac_decisions: bool = False
    trace_pps_edges: bool = False

    def validate(self) -> None:
        if self.run_duration <= 0:
            raise ScenarioError("[scenario] run_duration_s must be > 0")
        roles = [t.role for t in self.terminals]
        if roles.count(Role.BS) != 1:
            raise ScenarioError("[terminal.*] exactly one terminal must have role = bs")
        stas = self.stas()
        slots = sorted(t.slot for t in stas)
        if slots != list(range(len(stas))):
            raise ScenarioError(
                "[terminal.*] STA slots must be exactly 0..N-1 without repeats"
            )
        if not self.sync_only and stas:
            # Construction checks the AP block fits the period.
            self.schedule_for(stas[0])

    def bs(self) -> TerminalSpec:
        return next(t for t in self.terminals if t.role is Role.BS)

    def stas(self) -> list[TerminalSpec]:
        return sorted(
            (t for t in self.terminals if t.role is Role.STA), key=lambda t: t.slot
        )

    def schedule_for(self, sta: TerminalSpec) -> APSchedule:
        return APSchedule(
            ap_duration=self.ap_duration,
            ap_offset=self.ap_offset,
            terminal_index=sta.slot,
            terminals_per_cycle=max(1, len(self.stas())),
            period=self.period,
        )

    def with_overrides(self, **kwargs) -> "Scenario":
        return replace(self, **kwargs)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _get(parser, section: str, key: str, convert, default=None, required=False):
    if not parser.has_option(section, key):
        if required:
            raise ScenarioError(f"[{section}] missing required key {key!r}")
        return default
    raw = parser.get(section, key)
    try:
        return convert(raw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"[{section}] {key} = {raw!r}: {exc}") from None


def _pair(raw: str) -> tuple[float, float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return (float(parts[0]), float(parts[1]))


def _floats(raw: str) -> tuple[float, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(float(p.strip()) for p in raw.split(","))


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _parse_trajectory(parser, section: str) -> Trajectory:
    kind_raw = _get(parser, section, "kind", str, required=True)
    try:
        kind = TrajectoryKind(kind_raw.strip())
    except ValueError:
        raise ScenarioError(
            f"[{section}] kind = {kind_raw!r}: choose from "
            f"{[k.value for k in TrajectoryKind]}"
        ) from None
    if kind is TrajectoryKind.STATIC:
        return Trajectory(kind=kind, position=_get(parser, section, "position_m", _pair, (0.0, 0.0)))
    if kind is TrajectoryKind.LINEAR_BACK_AND_FORTH:
        return Trajectory(
            kind=kind,
            position=_get(parser, section, "start_m", _pair, required=True),
            end=_get(parser, section, "end_m", _pair, required=True),
            speed=_get(parser, section, "speed_mps", float, required=True),
        )
    if kind is TrajectoryKind.CIRCULAR:
        return Trajectory(
            kind=kind,
            center=_get(parser, section, "center_m", _pair, required=True),
            radius=_get(parser, section, "radius_m", float, required=True),
            speed=_get(parser, section, "speed_mps", float, required=True),
            start_angle=_get(parser, section, "start_angle_rad", float, 0.0),
        )
    points_raw = _get(parser, section, "points", str, required=True)
    points = []
    for chunk in points_raw.split(";"):
        vals = [float(p) for p in chunk.split(",")]
        if len(vals) != 3:
            raise ScenarioError(f"[{section}] points: each entry is t,x,y")
        points.append(tuple(vals))
    return Trajectory(kind=kind, waypoints=tuple(points))


def load_scenario(text: str) -> Scenario:
    """Parse scenario text; raises :class:`ScenarioError` with anchors."""
    if not text.strip():
        raise ScenarioError("scenario file is empty")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"unparseable scenario file: {exc}") from None
    if not parser.has_section("scenario"):
        raise ScenarioError("missing [scenario] section")

    sync_raw = _get(parser, "scenario", "sync_mode", str, "synchronized")
    try:
        sync_mode = SyncMode(sync_raw.strip())
    except ValueError:
        raise ScenarioError(
            f"[scenario] sync_mode = {sync_raw!r}: choose synchronized or desynchronized"
        ) from None

    terminals = []
    for section in parser.sections():
        if not section.startswith("terminal."):
            continue
        name = section.split(".", 1)[1]
        role_raw = _get(parser, section, "role", str, required=True)
        try:
            role = Role(role_raw.strip())
        except ValueError:
            raise ScenarioError(f"[{section}] role = {role_raw!r}: choose bs or sta") from None
        traj_section = f"trajectory.{name}"
        trajectory = (
            _parse_trajectory(parser, traj_section)
            if parser.has_section(traj_section)
            else None
        )
        terminals.append(
            TerminalSpec(
                name=name,
                role=role,
                slot=_get(parser, section, "slot", int, 0),
                position=_get(parser, section, "position_m", _pair, (0.0, 0.0)),
                trajectory=trajectory,
                oscillator_preset=_get(parser, section, "oscillator", str, "crystal").strip(),
                y0=_get(parser, section, "y0", float, 0.0),
                x0=_get(parser, section, "x0_s", float, 0.0),
                pps_jitter=_get(parser, section, "pps_jitter_s", float, 0.0),
                arrivals=_get(parser, section, "arrivals_s", _floats, ()),
            )
        )

    channel = ChannelConfig(
        carrier_frequency=_get(parser, "channel", "carrier_frequency_hz", float, 2.4e9),
        symbol_rate=_get(parser, "channel", "symbol_rate", float, 500e3),
        noise_floor=_get(parser, "channel", "noise_floor", float, 1e-10),
        path_loss_model=PathLossModel(
            _get(parser, "channel", "path_loss", str, "free_space").strip()
        ),
        antenna_height=_get(parser, "channel", "antenna_height_m", float, 2.0),
        idle_pilot_level=_get(parser, "channel", "idle_pilot_level", float, 1.0),
        sense_noise_sigma=_get(parser, "channel", "sense_noise_sigma", float, 0.02),
        sense_sample_rate=_get(parser, "channel", "sense_sample_rate", float, 1e7),
        sense_dead_time=_get(parser, "channel", "sense_dead_time_us", float, 1.75) * 1e-6,
        tx_power=_get(parser, "channel", "tx_power", float, 1.0),
    ) if parser.has_section("channel") else ChannelConfig()

    wiwi = WiWiLinkConfig(
        carrier_frequency=_get(parser, "wiwi", "carrier_frequency_hz", float, 920e6),
        carrier_wavelength=_get(parser, "wiwi", "wavelength_m", float, 0.32),
        revision_interval=_get(parser, "wiwi", "revision_interval_s", float, 0.05),
        tx_power_level=_get(parser, "wiwi", "tx_power_level", float, 1.0),
        sync_loss_power_threshold=_get(parser, "wiwi", "power_threshold", float, None),
        timestamp_quantization=_get(parser, "wiwi", "timestamp_quantization_s", float, 1e-9),
        phase_noise_sigma=_get(parser, "wiwi", "phase_noise_rad", float, 0.005),
    ) if parser.has_section("wiwi") else WiWiLinkConfig()

    injections = Injections(
        sync_loss_at=_get(parser, "injections", "sync_loss_at_s", float, None),
        reflection_pulse_times=_get(parser, "injections", "reflection_pulses_s", _floats, ()),
        reflection_ramp_steps=_get(parser, "injections", "reflection_ramp_steps", int, 4),
        reflection_magnitude=_get(
            parser, "injections", "reflection_magnitude_rad", float, 1.2 * math.pi
        ),
    ) if parser.has_section("injections") else Injections()

    scenario = Scenario(
        name=_get(parser, "scenario", "name", str, "scenario").strip(),
        sync_mode=sync_mode,
        run_duration=_get(parser, "scenario", "run_duration_s", float, required=True),
        seed=_get(parser, "scenario", "seed", int, 1),
        warmup=_get(parser, "scenario", "warmup_s", float, 10.0),
        terminals=tuple(terminals),
        ap_duration=_get(parser, "schedule", "ap_duration_us", float, 5.0) * 1e-6,
        ap_offset=_get(parser, "schedule", "ap_offset_us", float, 5.0) * 1e-6,
        period=_get(parser, "schedule", "period_s", float, 1.0),
        queue_len=_get(parser, "mac", "queue_len", int, 10),
        scale_factor=_get(parser, "mac", "scale_factor", float, 2.0),
        dc_offset=_get(parser, "mac", "dc_offset", float, 1.5),
        channel=channel,
        wiwi=wiwi,
        pid_kp=_get(parser, "pid", "kp", float, 8.0),
        pid_ki=_get(parser, "pid", "ki", float, 8.0),
        pid_kd=_get(parser, "pid", "kd", float, 0.0),
        pid_slew_limit=_get(parser, "pid", "slew_limit", float, 2e-5),
        injections=injections,
        telemetry_interval=_get(parser, "scenario", "telemetry_interval_s", float, 1.0),
        phase_sample_interval=_get(parser, "scenario", "phase_sample_interval_s", float, 0.0),
        sync_only=_get(parser, "scenario", "sync_only", _bool, False),
        wiwi_enabled=_get(parser, "scenario", "wiwi_enabled", _bool, True),
        trace_mac_decisions=_get(parser, "scenario", "trace_mac_decisions", _bool, False),
        trace_pps_edges=_get(parser, "scenario", "trace_pps_edges", _bool, False),
    )
    scenario.validate()
    return scenario


def dump_scenario(s: Scenario) -> str:
    """Serialize a scenario back to the file format (stable key order)."""
    parser = configparser.ConfigParser()
    parser["scenario"] = {
        "name": s.name,
        "sync_mode": s.sync_mode.value,
        "run_duration_s": repr(s.run_duration),
        "seed": str(s.seed),
        "warmup_s": repr(s.warmup),
        "telemetry_interval_s": repr(s.telemetry_interval),
        "phase_sample_interval_s": repr(s.phase_sample_interval),
        "sync_only": str(s.sync_only).lower(),
        "wiwi_enabled": str(s.wiwi_enabled).lower(),
        "trace_mac_decisions": str(s.trace_mac_decisions).lower(),
        "trace_pps_edges": str(s.trace_pps_edges).lower(),
    }
    parser["schedule"] = {
        "ap_duration_us": repr(s.ap_duration * 1e6),
        "ap_offset_us": repr(s.ap_offset * 1e6),
        "period_s": repr(s.period),
    }
    parser["mac"] = {
        "queue_len": str(s.queue_len),
        "scale_factor": repr(s.scale_factor),
        "dc_offset": repr(s.dc_offset),
    }
    parser["pid"] = {
        "kp": repr(s.pid_kp),
        "ki": repr(s.pid_ki),
        "kd": repr(s.pid_kd),
        "slew_limit": repr(s.pid_slew_limit),
    }
    ch = s.channel
    parser["channel"] = {
        "carrier_frequency_hz": repr(ch.carrier_frequency),
        "symbol_rate": repr(ch.symbol_rate),
        "noise_floor": repr(ch.noise_floor),
        "path_loss": ch.path_loss_model.value,
        "antenna_height_m": repr(ch.antenna_height),
        "idle_pilot_level": repr(ch.idle_pilot_level),
        "sense_noise_sigma": repr(ch.sense_noise_sigma),
        "sense_sample_rate": repr(ch.sense_sample_rate),
        "sense_dead_time_us": repr(ch.sense_dead_time * 1e6),
        "tx_power": repr(ch.tx_power),
    }
    ww = s.wiwi
    parser["wiwi"] = {
        "carrier_frequency_hz": repr(ww.carrier_frequency),
        "wavelength_m": repr(ww.carrier_wavelength),
        "revision_interval_s": repr(ww.revision_interval),
        "tx_power_level": repr(ww.tx_power_level),
        "timestamp_quantization_s": repr(ww.timestamp_quantization),
        "phase_noise_rad": repr(ww.phase_noise_sigma),
    }
    if ww.sync_loss_power_threshold is not None:
        parser["wiwi"]["power_threshold"] = repr(ww.sync_loss_power_threshold)
    inj = s.injections
    if inj.sync_loss_at is not None or inj.reflection_pulse_times:
        parser["injections"] = {}
        if inj.sync_loss_at is not None:
            parser["injections"]["sync_loss_at_s"] = repr(inj.sync_loss_at)
        if inj.reflection_pulse_times:
            parser["injections"]["reflection_pulses_s"] = ", ".join(
                repr(t) for t in inj.reflection_pulse_times
            )
            parser["injections"]["reflection_ramp_steps"] = str(inj.reflection_ramp_steps)
            parser["injections"]["reflection_magnitude_rad"] = repr(inj.reflection_magnitude)
    for t in s.terminals:
        sec = f"terminal.{t.name}"
        parser[sec] = {
            "role": t.role.value,
            "slot": str(t.slot),
            "position_m": f"{t.position[0]!r}, {t.position[1]!r}",
            "oscillator": t.oscillator_preset,
            "y0": repr(t.y0),
            "x0_s": repr(t.x0),
            "pps_jitter_s": repr(t.pps_jitter),
        }
        if t.arrivals:
            parser[sec]["arrivals_s"] = ", ".join(repr(a) for a in t.arrivals)
        traj = t.trajectory
        if traj is not None:
            tsec = f"trajectory.{t.name}"
            if traj.kind is TrajectoryKind.STATIC:
                parser[tsec] = {"kind": traj.kind.value, "position_m": f"{traj.position[0]!r}, {traj.position[1]!r}"}
            elif traj.kind is TrajectoryKind.LINEAR_BACK_AND_FORTH:
                parser[tsec] = {
                    "kind": traj.kind.value,
                    "start_m": f"{traj.position[0]!r}, {traj.position[1]!r}",
                    "end_m": f"{traj.end[0]!r}, {traj.end[1]!r}",
                    "speed_mps": repr(traj.speed),
                }
            elif traj.kind is TrajectoryKind.CIRCULAR:
                parser[tsec] = {
                    "kind": traj.kind.value,
                    "center_m": f"{traj.center[0]!r}, {traj.center[1]!r}",
                    "radius_m": repr(traj.radius),
                    "speed_mps": repr(traj.speed),
                    "start_angle_rad": repr(traj.start_angle),
                }
            else:
                parser[tsec] = {
                    "kind": traj.kind.value,
                    "points": "; ".join(f"{p[0]!r},{p[1]!r},{p[2]!r}" for p in traj.waypoints),
                }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
