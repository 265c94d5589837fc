"""Built-in experiment presets and their plot-data emission.

Each preset expands into one or more named scenario points; running a preset
produces one trace per point plus CSV plot data shaped like the figures the
desk-scale experiments are compared against:

- ``ap-sweep``: mean BER versus arbitration-window duration, offset fixed
  at 100 us, durations 1..4096 us in powers of two.
- ``distance-sweep``: BER and sync-link power versus the mobile terminal's
  lateral position on the bisector geometry; link power is raised for the
  far points where the default level drops below the loss threshold.
- ``mobility-linear`` / ``mobility-circular``: a walking-speed terminal on
  a line or circle; the circular run injects the unexplained mid-run sync
  loss; the linear run can carry reflection-slip pulses.
- ``sync-compare``: identical geometry with disciplined versus free-running
  references; the free-running arm drifts through all arbitration regimes.
- ``allan``: three oscillator pairings sampled for deviation analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

from .analysis import distance_error_series
from .scenario import Injections, Role, Scenario, SyncMode, TerminalSpec
from .timebase import PhaseRecord, allan_deviation
from .timesync import WiWiLinkConfig, free_space_gain, link_power_ok
from .phy import ChannelConfig, PathLossModel
from .trace import SimTrace, csv_text
from .trajectory import Trajectory, TrajectoryKind

PPS_JITTER_SIGMA = 400e-9 / 3.0  # published 3-sigma figure


def _bs(name: str = "bs", **kw) -> TerminalSpec:
    return TerminalSpec(name=name, role=Role.BS, **kw)


def _sta(name: str, slot: int, jitter: bool = True, **kw) -> TerminalSpec:
    kw.setdefault("pps_jitter", PPS_JITTER_SIGMA if jitter else 0.0)
    return TerminalSpec(name=name, role=Role.STA, slot=slot, **kw)


def _triangle_terminals(jitter: bool = True) -> tuple[TerminalSpec, ...]:
    """Equilateral triangle, 5 m sides: the fixed-position geometry."""
    return (
        _bs(position=(0.0, 0.0)),
        _sta("sta1", 0, jitter=jitter, position=(5.0, 0.0)),
        _sta("sta2", 1, jitter=jitter, position=(2.5, 4.330127018922193)),
    )


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    build: Callable[[int, float | None], list[tuple[str, Scenario]]]
    plotdata: Callable[[list[tuple[str, SimTrace]]], dict[str, str]]


def _dur(default: float, override: float | None) -> float:
    return default if override is None else override


# -- ap-sweep ---------------------------------------------------------------

AP_SWEEP_DURATIONS_US = tuple(2**k for k in range(13))  # 1 .. 4096 us


def _build_ap_sweep(seed: int, duration: float | None):
    points = []
    for us in AP_SWEEP_DURATIONS_US:
        points.append(
            (
                f"ap_duration_{us}us",
                Scenario(
                    name=f"ap-sweep/{us}us",
                    sync_mode=SyncMode.SYNCHRONIZED,
                    run_duration=_dur(300.0, duration),
                    seed=seed + us,
                    warmup=30.0,
                    terminals=_triangle_terminals(),
                    ap_duration=us * 1e-6,
                    ap_offset=100e-6,
                ),
            )
        )
    return points


def _plot_ap_sweep(results):
    rows = []
    for name, trace in results:
        us = float(name.split("_")[2].removesuffix("us"))
        s = trace.summary()
        rows.append([us, s["mean_ber"], s["max_ber"], s["packets"], s["collisions"]])
    rows.sort(key=lambda r: r[0])
    return {
        "ber_vs_ap_duration.csv": csv_text(
            ["ap_duration_us", "mean_ber", "max_ber", "packets", "collisions"], rows
        )
    }


# -- distance-sweep ---------------------------------------------------------

DISTANCE_SWEEP_LATERAL_M = tuple(range(0, 20, 2))  # 0 .. 18 m


def _distance_geometry(lateral: float) -> tuple[float, tuple[float, float]]:
    """STA 1 sits on the bisector of the 5 m BS-STA2 baseline."""
    position = (2.5, float(lateral))
    d_bs = math.hypot(2.5, lateral)
    return d_bs, position


# Antennas stood about two metres high; 2.03 m puts the ground-bounce null
# of the two-ray model at the 16 m position where the dropout was observed.
DISTANCE_SWEEP_ANTENNA_HEIGHT = 2.03


def _build_distance_sweep(seed: int, duration: float | None):
    points = []
    for lateral in DISTANCE_SWEEP_LATERAL_M:
        d_bs, position = _distance_geometry(lateral)
        wiwi = WiWiLinkConfig()
        # Mirror the hardware procedure: raise the sync-link power once the
        # default level would drop below the loss threshold.
        if not link_power_ok(d_bs, wiwi):
            wiwi = replace(wiwi, tx_power_level=4.0)
        points.append(
            (
                f"lateral_{lateral}m",
                Scenario(
                    name=f"distance-sweep/{lateral}m",
                    sync_mode=SyncMode.SYNCHRONIZED,
                    run_duration=_dur(300.0, duration),
                    seed=seed + lateral,
                    warmup=30.0,
                    terminals=(
                        _bs(position=(0.0, 0.0)),
                        _sta("sta1", 0, position=position),
                        _sta("sta2", 1, position=(5.0, 0.0)),
                    ),
                    ap_duration=5e-6,
                    ap_offset=5e-6,
                    channel=ChannelConfig(
                        path_loss_model=PathLossModel.TWO_RAY_GROUND,
                        antenna_height=DISTANCE_SWEEP_ANTENNA_HEIGHT,
                    ),
                    wiwi=wiwi,
                ),
            )
        )
    return points


def _plot_distance_sweep(results):
    ber_rows = []
    power_rows = []
    default_wiwi = WiWiLinkConfig()
    for name, trace in results:
        lateral = float(name.split("_")[1].removesuffix("m"))
        d_bs, _ = _distance_geometry(lateral)
        done = [p for p in trace.packets if not p.truncated and p.ber is not None]
        sta1 = [p.ber for p in done if p.source == 1]
        ber_rows.append(
            [lateral, d_bs, (sum(sta1) / len(sta1)) if sta1 else None, len(sta1)]
        )
        rx = default_wiwi.tx_power_level * free_space_gain(
            max(d_bs, 1e-3), default_wiwi.carrier_wavelength
        )
        power_rows.append(
            [lateral, d_bs, rx, 10.0 * math.log10(rx), link_power_ok(d_bs, default_wiwi)]
        )
    ber_rows.sort(key=lambda r: r[0])
    power_rows.sort(key=lambda r: r[0])
    return {
        "ber_vs_distance.csv": csv_text(
            ["lateral_m", "bs_sta1_distance_m", "mean_ber_sta1", "packets_sta1"], ber_rows
        ),
        "wiwi_power_vs_distance.csv": csv_text(
            ["lateral_m", "bs_sta1_distance_m", "rx_power", "rx_power_db", "default_power_ok"],
            power_rows,
        ),
    }


# -- mobility ---------------------------------------------------------------


def _mobility_base(seed: int, duration: float, traj: Trajectory, injections: Injections):
    # Mobility runs use the adaptive-sensing knobs published for moving
    # terminals: short record queue, large threshold scale.
    return Scenario(
        name="mobility",
        sync_mode=SyncMode.SYNCHRONIZED,
        run_duration=duration,
        seed=seed,
        warmup=20.0,
        terminals=(
            _bs(position=(0.0, 0.0)),
            _sta("sta1", 0, trajectory=traj, y0=2.2e-6),
            _sta("sta2", 1, position=(2.5, 4.330127018922193), y0=-1.8e-6),
        ),
        ap_duration=10e-6,
        ap_offset=10e-6,
        queue_len=3,
        scale_factor=5.0,
        dc_offset=1.2,
        injections=injections,
    )


def _build_mobility_linear(seed: int, duration: float | None):
    traj = Trajectory(
        kind=TrajectoryKind.LINEAR_BACK_AND_FORTH,
        position=(3.0, 0.0),
        end=(9.0, 0.0),
        speed=1.2,
    )
    sc = _mobility_base(seed, _dur(240.0, duration), traj, Injections())
    return [("linear", replace(sc, name="mobility-linear"))]


def _build_mobility_circular(seed: int, duration: float | None):
    traj = Trajectory(
        kind=TrajectoryKind.CIRCULAR, center=(2.5, 5.0), radius=2.0, speed=1.2
    )
    dur = _dur(240.0, duration)
    inj = Injections(sync_loss_at=150.0 if dur > 150.0 else None)
    sc = _mobility_base(seed, dur, traj, inj)
    return [("circular", replace(sc, name="mobility-circular"))]


def _plot_mobility(results):
    name, trace = results[0]
    dist_rows = [
        [rec.t, rec.ld_wiwi, rec.ld_truth, rec.wiwi_status]
        for rec in trace.telemetry
    ]
    ber_rows = [
        [p.t, p.source, p.ber, p.header_valid]
        for p in trace.packets
        if not p.truncated
    ]
    series, max_abs = distance_error_series(trace)
    err_rows = [[t, e] for t, e in series]
    return {
        "distance_timeseries.csv": csv_text(
            ["t_s", "ld_wiwi_m", "ld_truth_m", "wiwi_status"], dist_rows
        ),
        "ber_timeseries.csv": csv_text(["t_s", "source", "ber", "header_valid"], ber_rows),
        "distance_error.csv": csv_text(["t_s", "error_m"], err_rows),
    }


# -- sync-compare -----------------------------------------------------------


def _build_sync_compare(seed: int, duration: float | None):
    synchronized = Scenario(
        name="sync-compare/synchronized",
        sync_mode=SyncMode.SYNCHRONIZED,
        run_duration=_dur(300.0, duration),
        seed=seed,
        warmup=30.0,
        terminals=_triangle_terminals(),
        ap_duration=5e-6,
        ap_offset=5e-6,
    )
    desynchronized = Scenario(
        name="sync-compare/desynchronized",
        sync_mode=SyncMode.DESYNCHRONIZED,
        run_duration=_dur(180.0, duration),
        seed=seed + 1,
        warmup=0.0,
        terminals=(
            _bs(position=(0.0, 0.0)),
            _sta("sta1", 0, jitter=False, position=(5.0, 0.0), y0=3.4e-6, x0=-40e-6),
            _sta("sta2", 1, jitter=False, position=(2.5, 4.330127018922193), y0=2.6e-6),
        ),
        ap_duration=5e-6,
        ap_offset=5e-6,
    )
    return [("synchronized", synchronized), ("desynchronized", desynchronized)]


def _plot_sync_compare(results):
    artifacts = {}
    for name, trace in results:
        pps_rows = [
            [rec.t, rec.pps_diff] for rec in trace.telemetry if rec.pps_diff is not None
        ]
        ber_rows = [
            [p.t, p.source, p.ber, p.header_valid, p.collided]
            for p in trace.packets
            if not p.truncated
        ]
        artifacts[f"pps_diff_{name}.csv"] = csv_text(["t_s", "pps_diff_s"], pps_rows)
        artifacts[f"ber_timeseries_{name}.csv"] = csv_text(
            ["t_s", "source", "ber", "header_valid", "collided"], ber_rows
        )
        if trace.regimes:
            regime_rows = [
                [r.t_start, r.t_end, r.label, r.n_packets, r.n_collided]
                for r in trace.regimes
            ]
            artifacts[f"regimes_{name}.csv"] = csv_text(
                ["t_start_s", "t_end_s", "label", "packets", "collided"], regime_rows
            )
    return artifacts


# -- allan ------------------------------------------------------------------

ALLAN_PAIRS = (
    ("free_pair", "rubidium", "rubidium", SyncMode.DESYNCHRONIZED),
    ("disciplined_pair", "crystal", "crystal", SyncMode.SYNCHRONIZED),
    ("mixed_pair", "rubidium", "crystal", SyncMode.DESYNCHRONIZED),
)
ALLAN_SETTLE_S = 200.0


def _build_allan(seed: int, duration: float | None):
    points = []
    for idx, (name, ref, dut, mode) in enumerate(ALLAN_PAIRS):
        points.append(
            (
                name,
                Scenario(
                    name=f"allan/{name}",
                    sync_mode=mode,
                    run_duration=_dur(10_000.0, duration),
                    seed=seed + idx,
                    sync_only=True,
                    phase_sample_interval=0.1,
                    telemetry_interval=100.0,
                    terminals=(
                        _bs(name="ref", oscillator_preset=ref, position=(0.0, 0.0)),
                        _sta("dut", 0, jitter=False, oscillator_preset=dut, position=(1.0, 0.0)),
                    ),
                ),
            )
        )
    return points


def allan_taus(n_samples: int, interval: float) -> list[float]:
    """Decade grid of taus representable on the sample grid and long record."""
    candidates = []
    for exponent in range(-1, 5):
        for mantissa in (1.0, 2.0, 5.0):
            candidates.append(mantissa * 10.0**exponent)
    out = []
    for tau in candidates:
        m = round(tau / interval)
        if m >= 1 and abs(m * interval - tau) < 1e-9 and n_samples - 2 * m >= 8:
            out.append(m * interval)
    return out


def _plot_allan(results):
    artifacts = {}
    combined = []
    for name, trace in results:
        interval, samples = trace.phase_samples["dut"]
        settled = samples[int(ALLAN_SETTLE_S / interval) :]
        taus = allan_taus(settled.size, interval)
        res = allan_deviation(PhaseRecord(interval, settled, 10e6), taus)
        rows = [[t, d] for t, d in zip(res.taus.tolist(), res.deviations.tolist())]
        artifacts[f"adev_{name}.csv"] = csv_text(["tau_s", "adev"], rows)
        combined.extend([[name, t, d] for t, d in rows])
    artifacts["adev.csv"] = csv_text(["pair", "tau_s", "adev"], combined)
    return artifacts


PRESETS: dict[str, Preset] = {
    "ap-sweep": Preset(
        "ap-sweep",
        "BER vs arbitration-window duration (1..4096 us, offset 100 us)",
        _build_ap_sweep,
        _plot_ap_sweep,
    ),
    "distance-sweep": Preset(
        "distance-sweep",
        "BER and sync-link power vs mobile-terminal distance (bisector geometry)",
        _build_distance_sweep,
        _plot_distance_sweep,
    ),
    "mobility-linear": Preset(
        "mobility-linear",
        "Walking-speed terminal on a radial line; distance tracked by the sync link",
        _build_mobility_linear,
        _plot_mobility,
    ),
    "mobility-circular": Preset(
        "mobility-circular",
        "Walking-speed terminal on a circle with a scripted mid-run sync loss",
        _build_mobility_circular,
        _plot_mobility,
    ),
    "sync-compare": Preset(
        "sync-compare",
        "Same geometry with disciplined vs free-running references",
        _build_sync_compare,
        _plot_sync_compare,
    ),
    "allan": Preset(
        "allan",
        "Deviation analysis of free, disciplined and mixed oscillator pairs",
        _build_allan,
        _plot_allan,
    ),
}
